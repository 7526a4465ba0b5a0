//! Planar rigid-body poses and body-frame twists.
//!
//! A [`Pose`] is an element of SE(2) stored as `(x, y, yaw)`; a [`Twist`]
//! holds the body-frame velocity coordinates `(vx, vy, omega)`. The group
//! exponential integrates a constant twist for a duration, the logarithm
//! inverts it on the principal branch.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this rotation angle the exp/log translation terms use their series.
pub const SMALL_ANGLE: f64 = 1e-8;

const BRANCH_CUT_MARGIN: f64 = 1e-6;

/// Wraps an angle into `(-pi, pi]`. Angles already in range are returned untouched.
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_two_pi(a: f64) -> f64 {
    if (0.0..2.0 * PI).contains(&a) {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2pi for tiny negative inputs
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
        }
    }

    /// `self ∘ other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        Pose::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )
    }

    pub fn inverse(&self) -> Pose {
        let (s, c) = self.yaw.sin_cos();
        Pose::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.yaw,
        )
    }

    /// Relative transform `self⁻¹ ∘ other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn log(&self) -> Result<Twist> {
        log(self)
    }

    /// Largest of the translation distance and the wrapped yaw difference.
    pub fn distance_to(&self, other: &Pose) -> f64 {
        let dp = (self.x - other.x).hypot(self.y - other.y);
        let dyaw = normalize_angle(self.yaw - other.yaw).abs();
        dp.max(dyaw)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist {
    pub const fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn scale(&self, k: f64) -> Twist {
        Twist::new(self.vx * k, self.vy * k, self.omega * k)
    }

    pub fn add(&self, other: &Twist) -> Twist {
        Twist::new(
            self.vx + other.vx,
            self.vy + other.vy,
            self.omega + other.omega,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.vx, self.vy, self.omega]
    }

    pub fn norm_inf(&self) -> f64 {
        self.vx.abs().max(self.vy.abs()).max(self.omega.abs())
    }
}

/// Returns `(sin θ / θ, (1 - cos θ) / θ)`.
fn exp_coefficients(theta: f64) -> (f64, f64) {
    if theta.abs() < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0)
    } else {
        let h = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * h * h / theta)
    }
}

/// Pose reached from the identity by holding `xi` for `dt` seconds.
pub fn exp(xi: &Twist, dt: f64) -> Pose {
    let ux = xi.vx * dt;
    let uy = xi.vy * dt;
    let theta = xi.omega * dt;
    let (a, b) = exp_coefficients(theta);
    Pose::new(a * ux - b * uy, b * ux + a * uy, theta)
}

/// Unit-time twist whose exponential is `p`.
pub fn log(p: &Pose) -> Result<Twist> {
    let theta = p.yaw;
    if theta.abs() >= PI - BRANCH_CUT_MARGIN {
        return Err(Error::YawAtBranchCut { yaw: theta });
    }
    let (a, b) = exp_coefficients(theta);
    let det = a * a + b * b;
    Ok(Twist::new(
        (a * p.x + b * p.y) / det,
        (-b * p.x + a * p.y) / det,
        theta,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedTwist {
    pub t: f64,
    pub twist: Twist,
}

/// Body-frame velocity along a sampled trajectory.
///
/// Entry `i` carries `log(Pᵢ⁻¹ ∘ Pᵢ₊₁) / (tᵢ₊₁ - tᵢ)`, the mean twist over
/// `[tᵢ, tᵢ₊₁]`, stamped with `tᵢ`. That value is second-order accurate at the
/// interval midpoint `(tᵢ + tᵢ₊₁) / 2`. The last entry repeats the previous twist.
pub fn body_velocity(poses: &[TimedPose]) -> Result<Vec<TimedTwist>> {
    if poses.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: poses.len(),
        });
    }
    let mut out = Vec::with_capacity(poses.len());
    for (i, pair) in poses.windows(2).enumerate() {
        let dt = pair[1].t - pair[0].t;
        if !(dt > 0.0) {
            return Err(Error::NonMonotonicTime { at: i + 1 });
        }
        let rel = pair[0].pose.between(&pair[1].pose);
        let xi = log(&rel)?.scale(1.0 / dt);
        out.push(TimedTwist {
            t: pair[0].t,
            twist: xi,
        });
    }
    let last = out[out.len() - 1].twist;
    out.push(TimedTwist {
        t: poses[poses.len() - 1].t,
        twist: last,
    });
    Ok(out)
}
