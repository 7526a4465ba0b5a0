//! Slope- and heading-dependent wrench model.
//!
//! Each wrench component is a linear combination of the basis
//! `{1, α, α·cosγ, α·|sinγ|}`. Every heading-dependent term carries a factor
//! of `α`, so the model is isotropic on level ground, and only `cosγ` and
//! `|sinγ|` appear, so headings `γ` and `2π − γ` cost the same.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::se2::Twist;
use crate::terrain::SlopeFrame;

pub const BASIS_LEN: usize = 4;
pub const DEFAULT_F_MAX: f64 = 500.0;
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Fx,
    Fy,
    Tau,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Fx, Component::Fy, Component::Tau];

    pub fn as_str(&self) -> &'static str {
        match self {
            Component::Fx => "fx",
            Component::Fy => "fy",
            Component::Tau => "tau",
        }
    }

    pub fn parse(s: &str) -> Option<Component> {
        match s {
            "fx" => Some(Component::Fx),
            "fy" => Some(Component::Fy),
            "tau" => Some(Component::Tau),
            _ => None,
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Basis values `[1, α, α·cosγ, α·|sinγ|]` at a slope frame.
pub fn basis(frame: &SlopeFrame) -> [f64; BASIS_LEN] {
    let a = frame.alpha;
    let (s, c) = frame.gamma.sin_cos();
    [1.0, a, a * c, a * s.abs()]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub tau: f64,
}

impl Wrench {
    pub fn new(fx: f64, fy: f64, tau: f64) -> Self {
        Self { fx, fy, tau }
    }

    pub fn get(&self, c: Component) -> f64 {
        match c {
            Component::Fx => self.fx,
            Component::Fy => self.fy,
            Component::Tau => self.tau,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.fx.is_finite() && self.fy.is_finite() && self.tau.is_finite()
    }
}

/// One value per wrench component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerComponent<T> {
    pub fx: T,
    pub fy: T,
    pub tau: T,
}

impl<T> PerComponent<T> {
    pub fn get(&self, c: Component) -> &T {
        match c {
            Component::Fx => &self.fx,
            Component::Fy => &self.fy,
            Component::Tau => &self.tau,
        }
    }

    pub fn get_mut(&mut self, c: Component) -> &mut T {
        match c {
            Component::Fx => &mut self.fx,
            Component::Fy => &mut self.fy,
            Component::Tau => &mut self.tau,
        }
    }
}

pub type BasisMasks = PerComponent<[bool; BASIS_LEN]>;
pub type Coefficients = PerComponent<[f64; BASIS_LEN]>;

impl Default for BasisMasks {
    fn default() -> Self {
        PerComponent {
            fx: [true, true, true, false],
            fy: [true, true, false, false],
            tau: [true, true, false, false],
        }
    }
}

impl Default for Coefficients {
    fn default() -> Self {
        PerComponent {
            fx: [0.0; BASIS_LEN],
            fy: [0.0; BASIS_LEN],
            tau: [0.0; BASIS_LEN],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// `P = fx·vx + fy·vy + τ·ω`
    Literal,
    /// `P = fx·|vx| + fy·|vy| + τ·|ω|`
    #[default]
    Dissipative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionAxis {
    Forward,
    Lateral,
    Rotation,
}

impl MotionAxis {
    pub fn unit_twist(&self) -> Twist {
        match self {
            MotionAxis::Forward => Twist::new(1.0, 0.0, 0.0),
            MotionAxis::Lateral => Twist::new(0.0, 1.0, 0.0),
            MotionAxis::Rotation => Twist::new(0.0, 0.0, 1.0),
        }
    }
}

fn default_schema_version() -> u32 {
    MODEL_SCHEMA_VERSION
}

fn default_f_max() -> f64 {
    DEFAULT_F_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrenchModel {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub basis_masks: BasisMasks,
    pub coeffs: Coefficients,
    #[serde(default)]
    pub eval_mode: EvalMode,
    #[serde(default)]
    pub idle_power_w: f64,
    /// Range of slopes the model was fitted on, in degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_fit_range_deg: Option<[f64; 2]>,
    #[serde(default = "default_f_max")]
    pub f_max: f64,
}

impl Default for WrenchModel {
    fn default() -> Self {
        Self::new(Coefficients::default())
    }
}

/// Result of evaluating the model, with a flag set when a component hit `f_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub wrench: Wrench,
    pub capped: bool,
}

impl WrenchModel {
    pub fn new(coeffs: Coefficients) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            basis_masks: BasisMasks::default(),
            coeffs,
            eval_mode: EvalMode::default(),
            idle_power_w: 0.0,
            alpha_fit_range_deg: None,
            f_max: DEFAULT_F_MAX,
        }
    }

    pub fn with_masks(mut self, masks: BasisMasks) -> Self {
        self.basis_masks = masks;
        self
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Self {
        self.eval_mode = mode;
        self
    }

    pub fn with_idle_power(mut self, idle_power_w: f64) -> Self {
        self.idle_power_w = idle_power_w;
        self
    }

    /// Reference model: forward 40 N + 30 N/rad·α + 120 N/rad·α·cosγ,
    /// lateral 70 N + 150 N/rad·α, yaw 5 N·m + 20 N·m/rad·α.
    pub fn reference() -> Self {
        Self::new(PerComponent {
            fx: [40.0, 30.0, 120.0, 0.0],
            fy: [70.0, 150.0, 0.0, 0.0],
            tau: [5.0, 20.0, 0.0, 0.0],
        })
    }

    fn raw_component(&self, c: Component, b: &[f64; BASIS_LEN]) -> f64 {
        let mask = self.basis_masks.get(c);
        let coeffs = self.coeffs.get(c);
        (0..BASIS_LEN).filter(|&i| mask[i]).map(|i| coeffs[i] * b[i]).sum()
    }

    pub fn evaluate_checked(&self, frame: &SlopeFrame) -> Evaluation {
        let b = basis(frame);
        let mut capped = false;
        let mut cap = |v: f64| {
            if v.abs() > self.f_max {
                capped = true;
                v.clamp(-self.f_max, self.f_max)
            } else {
                v
            }
        };
        let wrench = Wrench::new(
            cap(self.raw_component(Component::Fx, &b)),
            cap(self.raw_component(Component::Fy, &b)),
            cap(self.raw_component(Component::Tau, &b)),
        );
        Evaluation { wrench, capped }
    }

    pub fn evaluate(&self, frame: &SlopeFrame) -> Wrench {
        self.evaluate_checked(frame).wrench
    }

    /// Power drawn for a wrench and twist in this model's mode, including idle draw.
    pub fn power_from_wrench(&self, w: &Wrench, twist: &Twist) -> f64 {
        let motion = match self.eval_mode {
            EvalMode::Literal => w.fx * twist.vx + w.fy * twist.vy + w.tau * twist.omega,
            EvalMode::Dissipative => {
                w.fx * twist.vx.abs() + w.fy * twist.vy.abs() + w.tau * twist.omega.abs()
            }
        };
        motion + self.idle_power_w
    }

    pub fn power(&self, frame: &SlopeFrame, twist: &Twist) -> f64 {
        self.power_from_wrench(&self.evaluate(frame), twist)
    }

    /// Energy per unit of motion along `axis` (N for translation, N·m for rotation), idle draw excluded.
    pub fn unit_cost(&self, frame: &SlopeFrame, axis: MotionAxis) -> f64 {
        self.power(frame, &axis.unit_twist()) - self.idle_power_w
    }

    /// True when `alpha` lies outside the recorded fitting range.
    pub fn extrapolates(&self, alpha: f64) -> bool {
        match self.alpha_fit_range_deg {
            Some([lo, hi]) => {
                let deg = alpha.to_degrees();
                deg < lo - 1e-9 || deg > hi + 1e-9
            }
            None => false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn export_cost_map(&self, alphas: &[f64], gammas: &[f64], axis: MotionAxis) -> CostMap {
        let values = alphas
            .iter()
            .map(|&a| {
                gammas
                    .iter()
                    .map(|&g| {
                        let frame = SlopeFrame {
                            alpha: a,
                            gamma: crate::se2::wrap_two_pi(g),
                        };
                        self.unit_cost(&frame, axis)
                    })
                    .collect()
            })
            .collect();
        CostMap {
            alphas: alphas.to_vec(),
            gammas: gammas.to_vec(),
            axis,
            values,
        }
    }
}

/// Per-unit-motion cost sampled on an `(α, γ)` grid; rows are slopes, columns headings.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub axis: MotionAxis,
    pub values: Vec<Vec<f64>>,
}

impl CostMap {
    /// Header row of headings in degrees; first column holds slopes in degrees.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "alpha_deg")?;
        for g in &self.gammas {
            write!(out, ",{}", g.to_degrees())?;
        }
        writeln!(out)?;
        for (a, row) in self.alphas.iter().zip(&self.values) {
            write!(out, "{}", a.to_degrees())?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Evenly spaced samples from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
