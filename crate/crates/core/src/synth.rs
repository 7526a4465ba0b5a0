//! Synthetic telemetry with a known ground-truth wrench model.
//!
//! Each leg drives a constant body twist on a uniform plane whose uphill
//! direction is world +x, so a body yaw of `-gamma` puts the robot at slope
//! heading `gamma`. Legs are separated by short stationary pauses.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{step_count, PathSpec};
use crate::se2::{exp, Pose, Twist};
use crate::telemetry::{write_log, TelemetrySample};
use crate::terrain::{SlopeFrame, Terrain};
use crate::wrench::{MotionAxis, WrenchModel};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
pub const BATTERY_VOLTAGE: f64 = 50.0;
pub const GRAVITY: f64 = 9.81;

fn default_speed() -> f64 {
    0.3
}

fn default_duration() -> f64 {
    10.0
}

fn default_repeats() -> usize {
    1
}

fn default_rate() -> f64 {
    50.0
}

fn default_pause() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leg {
    pub alpha_deg: f64,
    /// Slope heading at the start of the leg.
    pub gamma_deg: f64,
    pub motion: MotionAxis,
    /// m/s for translations, rad/s for rotations.
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

impl Leg {
    pub fn new(alpha_deg: f64, gamma_deg: f64, motion: MotionAxis) -> Self {
        let speed = if motion == MotionAxis::Rotation { 0.5 } else { default_speed() };
        Self {
            alpha_deg,
            gamma_deg,
            motion,
            speed,
            duration_s: default_duration(),
            repeats: default_repeats(),
        }
    }

    pub fn twist(&self) -> Twist {
        self.motion.unit_twist().scale(self.speed)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Noise {
    pub power_mult_sigma: f64,
    pub twist_add_sigma: f64,
    pub gravity_add_sigma: f64,
}

impl Noise {
    pub fn power(sigma: f64) -> Self {
        Self {
            power_mult_sigma: sigma,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub ground_truth: WrenchModel,
    pub legs: Vec<Leg>,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
    /// Stationary time inserted before every leg.
    #[serde(default = "default_pause")]
    pub pause_s: f64,
}

impl Scenario {
    pub fn new(ground_truth: WrenchModel, legs: Vec<Leg>) -> Self {
        Self {
            ground_truth,
            legs,
            noise: Noise::default(),
            sample_rate_hz: default_rate(),
            seed: 0,
            pause_s: default_pause(),
        }
    }

    /// Slopes 5..20 deg, headings 0..180 deg in 45 deg steps, three repeats
    /// of every forward leg, plus lateral and rotation legs per slope.
    pub fn default_grid(ground_truth: WrenchModel) -> Self {
        let alphas = [5.0, 10.0, 15.0, 20.0];
        let mut legs = Vec::new();
        for &a in &alphas {
            for g in [0.0, 45.0, 90.0, 135.0, 180.0] {
                legs.push(Leg {
                    repeats: 3,
                    ..Leg::new(a, g, MotionAxis::Forward)
                });
            }
        }
        for &a in &alphas {
            for g in [0.0, 90.0, 180.0] {
                legs.push(Leg::new(a, g, MotionAxis::Lateral));
            }
        }
        for &a in &alphas {
            legs.push(Leg::new(a, 0.0, MotionAxis::Rotation));
        }
        Self::new(ground_truth, legs)
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::InvalidConfig("sample_rate_hz must be > 0".into()));
        }
        if !(self.pause_s >= 0.0 && self.pause_s.is_finite()) {
            return Err(Error::InvalidConfig("pause_s must be >= 0".into()));
        }
        let n = self.noise;
        for s in [n.power_mult_sigma, n.twist_add_sigma, n.gravity_add_sigma] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig("noise sigmas must be >= 0".into()));
            }
        }
        for (i, leg) in self.legs.iter().enumerate() {
            if !(leg.speed > 0.0 && leg.speed.is_finite()) {
                return Err(Error::InvalidConfig(format!("leg {i}: speed must be > 0")));
            }
            if !(leg.duration_s >= 0.0 && leg.duration_s.is_finite()) {
                return Err(Error::InvalidConfig(format!("leg {i}: duration_s must be >= 0")));
            }
            SlopeFrame::from_degrees(leg.alpha_deg, leg.gamma_deg)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegRecord {
    pub leg: usize,
    pub repeat: usize,
    pub alpha_deg: f64,
    pub gamma_deg: f64,
    pub motion: MotionAxis,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub voltage_v: f64,
    pub noise: Noise,
    pub ground_truth: WrenchModel,
    /// Set when the ground truth is the built-in invented fixture.
    pub invented_defaults: bool,
    pub legs: Vec<LegRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub samples: Vec<TelemetrySample>,
    pub manifest: Manifest,
}

impl Generated {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_log(writer, &self.samples)
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// The generator's power integrand; same contract as [`WrenchModel::power`].
pub fn oracle_power(ground_truth: &WrenchModel, frame: &SlopeFrame, twist: &Twist) -> f64 {
    ground_truth.power(frame, twist)
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn normal(&mut self, sigma: f64) -> f64 {
        // always draw so the stream does not depend on which sigmas are zero
        let z: f64 = self.rng.sample(StandardNormal);
        sigma * z
    }
}

fn sample_at(
    model: &WrenchModel,
    noise: &Noise,
    rng: &mut Sampler,
    t: f64,
    alpha: f64,
    pose: Pose,
    twist: Twist,
) -> Result<TelemetrySample> {
    // plane aspect 0, so heading relative to the slope is -yaw
    let frame = SlopeFrame::new(alpha, -pose.yaw)?;
    let power = oracle_power(model, &frame, &twist) * (1.0 + rng.normal(noise.power_mult_sigma));
    let g = frame.gravity_direction();
    let gravity_body = [
        GRAVITY * g[0] + rng.normal(noise.gravity_add_sigma),
        GRAVITY * g[1] + rng.normal(noise.gravity_add_sigma),
        GRAVITY * g[2] + rng.normal(noise.gravity_add_sigma),
    ];
    let measured = Twist::new(
        twist.vx + rng.normal(noise.twist_add_sigma),
        twist.vy + rng.normal(noise.twist_add_sigma),
        twist.omega + rng.normal(noise.twist_add_sigma),
    );
    Ok(TelemetrySample {
        t,
        gravity_body,
        pose,
        twist: measured,
        voltage: BATTERY_VOLTAGE,
        current: power / BATTERY_VOLTAGE,
    })
}

pub fn generate_telemetry(scenario: &Scenario) -> Result<Generated> {
    scenario.validate()?;
    let mut rng = Sampler {
        rng: ChaCha8Rng::seed_from_u64(scenario.seed),
    };
    let dt = 1.0 / scenario.sample_rate_hz;
    let model = &scenario.ground_truth;
    let mut samples = Vec::new();
    let mut records = Vec::new();
    let mut tick: u64 = 0;
    let mut position = (0.0, 0.0);

    for (li, leg) in scenario.legs.iter().enumerate() {
        let n = (leg.duration_s * scenario.sample_rate_hz).round() as u64;
        if n == 0 {
            continue;
        }
        let alpha = leg.alpha_deg.to_radians();
        let twist = leg.twist();
        for rep in 0..leg.repeats {
            let start = Pose::new(position.0, position.1, -leg.gamma_deg.to_radians());
            let n_pause = (scenario.pause_s * scenario.sample_rate_hz).round() as u64;
            for _ in 0..n_pause {
                let s = sample_at(model, &scenario.noise, &mut rng, tick as f64 * dt, alpha, start, Twist::zero())?;
                samples.push(s);
                tick += 1;
            }
            let t0 = tick as f64 * dt;
            let mut last = start;
            for i in 0..n {
                let pose = start.compose(&exp(&twist, i as f64 * dt));
                let s = sample_at(model, &scenario.noise, &mut rng, tick as f64 * dt, alpha, pose, twist)?;
                samples.push(s);
                last = pose;
                tick += 1;
            }
            records.push(LegRecord {
                leg: li,
                repeat: rep,
                alpha_deg: leg.alpha_deg,
                gamma_deg: leg.gamma_deg,
                motion: leg.motion,
                t_start: t0,
                t_end: (tick - 1) as f64 * dt,
                samples: n as usize,
            });
            position = (last.x, last.y);
        }
    }

    Ok(Generated {
        samples,
        manifest: Manifest {
            schema_version: SCENARIO_SCHEMA_VERSION,
            seed: scenario.seed,
            sample_rate_hz: scenario.sample_rate_hz,
            voltage_v: BATTERY_VOLTAGE,
            noise: scenario.noise,
            ground_truth: scenario.ground_truth.clone(),
            invented_defaults: scenario.ground_truth == WrenchModel::reference(),
            legs: records,
        },
    })
}

/// Energy of a path as a noisy power meter would report it: midpoint samples
/// of the model power, each scaled by `1 + sigma * N(0, 1)`.
pub fn measured_path_energy(
    path: &PathSpec,
    terrain: &Terrain,
    model: &WrenchModel,
    dt: f64,
    power_mult_sigma: f64,
    seed: u64,
) -> Result<f64> {
    path.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig("dt must be > 0".into()));
    }
    let mut rng = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut total = 0.0;
    let mut pose = path.start;
    for prim in &path.primitives {
        let duration = prim.duration();
        let twist = prim.twist();
        let n = step_count(duration, dt);
        let h = duration / n as f64;
        for i in 0..n {
            let mid = pose.compose(&exp(&twist, (i as f64 + 0.5) * h));
            let frame = terrain.frame_at(&mid)?;
            total += model.power(&frame, &twist) * (1.0 + rng.normal(power_mult_sigma)) * h;
        }
        pose = pose.compose(&prim.displacement());
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::parse_log;
    use crate::terrain::slope_from_gravity;
    use approx::assert_relative_eq;

    fn one_leg(motion: MotionAxis) -> Scenario {
        Scenario::new(WrenchModel::reference(), vec![Leg::new(10.0, 45.0, motion)])
    }

    #[test]
    fn default_grid_shape() {
        let s = Scenario::default_grid(WrenchModel::reference());
        let forward: usize = s
            .legs
            .iter()
            .filter(|l| l.motion == MotionAxis::Forward)
            .map(|l| l.repeats)
            .sum();
        assert_eq!(forward, 60);
        let g = generate_telemetry(&s).unwrap();
        let fwd_records = g.manifest.legs.iter().filter(|r| r.motion == MotionAxis::Forward).count();
        assert_eq!(fwd_records, 60);
        assert!(g.manifest.invented_defaults);
    }

    #[test]
    fn zero_duration_is_header_only() {
        let mut s = one_leg(MotionAxis::Forward);
        s.legs[0].duration_s = 0.0;
        let g = generate_telemetry(&s).unwrap();
        assert!(g.samples.is_empty());
        assert_eq!(g.csv_string().unwrap().lines().count(), 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = one_leg(MotionAxis::Forward).with_noise(Noise {
            power_mult_sigma: 0.05,
            twist_add_sigma: 0.01,
            gravity_add_sigma: 0.05,
        });
        let a = generate_telemetry(&s.clone().with_seed(7)).unwrap().csv_string().unwrap();
        let b = generate_telemetry(&s.clone().with_seed(7)).unwrap().csv_string().unwrap();
        let c = generate_telemetry(&s.with_seed(8)).unwrap().csv_string().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_free_samples_carry_exact_power() {
        let s = one_leg(MotionAxis::Forward);
        let g = generate_telemetry(&s).unwrap();
        let frame = SlopeFrame::from_degrees(10.0, 45.0).unwrap();
        let expected = oracle_power(&s.ground_truth, &frame, &Twist::new(0.3, 0.0, 0.0));
        let moving: Vec<_> = g.samples.iter().filter(|s| s.twist.vx > 0.0).collect();
        assert_eq!(moving.len(), 500);
        for m in moving {
            assert_relative_eq!(m.electrical_power(), expected, max_relative = 1e-12);
            let f = slope_from_gravity(m.gravity_body).unwrap();
            assert_relative_eq!(f.alpha, frame.alpha, max_relative = 1e-12);
            assert_relative_eq!(f.gamma, frame.gamma, max_relative = 1e-12);
        }
    }

    #[test]
    fn csv_roundtrip_preserves_power() {
        let g = generate_telemetry(&one_leg(MotionAxis::Lateral)).unwrap();
        let parsed = parse_log(g.csv_string().unwrap().as_bytes()).unwrap();
        assert_eq!(parsed.len(), g.samples.len());
        for (a, b) in parsed.iter().zip(&g.samples) {
            assert_relative_eq!(a.electrical_power(), b.electrical_power(), max_relative = 1e-12);
        }
    }

    #[test]
    fn rotation_leg_sweeps_heading() {
        let g = generate_telemetry(&one_leg(MotionAxis::Rotation)).unwrap();
        let last = g.samples.last().unwrap();
        let f = slope_from_gravity(last.gravity_body).unwrap();
        let expected = SlopeFrame::new(10f64.to_radians(), 45f64.to_radians() - 0.5 * 9.98).unwrap();
        assert_relative_eq!(f.gamma, expected.gamma, epsilon = 1e-9);
    }

    #[test]
    fn oracle_power_zero_twist() {
        let m = WrenchModel::reference();
        assert_eq!(oracle_power(&m, &SlopeFrame::level(), &Twist::zero()), 0.0);
    }

    #[test]
    fn leg_energy_is_duration_times_power() {
        let m = WrenchModel::reference();
        let t = Terrain::plane(12f64.to_radians(), 0.0).unwrap();
        let path = PathSpec::new(Pose::new(0.0, 0.0, 0.0), vec![crate::path::Primitive::straight(3.0, 0.3)]);
        let e = measured_path_energy(&path, &t, &m, 0.001, 0.0, 0).unwrap();
        let frame = SlopeFrame::from_degrees(12.0, 0.0).unwrap();
        let p = oracle_power(&m, &frame, &Twist::new(0.3, 0.0, 0.0));
        assert_relative_eq!(e, p * 10.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let mut s = one_leg(MotionAxis::Forward);
        s.legs[0].speed = 0.0;
        assert!(generate_telemetry(&s).is_err());
        let s = one_leg(MotionAxis::Forward).with_noise(Noise::power(-0.1));
        assert!(generate_telemetry(&s).is_err());
    }

    #[test]
    fn scenario_json_defaults() {
        let text = r#"{"ground_truth":{"coeffs":{"fx":[40,0,0,0],"fy":[70,0,0,0],"tau":[5,0,0,0]}},
            "legs":[{"alpha_deg":5,"gamma_deg":0,"motion":"forward"}]}"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.legs[0].speed, 0.3);
        assert_eq!(s.sample_rate_hz, 50.0);
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }
}
