//! Paths built from motion primitives and their energy under a wrench model.
//!
//! Each primitive holds a constant body twist, so the pose at any instant is
//! `start ∘ exp(ξ, t)`. Energy is the time integral of the model power,
//! evaluated with the midpoint rule on the slope frame under the robot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se2::{exp, Pose, Twist};
use crate::terrain::Terrain;
use crate::wrench::WrenchModel;

pub const DEFAULT_DT: f64 = 0.01;
pub const ENDPOINT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyAxis {
    #[default]
    Forward,
    /// Sideways to the robot's left.
    Lateral,
    /// Sideways to the robot's right.
    LateralRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Primitive {
    Straight {
        length_m: f64,
        speed_mps: f64,
        #[serde(default)]
        axis: BodyAxis,
    },
    /// Constant-curvature arc; a negative angle turns right.
    Arc {
        radius_m: f64,
        arc_angle_rad: f64,
        speed_mps: f64,
    },
    /// Rotation in place; the sign of `delta_yaw_rad` sets the direction, `omega_radps` the rate.
    Turn { delta_yaw_rad: f64, omega_radps: f64 },
}

impl Primitive {
    pub fn straight(length_m: f64, speed_mps: f64) -> Self {
        Primitive::Straight {
            length_m,
            speed_mps,
            axis: BodyAxis::Forward,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidPath(format!("{what} must be finite and > 0, got {v}")))
            }
        };
        match *self {
            Primitive::Straight {
                length_m, speed_mps, ..
            } => {
                positive(length_m, "length_m")?;
                positive(speed_mps, "speed_mps")
            }
            Primitive::Arc {
                radius_m,
                arc_angle_rad,
                speed_mps,
            } => {
                positive(radius_m, "radius_m")?;
                positive(speed_mps, "speed_mps")?;
                if arc_angle_rad.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidPath("arc_angle_rad must be finite".into()))
                }
            }
            Primitive::Turn {
                delta_yaw_rad,
                omega_radps,
            } => {
                positive(omega_radps, "omega_radps")?;
                if delta_yaw_rad.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidPath("delta_yaw_rad must be finite".into()))
                }
            }
        }
    }

    /// Constant body twist held over the primitive.
    pub fn twist(&self) -> Twist {
        match *self {
            Primitive::Straight {
                speed_mps, axis, ..
            } => match axis {
                BodyAxis::Forward => Twist::new(speed_mps, 0.0, 0.0),
                BodyAxis::Lateral => Twist::new(0.0, speed_mps, 0.0),
                BodyAxis::LateralRight => Twist::new(0.0, -speed_mps, 0.0),
            },
            Primitive::Arc {
                radius_m,
                arc_angle_rad,
                speed_mps,
            } => Twist::new(speed_mps, 0.0, arc_angle_rad.signum() * speed_mps / radius_m),
            Primitive::Turn {
                delta_yaw_rad,
                omega_radps,
            } => Twist::new(0.0, 0.0, delta_yaw_rad.signum() * omega_radps),
        }
    }

    pub fn duration(&self) -> f64 {
        match *self {
            Primitive::Straight {
                length_m, speed_mps, ..
            } => length_m / speed_mps,
            Primitive::Arc {
                radius_m,
                arc_angle_rad,
                speed_mps,
            } => radius_m * arc_angle_rad.abs() / speed_mps,
            Primitive::Turn {
                delta_yaw_rad,
                omega_radps,
            } => delta_yaw_rad.abs() / omega_radps,
        }
    }

    /// Relative motion over the whole primitive, built from the exact geometry
    /// rather than `twist · duration` so endpoints do not pick up rounding drift.
    pub fn displacement(&self) -> Pose {
        match *self {
            Primitive::Straight { length_m, axis, .. } => match axis {
                BodyAxis::Forward => Pose::new(length_m, 0.0, 0.0),
                BodyAxis::Lateral => Pose::new(0.0, length_m, 0.0),
                BodyAxis::LateralRight => Pose::new(0.0, -length_m, 0.0),
            },
            Primitive::Arc {
                radius_m,
                arc_angle_rad,
                ..
            } => {
                let (s, c) = arc_angle_rad.sin_cos();
                Pose::new(
                    radius_m * s * arc_angle_rad.signum(),
                    radius_m * (1.0 - c) * arc_angle_rad.signum(),
                    arc_angle_rad,
                )
            }
            Primitive::Turn { delta_yaw_rad, .. } => Pose::new(0.0, 0.0, delta_yaw_rad),
        }
    }

    /// Same geometry traversed `k` times faster.
    pub fn scaled_speed(&self, k: f64) -> Primitive {
        match *self {
            Primitive::Straight {
                length_m,
                speed_mps,
                axis,
            } => Primitive::Straight {
                length_m,
                speed_mps: speed_mps * k,
                axis,
            },
            Primitive::Arc {
                radius_m,
                arc_angle_rad,
                speed_mps,
            } => Primitive::Arc {
                radius_m,
                arc_angle_rad,
                speed_mps: speed_mps * k,
            },
            Primitive::Turn {
                delta_yaw_rad,
                omega_radps,
            } => Primitive::Turn {
                delta_yaw_rad,
                omega_radps: omega_radps * k,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    #[serde(with = "pose_array")]
    pub start: Pose,
    pub primitives: Vec<Primitive>,
}

mod pose_array {
    use super::Pose;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &Pose, s: S) -> Result<S::Ok, S::Error> {
        [p.x, p.y, p.yaw].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose, D::Error> {
        let [x, y, yaw] = <[f64; 3]>::deserialize(d)?;
        Ok(Pose::new(x, y, yaw))
    }
}

impl PathSpec {
    pub fn new(start: Pose, primitives: Vec<Primitive>) -> Self {
        Self { start, primitives }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.x.is_finite() && self.start.y.is_finite() && self.start.yaw.is_finite()) {
            return Err(Error::InvalidPath("start pose is not finite".into()));
        }
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    pub fn duration(&self) -> f64 {
        self.primitives.iter().map(Primitive::duration).sum()
    }

    /// Pose at the start of every primitive followed by the final pose.
    pub fn waypoints(&self) -> Vec<Pose> {
        let mut out = Vec::with_capacity(self.primitives.len() + 1);
        let mut p = self.start;
        out.push(p);
        for prim in &self.primitives {
            p = p.compose(&prim.displacement());
            out.push(p);
        }
        out
    }

    pub fn end(&self) -> Pose {
        *self.waypoints().last().expect("waypoints include the start")
    }

    /// Pose `t` seconds into the path, clamped to the path's time span.
    pub fn pose_at(&self, t: f64) -> Pose {
        let mut remaining = t.max(0.0);
        let mut p = self.start;
        for prim in &self.primitives {
            let d = prim.duration();
            if remaining < d {
                return p.compose(&exp(&prim.twist(), remaining));
            }
            remaining -= d;
            p = p.compose(&prim.displacement());
        }
        p
    }

    pub fn with_scaled_speed(&self, k: f64) -> PathSpec {
        PathSpec::new(self.start, self.primitives.iter().map(|p| p.scaled_speed(k)).collect())
    }

    /// Splits the path into one single-primitive path per primitive.
    pub fn split(&self) -> Vec<PathSpec> {
        self.primitives
            .iter()
            .zip(self.waypoints())
            .map(|(prim, start)| PathSpec::new(start, vec![*prim]))
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: PathSpec = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("path serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub schema_version: u32,
    pub total_j: f64,
    pub per_primitive_j: Vec<f64>,
    pub duration_s: f64,
    pub samples_used: usize,
    pub warnings: Vec<String>,
}

/// Midpoint-rule sampling of one primitive: `n = ceil(duration / dt)` equal steps.
pub fn step_count(duration: f64, dt: f64) -> usize {
    if duration <= 0.0 {
        0
    } else {
        (duration / dt).ceil().max(1.0) as usize
    }
}

pub fn energy_of_path(path: &PathSpec, terrain: &Terrain, model: &WrenchModel, dt: f64) -> Result<EnergyReport> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
    }
    path.validate()?;
    let mut per_primitive = Vec::with_capacity(path.primitives.len());
    let mut samples = 0;
    let mut capped = false;
    let mut extrapolated = false;
    let mut t0 = 0.0;
    for (prim, start) in path.primitives.iter().zip(path.waypoints()) {
        let duration = prim.duration();
        let twist = prim.twist();
        let n = step_count(duration, dt);
        let h = if n == 0 { 0.0 } else { duration / n as f64 };
        let mut e = 0.0;
        for k in 0..n {
            let tau = (k as f64 + 0.5) * h;
            let pose = start.compose(&exp(&twist, tau));
            let frame = terrain.frame_at(&pose)?;
            let ev = model.evaluate_checked(&frame);
            capped |= ev.capped;
            extrapolated |= model.extrapolates(frame.alpha);
            let p = model.power_from_wrench(&ev.wrench, &twist);
            if !p.is_finite() {
                return Err(Error::NonFinitePower { t: t0 + tau });
            }
            e += p * h;
        }
        // endpoint must lie on the terrain as well
        let end = start.compose(&prim.displacement());
        if !terrain.contains(end.x, end.y) {
            return Err(Error::OutOfBounds { x: end.x, y: end.y });
        }
        samples += n;
        t0 += duration;
        per_primitive.push(e);
    }
    let mut warnings = Vec::new();
    if capped {
        warnings.push("wrench clamped at f_max on part of the path".to_string());
    }
    if extrapolated {
        warnings.push("slope outside the model's fitted range on part of the path".to_string());
    }
    Ok(EnergyReport {
        schema_version: 1,
        total_j: per_primitive.iter().sum(),
        per_primitive_j: per_primitive,
        duration_s: t0,
        samples_used: samples,
        warnings,
    })
}

/// Checks that `parts` chain from the start of `whole` to its end.
pub fn check_endpoints(parts: &[PathSpec], whole: &PathSpec) -> Result<()> {
    let first = parts
        .first()
        .ok_or_else(|| Error::EndpointMismatch("no parts given".into()))?;
    let gap = first.start.distance_to(&whole.start);
    if gap > ENDPOINT_TOLERANCE {
        return Err(Error::EndpointMismatch(format!("first part starts {gap} away from the whole")));
    }
    for (i, pair) in parts.windows(2).enumerate() {
        let gap = pair[0].end().distance_to(&pair[1].start);
        if gap > ENDPOINT_TOLERANCE {
            return Err(Error::EndpointMismatch(format!(
                "part {} ends {gap} away from the start of part {}",
                i,
                i + 1
            )));
        }
    }
    let gap = parts[parts.len() - 1].end().distance_to(&whole.end());
    if gap > ENDPOINT_TOLERANCE {
        return Err(Error::EndpointMismatch(format!("last part ends {gap} away from the whole")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Superposition {
    pub schema_version: u32,
    pub parts_j: Vec<f64>,
    pub sum_parts_j: f64,
    pub whole_j: f64,
    pub relative_difference: f64,
}

/// `|Σ E(parts) − E(whole)| / E(whole)` after checking the parts chain end to end.
pub fn superposition_check(
    parts: &[PathSpec],
    whole: &PathSpec,
    terrain: &Terrain,
    model: &WrenchModel,
    dt: f64,
) -> Result<Superposition> {
    check_endpoints(parts, whole)?;
    let parts_j = parts
        .iter()
        .map(|p| energy_of_path(p, terrain, model, dt).map(|r| r.total_j))
        .collect::<Result<Vec<_>>>()?;
    let whole_j = energy_of_path(whole, terrain, model, dt)?.total_j;
    let sum_parts_j: f64 = parts_j.iter().sum();
    Ok(Superposition {
        schema_version: 1,
        relative_difference: relative_difference(sum_parts_j, whole_j),
        parts_j,
        sum_parts_j,
        whole_j,
    })
}

pub fn relative_difference(parts: f64, whole: f64) -> f64 {
    if parts == whole {
        0.0
    } else {
        (parts - whole).abs() / whole.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::HeightGrid;
    use crate::wrench::{Coefficients, EvalMode};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn constant_model(fx: f64, fy: f64, tau: f64) -> WrenchModel {
        let mut c = Coefficients::default();
        c.fx[0] = fx;
        c.fy[0] = fy;
        c.tau[0] = tau;
        WrenchModel::new(c)
    }

    fn plane() -> Terrain {
        Terrain::plane(10f64.to_radians(), 0.3).unwrap()
    }

    #[test]
    fn empty_path_costs_nothing() {
        let r = energy_of_path(&PathSpec::new(Pose::identity(), vec![]), &plane(), &WrenchModel::reference(), 0.01).unwrap();
        assert_eq!(r.total_j, 0.0);
        assert!(r.per_primitive_j.is_empty());
    }

    #[test]
    fn straight_force_times_distance() {
        let path = PathSpec::new(Pose::identity(), vec![Primitive::straight(10.0, 0.3)]);
        let r = energy_of_path(&path, &plane(), &constant_model(60.94, 0.0, 0.0), 0.01).unwrap();
        assert_abs_diff_eq!(r.total_j, 609.4, epsilon = 1e-9);
        assert_abs_diff_eq!(r.duration_s, 10.0 / 0.3, epsilon = 1e-12);
        // dt refinement leaves a constant integrand unchanged
        let fine = energy_of_path(&path, &plane(), &constant_model(60.94, 0.0, 0.0), 0.001).unwrap();
        assert_abs_diff_eq!(fine.total_j, r.total_j, epsilon = 1e-9);
    }

    #[test]
    fn turn_in_place_torque_times_angle() {
        let path = PathSpec::new(
            Pose::identity(),
            vec![Primitive::Turn {
                delta_yaw_rad: FRAC_PI_2,
                omega_radps: 0.5,
            }],
        );
        let r = energy_of_path(&path, &plane(), &constant_model(0.0, 0.0, 12.0), 0.01).unwrap();
        assert_abs_diff_eq!(r.total_j, 12.0 * FRAC_PI_2, epsilon = 1e-9);
        assert_abs_diff_eq!(r.total_j, 18.84955592153876, epsilon = 1e-9);
    }

    #[test]
    fn report_total_is_sum_of_parts() {
        let path = PathSpec::new(
            Pose::new(1.0, 2.0, 0.4),
            vec![
                Primitive::straight(3.0, 0.3),
                Primitive::Arc {
                    radius_m: 2.0,
                    arc_angle_rad: -1.0,
                    speed_mps: 0.3,
                },
                Primitive::Turn {
                    delta_yaw_rad: 2.0,
                    omega_radps: 0.5,
                },
            ],
        );
        let r = energy_of_path(&path, &plane(), &WrenchModel::reference(), 0.01).unwrap();
        assert_eq!(r.per_primitive_j.len(), 3);
        assert_abs_diff_eq!(r.total_j, r.per_primitive_j.iter().sum::<f64>(), epsilon = 1e-9);
    }

    #[test]
    fn arc_displacement_matches_exp() {
        for angle in [1.2, -2.5, 0.3] {
            let prim = Primitive::Arc {
                radius_m: 1.7,
                arc_angle_rad: angle,
                speed_mps: 0.4,
            };
            let by_exp = exp(&prim.twist(), prim.duration());
            assert!(by_exp.distance_to(&prim.displacement()) < 1e-12);
        }
    }

    #[test]
    fn pose_at_walks_the_path() {
        let path = PathSpec::new(
            Pose::identity(),
            vec![
                Primitive::straight(1.0, 0.5),
                Primitive::Turn {
                    delta_yaw_rad: FRAC_PI_2,
                    omega_radps: 1.0,
                },
                Primitive::straight(1.0, 0.5),
            ],
        );
        assert!(path.pose_at(1.0).distance_to(&Pose::new(0.5, 0.0, 0.0)) < 1e-12);
        assert!(path.pose_at(100.0).distance_to(&Pose::new(1.0, 1.0, FRAC_PI_2)) < 1e-12);
        assert!(path.end().distance_to(&Pose::new(1.0, 1.0, FRAC_PI_2)) < 1e-12);
    }

    #[test]
    fn out_of_bounds_paths_fail() {
        let g = HeightGrid::from_fn([0.0, 0.0], 1.0, 3, 3, |x, _| 0.1 * x).unwrap();
        let path = PathSpec::new(Pose::new(0.5, 1.0, 0.0), vec![Primitive::straight(5.0, 0.3)]);
        assert!(matches!(
            energy_of_path(&path, &Terrain::Grid(g), &WrenchModel::reference(), 0.01),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn invalid_primitives_are_rejected() {
        let bad = PathSpec::new(Pose::identity(), vec![Primitive::straight(-1.0, 0.3)]);
        assert!(matches!(
            energy_of_path(&bad, &plane(), &WrenchModel::reference(), 0.01),
            Err(Error::InvalidPath(_))
        ));
        let path = PathSpec::new(Pose::identity(), vec![Primitive::straight(1.0, 0.3)]);
        assert!(energy_of_path(&path, &plane(), &WrenchModel::reference(), 0.0).is_err());
    }

    #[test]
    fn non_finite_power_is_an_error() {
        let path = PathSpec::new(Pose::identity(), vec![Primitive::straight(1.0, 0.3)]);
        let mut m = constant_model(10.0, 0.0, 0.0);
        m.idle_power_w = f64::NAN;
        assert!(matches!(energy_of_path(&path, &plane(), &m, 0.01), Err(Error::NonFinitePower { .. })));
    }

    #[test]
    fn capped_wrench_warns() {
        let path = PathSpec::new(Pose::identity(), vec![Primitive::straight(1.0, 0.3)]);
        let r = energy_of_path(&path, &plane(), &constant_model(900.0, 0.0, 0.0), 0.01).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert_abs_diff_eq!(r.total_j, 500.0, epsilon = 1e-9);
    }

    #[test]
    fn midpoint_split_is_exactly_additive() {
        let whole = PathSpec::new(
            Pose::new(0.0, 0.0, 0.2),
            vec![Primitive::straight(3.0, 0.3), Primitive::straight(3.0, 0.3)],
        );
        let parts = whole.split();
        let s = superposition_check(&parts, &whole, &plane(), &WrenchModel::reference(), 0.01).unwrap();
        assert!(s.relative_difference <= 1e-9);
    }

    #[test]
    fn collinear_parts_match_one_segment() {
        let start = Pose::new(0.0, 0.0, 1.0);
        let whole = PathSpec::new(start, vec![Primitive::straight(10.0, 0.3)]);
        let a = PathSpec::new(start, vec![Primitive::straight(5.0, 0.3)]);
        let b = PathSpec::new(a.end(), vec![Primitive::straight(5.0, 0.3)]);
        let s = superposition_check(&[a, b], &whole, &plane(), &WrenchModel::reference(), 0.01).unwrap();
        assert!(s.relative_difference <= 1e-6);
    }

    #[test]
    fn endpoint_mismatch_is_detected() {
        let whole = PathSpec::new(Pose::identity(), vec![Primitive::straight(10.0, 0.3)]);
        let a = PathSpec::new(Pose::identity(), vec![Primitive::straight(5.0, 0.3)]);
        let b = PathSpec::new(Pose::new(5.1, 0.0, 0.0), vec![Primitive::straight(4.9, 0.3)]);
        assert!(matches!(
            superposition_check(&[a, b], &whole, &plane(), &WrenchModel::reference(), 0.01),
            Err(Error::EndpointMismatch(_))
        ));
    }

    #[test]
    fn path_json_format() {
        let text = r#"{"start":[1.0,2.0,0.5],"primitives":[
            {"type":"straight","length_m":2.0,"speed_mps":0.3,"axis":"forward"},
            {"type":"turn","delta_yaw_rad":-1.0,"omega_radps":0.5},
            {"type":"arc","radius_m":1.5,"arc_angle_rad":0.7,"speed_mps":0.3}]}"#;
        let p = PathSpec::from_json(text).unwrap();
        assert_eq!(p.primitives.len(), 3);
        assert_eq!(p.start, Pose::new(1.0, 2.0, 0.5));
        assert_eq!(PathSpec::from_json(&p.to_json()).unwrap(), p);
        assert!(PathSpec::from_json(r#"{"start":[0,0,0],"primitives":[{"type":"straight","length_m":0,"speed_mps":1}]}"#).is_err());
    }

    #[test]
    fn literal_mode_power_scales_with_speed() {
        let m = WrenchModel::reference().with_mode(EvalMode::Literal);
        let path = PathSpec::new(
            Pose::identity(),
            vec![Primitive::Arc {
                radius_m: 2.0,
                arc_angle_rad: PI,
                speed_mps: 0.3,
            }],
        );
        let fast = path.with_scaled_speed(2.5);
        let t = plane();
        for k in 0..20 {
            let s = k as f64 / 20.0;
            let pose = path.pose_at(s * path.duration());
            let fpose = fast.pose_at(s * fast.duration());
            assert!(pose.distance_to(&fpose) < 1e-9);
            let f = t.frame_at(&pose).unwrap();
            let p1 = m.power(&f, &path.primitives[0].twist());
            let p2 = m.power(&f, &fast.primitives[0].twist());
            assert_abs_diff_eq!(p2, 2.5 * p1, epsilon = 1e-9);
        }
    }
}
