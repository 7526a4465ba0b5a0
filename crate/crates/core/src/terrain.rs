//! Terrain surfaces and the slope frame `(alpha, gamma)`.
//!
//! `alpha` is the local inclination, `gamma` the robot heading measured from
//! the steepest-ascent direction: 0 uphill, pi downhill, pi/2 cross-slope.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se2::{wrap_two_pi, Pose};

/// Bounds checks allow this much slack for points computed by floating-point composition.
const BOUNDS_SLACK: f64 = 1e-9;

pub const GRAVITY_NORM_MIN: f64 = 8.0;
pub const GRAVITY_NORM_MAX: f64 = 11.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFrame {
    pub alpha: f64,
    pub gamma: f64,
}

impl SlopeFrame {
    /// Builds a frame, wrapping `gamma` into `[0, 2pi)`.
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && (0.0..PI / 2.0).contains(&alpha)) {
            return Err(Error::InvalidConfig(format!(
                "slope angle {alpha} rad outside [0, pi/2)"
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidConfig("heading is not finite".into()));
        }
        Ok(Self {
            alpha,
            gamma: wrap_two_pi(gamma),
        })
    }

    pub fn from_degrees(alpha_deg: f64, gamma_deg: f64) -> Result<Self> {
        Self::new(alpha_deg.to_radians(), gamma_deg.to_radians())
    }

    pub fn level() -> Self {
        Self {
            alpha: 0.0,
            gamma: 0.0,
        }
    }

    /// Heading folded into `[0, pi]` using the left/right mirror symmetry.
    pub fn folded_gamma(&self) -> f64 {
        if self.gamma > PI {
            2.0 * PI - self.gamma
        } else {
            self.gamma
        }
    }

    /// Unit gravity direction seen by a body lying flat on this slope.
    pub fn gravity_direction(&self) -> [f64; 3] {
        let (sa, ca) = self.alpha.sin_cos();
        let (sg, cg) = self.gamma.sin_cos();
        [-sa * cg, -sa * sg, -ca]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terrain {
    /// Infinite plane with constant inclination; `aspect` is the world azimuth of steepest ascent.
    UniformPlane { alpha: f64, aspect: f64 },
    Grid(HeightGrid),
}

/// Heights on a regular grid. Row 0 is the minimum y; `heights[row * cols + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightGrid {
    origin: [f64; 2],
    cell_size: f64,
    rows: usize,
    cols: usize,
    heights: Vec<f64>,
}

impl HeightGrid {
    pub fn new(origin: [f64; 2], cell_size: f64, rows: usize, cols: usize, heights: Vec<f64>) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidTerrain(format!("cell size {cell_size} must be > 0")));
        }
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidTerrain(format!(
                "grid must be at least 2x2, got {rows}x{cols}"
            )));
        }
        if heights.len() != rows * cols {
            return Err(Error::InvalidTerrain(format!(
                "expected {} heights, got {}",
                rows * cols,
                heights.len()
            )));
        }
        if heights.iter().any(|h| !h.is_finite()) || !origin.iter().all(|o| o.is_finite()) {
            return Err(Error::InvalidTerrain("non-finite height or origin".into()));
        }
        Ok(Self {
            origin,
            cell_size,
            rows,
            cols,
            heights,
        })
    }

    /// Samples `h(x, y)` at every grid node.
    pub fn from_fn(
        origin: [f64; 2],
        cell_size: f64,
        rows: usize,
        cols: usize,
        h: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut heights = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                heights.push(h(origin[0] + c as f64 * cell_size, origin[1] + r as f64 * cell_size));
            }
        }
        Self::new(origin, cell_size, rows, cols, heights)
    }

    /// Parses a comma-separated heightmap, one grid row per line.
    pub fn from_csv(origin: [f64; 2], cell_size: f64, text: &str) -> Result<Self> {
        let mut heights = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidTerrain(format!("heightmap line {}: {e}", i + 1)))?;
            match cols {
                None => cols = Some(row.len()),
                Some(n) if n != row.len() => {
                    return Err(Error::InvalidTerrain(format!(
                        "heightmap line {} has {} values, expected {n}",
                        i + 1,
                        row.len()
                    )))
                }
                _ => {}
            }
            heights.extend(row);
            rows += 1;
        }
        Self::new(origin, cell_size, rows, cols.unwrap_or(0), heights)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.node(r, c).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(x_min, y_min, x_max, y_max)`
    pub fn bounds(&self) -> [f64; 4] {
        [
            self.origin[0],
            self.origin[1],
            self.origin[0] + (self.cols - 1) as f64 * self.cell_size,
            self.origin[1] + (self.rows - 1) as f64 * self.cell_size,
        ]
    }

    fn node(&self, row: usize, col: usize) -> f64 {
        self.heights[row * self.cols + col]
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let [x0, y0, x1, y1] = self.bounds();
        x >= x0 - BOUNDS_SLACK && x <= x1 + BOUNDS_SLACK && y >= y0 - BOUNDS_SLACK && y <= y1 + BOUNDS_SLACK
    }

    /// Bilinear interpolation; the caller guarantees `(x, y)` is in bounds.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        let u = ((x - self.origin[0]) / self.cell_size).clamp(0.0, (self.cols - 1) as f64);
        let v = ((y - self.origin[1]) / self.cell_size).clamp(0.0, (self.rows - 1) as f64);
        let c = (u.floor() as usize).min(self.cols - 2);
        let r = (v.floor() as usize).min(self.rows - 2);
        let fu = u - c as f64;
        let fv = v - r as f64;
        let h00 = self.node(r, c);
        let h01 = self.node(r, c + 1);
        let h10 = self.node(r + 1, c);
        let h11 = self.node(r + 1, c + 1);
        (h00 * (1.0 - fu) + h01 * fu) * (1.0 - fv) + (h10 * (1.0 - fu) + h11 * fu) * fv
    }

    /// Central differences of the bilinear surface with a half-cell step,
    /// shortened to one side at the grid boundary.
    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let [x0, y0, x1, y1] = self.bounds();
        let half = 0.5 * self.cell_size;
        let (xa, xb) = ((x - half).max(x0), (x + half).min(x1));
        let (ya, yb) = ((y - half).max(y0), (y + half).min(y1));
        let x = x.clamp(x0, x1);
        let y = y.clamp(y0, y1);
        let dhdx = (self.height(xb, y) - self.height(xa, y)) / (xb - xa);
        let dhdy = (self.height(x, yb) - self.height(x, ya)) / (yb - ya);
        [dhdx, dhdy]
    }
}

impl Terrain {
    pub fn plane(alpha: f64, aspect: f64) -> Result<Self> {
        if !(alpha.is_finite() && (0.0..PI / 2.0).contains(&alpha) && aspect.is_finite()) {
            return Err(Error::InvalidTerrain(format!(
                "plane slope {alpha} rad must lie in [0, pi/2)"
            )));
        }
        Ok(Terrain::UniformPlane { alpha, aspect })
    }

    /// `(x_min, y_min, x_max, y_max)`, or `None` for an unbounded plane.
    pub fn bounds(&self) -> Option<[f64; 4]> {
        match self {
            Terrain::UniformPlane { .. } => None,
            Terrain::Grid(g) => Some(g.bounds()),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Terrain::UniformPlane { .. } => x.is_finite() && y.is_finite(),
            Terrain::Grid(g) => g.contains(x, y),
        }
    }

    /// Local slope angle and world azimuth of steepest ascent at `(x, y)`.
    /// Flat spots report an azimuth of 0.
    pub fn local_slope(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !self.contains(x, y) {
            return Err(Error::OutOfBounds { x, y });
        }
        match self {
            Terrain::UniformPlane { alpha, aspect } => {
                if *alpha == 0.0 {
                    Ok((0.0, 0.0))
                } else {
                    Ok((*alpha, *aspect))
                }
            }
            Terrain::Grid(g) => {
                let [gx, gy] = g.gradient(x, y);
                let norm = gx.hypot(gy);
                if norm == 0.0 {
                    Ok((0.0, 0.0))
                } else {
                    Ok((norm.atan(), gy.atan2(gx)))
                }
            }
        }
    }

    /// Slope frame of a robot standing at `pose`.
    pub fn frame_at(&self, pose: &Pose) -> Result<SlopeFrame> {
        let (alpha, azimuth) = self.local_slope(pose.x, pose.y)?;
        Ok(SlopeFrame {
            alpha,
            gamma: heading_relative_to_slope(pose, azimuth),
        })
    }

    /// Loads a terrain description. Heightmap paths resolve relative to `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let spec: TerrainSpec = serde_json::from_str(text)?;
        spec.build(base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, dir)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TerrainSpec {
    Plane {
        alpha_deg: f64,
        aspect_deg: f64,
    },
    Grid {
        cell_size_m: f64,
        origin: [f64; 2],
        heights_csv: String,
    },
}

impl TerrainSpec {
    pub fn build(&self, base_dir: &Path) -> Result<Terrain> {
        match self {
            TerrainSpec::Plane {
                alpha_deg,
                aspect_deg,
            } => Terrain::plane(alpha_deg.to_radians(), aspect_deg.to_radians()),
            TerrainSpec::Grid {
                cell_size_m,
                origin,
                heights_csv,
            } => {
                let text = std::fs::read_to_string(base_dir.join(heights_csv))?;
                Ok(Terrain::Grid(HeightGrid::from_csv(*origin, *cell_size_m, &text)?))
            }
        }
    }
}

/// Heading of `pose` relative to the uphill direction, in `[0, 2pi)`.
pub fn heading_relative_to_slope(pose: &Pose, uphill_azimuth: f64) -> f64 {
    wrap_two_pi(uphill_azimuth - pose.yaw)
}

/// Slope frame from a body-frame gravity reading, assuming the body plane is
/// parallel to the terrain. Independent of the gravity magnitude inside the accepted band.
pub fn slope_from_gravity(gravity_body: [f64; 3]) -> Result<SlopeFrame> {
    let norm = gravity_body.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !(GRAVITY_NORM_MIN..=GRAVITY_NORM_MAX).contains(&norm) {
        return Err(Error::ImplausibleGravityNorm { norm });
    }
    let [gx, gy, gz] = gravity_body.map(|g| g / norm);
    let alpha = (-gz).clamp(-1.0, 1.0).acos();
    let gamma = if gx == 0.0 && gy == 0.0 {
        0.0
    } else {
        wrap_two_pi((-gy).atan2(-gx))
    };
    // a body lying upside down is not a slope
    if alpha >= PI / 2.0 {
        return Err(Error::ImplausibleGravityNorm { norm });
    }
    Ok(SlopeFrame { alpha, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    const G: f64 = 9.81;

    #[test]
    fn flat_grid_has_zero_slope_and_zero_azimuth() {
        let g = HeightGrid::from_fn([0.0, 0.0], 1.0, 4, 4, |_, _| 3.0).unwrap();
        let t = Terrain::Grid(g);
        assert_eq!(t.local_slope(1.3, 2.2).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn plane_is_constant() {
        let t = Terrain::plane(10f64.to_radians(), PI / 3.0).unwrap();
        for (x, y) in [(0.0, 0.0), (-50.0, 3.0), (1e4, -1e4)] {
            let (a, az) = t.local_slope(x, y).unwrap();
            assert_eq!(a, 10f64.to_radians());
            assert_eq!(az, PI / 3.0);
        }
    }

    #[test]
    fn linear_ramp_gradient_is_exact() {
        let g = HeightGrid::from_fn([-2.0, -2.0], 0.5, 9, 9, |x, _| 0.2 * x).unwrap();
        let t = Terrain::Grid(g);
        for (x, y) in [(0.0, 0.0), (-2.0, -2.0), (2.0, 1.1), (0.26, -1.7)] {
            let (a, az) = t.local_slope(x, y).unwrap();
            assert_abs_diff_eq!(a, 0.2f64.atan(), epsilon = 1e-12);
            assert_abs_diff_eq!(a.to_degrees(), 11.309932474020215, epsilon = 1e-9);
            assert_abs_diff_eq!(az, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_ramp_azimuth() {
        let g = HeightGrid::from_fn([0.0, 0.0], 1.0, 5, 5, |x, y| 0.1 * x + 0.1 * y).unwrap();
        let (a, az) = Terrain::Grid(g).local_slope(2.5, 1.5).unwrap();
        assert_abs_diff_eq!(az, PI / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a, (0.1f64 * 2f64.sqrt()).atan(), epsilon = 1e-12);
    }

    #[test]
    fn out_of_bounds_is_reported() {
        let g = HeightGrid::from_fn([0.0, 0.0], 1.0, 3, 3, |_, _| 0.0).unwrap();
        let t = Terrain::Grid(g);
        assert!(matches!(t.local_slope(2.5, 1.0), Err(Error::OutOfBounds { .. })));
        assert!(t.local_slope(2.0, 2.0).is_ok());
    }

    #[test]
    fn grid_validation() {
        assert!(HeightGrid::new([0.0, 0.0], 0.0, 2, 2, vec![0.0; 4]).is_err());
        assert!(HeightGrid::new([0.0, 0.0], 1.0, 1, 2, vec![0.0; 2]).is_err());
        assert!(HeightGrid::new([0.0, 0.0], 1.0, 2, 2, vec![0.0, 1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn csv_rows_start_at_minimum_y() {
        let g = HeightGrid::from_csv([0.0, 0.0], 1.0, "0,0,0\n1,1,1\n").unwrap();
        assert_eq!(g.rows(), 2);
        assert_eq!(g.cols(), 3);
        let (a, az) = Terrain::Grid(g.clone()).local_slope(1.0, 0.5).unwrap();
        assert_abs_diff_eq!(az, FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(a, 1f64.atan(), epsilon = 1e-12);
        let again = HeightGrid::from_csv([0.0, 0.0], 1.0, &g.to_csv()).unwrap();
        assert_eq!(again, g);
        assert!(HeightGrid::from_csv([0.0, 0.0], 1.0, "0,0\n1,x\n").is_err());
        assert!(HeightGrid::from_csv([0.0, 0.0], 1.0, "0,0\n1\n").is_err());
    }

    #[test]
    fn terrain_json_plane() {
        let t = Terrain::from_json(
            r#"{"type":"plane","alpha_deg":15.0,"aspect_deg":90.0}"#,
            Path::new("."),
        )
        .unwrap();
        assert_eq!(t, Terrain::plane(15f64.to_radians(), 90f64.to_radians()).unwrap());
    }

    #[test]
    fn heading_relative_to_slope_cases() {
        let az = 0.7;
        let at = |yaw: f64| heading_relative_to_slope(&Pose::new(0.0, 0.0, yaw), az);
        assert_abs_diff_eq!(at(az), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(at(az - PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(at(az - FRAC_PI_2), FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(at(az + FRAC_PI_2), 3.0 * FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn gravity_level() {
        let f = slope_from_gravity([0.0, 0.0, -G]).unwrap();
        assert_eq!(f.alpha, 0.0);
    }

    #[test]
    fn gravity_pitch_uphill() {
        let a = 10f64.to_radians();
        let f = slope_from_gravity([-G * a.sin(), 0.0, -G * a.cos()]).unwrap();
        assert_abs_diff_eq!(f.alpha, a, epsilon = 1e-12);
        assert_abs_diff_eq!(f.gamma, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gravity_roll_cross_slope() {
        let a = 10f64.to_radians();
        let f = slope_from_gravity([0.0, -G * a.sin(), -G * a.cos()]).unwrap();
        assert_abs_diff_eq!(f.alpha, a, epsilon = 1e-12);
        assert_abs_diff_eq!(f.gamma, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn gravity_norm_band() {
        assert!(matches!(
            slope_from_gravity([0.0, 0.0, -7.9]),
            Err(Error::ImplausibleGravityNorm { .. })
        ));
        assert!(slope_from_gravity([0.0, 0.0, -11.6]).is_err());
        assert!(slope_from_gravity([0.0, 0.0, 9.81]).is_err());
    }

    #[test]
    fn frame_gravity_roundtrip() {
        let f = SlopeFrame::from_degrees(17.0, 250.0).unwrap();
        let g = f.gravity_direction().map(|c| c * G);
        let back = slope_from_gravity(g).unwrap();
        assert_abs_diff_eq!(back.alpha, f.alpha, epsilon = 1e-12);
        assert_abs_diff_eq!(back.gamma, f.gamma, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn gravity_scale_invariance(alpha in 0.0..1.4f64, gamma in 0.0..(2.0 * PI), s in 8.0..11.5f64) {
            let f = SlopeFrame::new(alpha, gamma).unwrap();
            let d = f.gravity_direction();
            let a = slope_from_gravity(d.map(|c| c * s)).unwrap();
            let b = slope_from_gravity(d.map(|c| c * 9.81)).unwrap();
            prop_assert!((a.alpha - b.alpha).abs() <= 1e-12);
            if alpha > 1e-6 {
                prop_assert!(crate::se2::normalize_angle(a.gamma - b.gamma).abs() <= 1e-9);
            }
        }

        #[test]
        fn mirrored_yaws_give_mirrored_headings(az in -PI..PI, d in 0.0..PI) {
            let g1 = heading_relative_to_slope(&Pose::new(0.0, 0.0, az - d), az);
            let g2 = heading_relative_to_slope(&Pose::new(0.0, 0.0, az + d), az);
            prop_assert!(crate::se2::normalize_angle(g1 + g2).abs() <= 1e-9);
        }
    }
}
