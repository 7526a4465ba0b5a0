//! Wrench identification from cleaned telemetry.
//!
//! Cleaned samples are cut into short windows of steady, single-axis motion
//! on a steady slope frame. Each window yields one force-equivalent estimate
//! `(mean P − P_idle) / mean |v|` for the axis it moves along, and the
//! estimates are fitted per component by ordinary least squares over the
//! enabled basis terms.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se2::{normalize_angle, wrap_two_pi, Twist};
use crate::telemetry::TelemetrySample;
use crate::terrain::{slope_from_gravity, SlopeFrame, Terrain};
use crate::wrench::{basis, BasisMasks, Coefficients, Component, EvalMode, WrenchModel, BASIS_LEN};

pub const MAX_CONDITION: f64 = 1e8;
pub const DOMINANCE_RATIO: f64 = 3.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSource {
    /// Slope frame from the body-frame gravity reading.
    #[default]
    Gravity,
    /// Slope frame from a terrain map at the logged pose.
    Terrain,
}

/// A cleaned sample with its slope frame resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramedSample {
    pub t: f64,
    pub frame: SlopeFrame,
    pub twist: Twist,
    pub power_w: f64,
}

pub fn frame_samples(
    samples: &[TelemetrySample],
    source: FrameSource,
    terrain: Option<&Terrain>,
) -> Result<Vec<FramedSample>> {
    samples
        .iter()
        .map(|s| {
            let frame = match (source, terrain) {
                (FrameSource::Gravity, _) => slope_from_gravity(s.gravity_body)?,
                (FrameSource::Terrain, Some(t)) => t.frame_at(&s.pose)?,
                (FrameSource::Terrain, None) => {
                    return Err(Error::InvalidConfig(
                        "frame source 'terrain' needs a terrain map".into(),
                    ))
                }
            };
            Ok(FramedSample {
                t: s.t,
                frame,
                twist: s.twist,
                power_w: s.electrical_power(),
            })
        })
        .collect()
}

/// The body axis a window moves along; maps one-to-one onto wrench components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwistAxis {
    Vx,
    Vy,
    Omega,
}

impl TwistAxis {
    pub fn component(&self) -> Component {
        match self {
            TwistAxis::Vx => Component::Fx,
            TwistAxis::Vy => Component::Fy,
            TwistAxis::Omega => Component::Tau,
        }
    }

    pub fn value(&self, t: &Twist) -> f64 {
        match self {
            TwistAxis::Vx => t.vx,
            TwistAxis::Vy => t.vy,
            TwistAxis::Omega => t.omega,
        }
    }

    pub fn dominant(t: &Twist) -> TwistAxis {
        let (ax, ay, aw) = (t.vx.abs(), t.vy.abs(), t.omega.abs());
        if ax >= ay && ax >= aw {
            TwistAxis::Vx
        } else if ay >= aw {
            TwistAxis::Vy
        } else {
            TwistAxis::Omega
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub min_duration_s: f64,
    pub max_twist_cv: f64,
    pub max_alpha_drift_deg: f64,
    /// Not applied to rotation windows, whose heading sweeps by construction.
    pub max_gamma_drift_deg: f64,
    pub max_gap_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            min_duration_s: 2.0,
            max_twist_cv: 0.2,
            max_alpha_drift_deg: 3.0,
            max_gamma_drift_deg: 10.0,
            max_gap_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub id: usize,
    pub axis: TwistAxis,
    pub samples: Vec<FramedSample>,
}

impl Window {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

#[derive(Default)]
struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n
    }

    fn std(&self) -> f64 {
        let m = self.mean();
        (self.sum_sq / self.n - m * m).max(0.0).sqrt()
    }

    fn cv(&self) -> f64 {
        let m = self.mean().abs();
        let s = self.std();
        if m == 0.0 {
            if s == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            s / m
        }
    }
}

fn moments(values: impl IntoIterator<Item = f64>) -> Moments {
    let mut m = Moments::default();
    for v in values {
        m.push(v);
    }
    m
}

struct Growing {
    axis: TwistAxis,
    twist: Moments,
    alpha: (f64, f64),
    gamma_ref: f64,
    gamma_off: (f64, f64),
    last_t: f64,
}

impl Growing {
    fn start(s: &FramedSample) -> Self {
        let axis = TwistAxis::dominant(&s.twist);
        let mut twist = Moments::default();
        twist.push(axis.value(&s.twist));
        Self {
            axis,
            twist,
            alpha: (s.frame.alpha, s.frame.alpha),
            gamma_ref: s.frame.gamma,
            gamma_off: (0.0, 0.0),
            last_t: s.t,
        }
    }

    /// Adds `s` if the window stays coherent.
    fn try_push(&mut self, s: &FramedSample, cfg: &WindowConfig) -> bool {
        if s.t - self.last_t > cfg.max_gap_s || TwistAxis::dominant(&s.twist) != self.axis {
            return false;
        }
        let alpha = (self.alpha.0.min(s.frame.alpha), self.alpha.1.max(s.frame.alpha));
        if (alpha.1 - alpha.0).to_degrees() > cfg.max_alpha_drift_deg {
            return false;
        }
        let off = normalize_angle(s.frame.gamma - self.gamma_ref);
        let gamma_off = (self.gamma_off.0.min(off), self.gamma_off.1.max(off));
        if self.axis != TwistAxis::Omega && (gamma_off.1 - gamma_off.0).to_degrees() > cfg.max_gamma_drift_deg {
            return false;
        }
        let v = self.axis.value(&s.twist);
        let mut twist = Moments {
            n: self.twist.n,
            sum: self.twist.sum,
            sum_sq: self.twist.sum_sq,
        };
        twist.push(v);
        if twist.cv() > cfg.max_twist_cv {
            return false;
        }
        self.twist = twist;
        self.alpha = alpha;
        self.gamma_off = gamma_off;
        self.last_t = s.t;
        true
    }
}

/// Maximal contiguous windows of coherent motion, at least `min_duration_s` long.
pub fn segment_windows(samples: &[FramedSample], cfg: &WindowConfig) -> Vec<Window> {
    let mut windows = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        let mut g = Growing::start(&samples[i]);
        let mut j = i + 1;
        while j < samples.len() && g.try_push(&samples[j], cfg) {
            j += 1;
        }
        let w = Window {
            id: windows.len(),
            axis: g.axis,
            samples: samples[i..j].to_vec(),
        };
        if w.duration() >= cfg.min_duration_s {
            windows.push(w);
        }
        i = j;
    }
    windows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowQuality {
    pub n_samples: usize,
    pub twist_cv: f64,
    pub power_cv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrenchSample {
    pub window_id: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub component: Component,
    pub value: f64,
    pub quality: WindowQuality,
}

impl WrenchSample {
    pub fn frame(&self) -> SlopeFrame {
        SlopeFrame {
            alpha: self.alpha,
            gamma: self.gamma,
        }
    }
}

/// Circular mean in `[0, 2pi)`; 0 when the headings cancel out.
pub fn circular_mean(angles: impl IntoIterator<Item = f64>) -> f64 {
    let (s, c) = angles
        .into_iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    if s.hypot(c) < 1e-12 {
        0.0
    } else {
        wrap_two_pi(s.atan2(c))
    }
}

/// Force-equivalent estimate for the window's dominant axis.
pub fn estimate_wrench_sample(window: &Window, idle_power_w: f64) -> Result<WrenchSample> {
    let n = window.samples.len();
    if n == 0 {
        return Err(Error::NoDominantAxis {
            window_id: window.id,
        });
    }
    let nf = n as f64;
    let mean_abs = |f: fn(&Twist) -> f64| window.samples.iter().map(|s| f(&s.twist).abs()).sum::<f64>() / nf;
    let means = [
        (TwistAxis::Vx, mean_abs(|t| t.vx)),
        (TwistAxis::Vy, mean_abs(|t| t.vy)),
        (TwistAxis::Omega, mean_abs(|t| t.omega)),
    ];
    let dominant = means
        .iter()
        .copied()
        .find(|&(a, _)| a == window.axis)
        .map(|(_, m)| m)
        .unwrap_or(0.0);
    let dominated = means
        .iter()
        .filter(|(a, _)| *a != window.axis)
        .all(|&(_, m)| dominant >= DOMINANCE_RATIO * m);
    if !(dominant > 0.0 && dominated) {
        return Err(Error::NoDominantAxis {
            window_id: window.id,
        });
    }
    let power = moments(window.samples.iter().map(|s| s.power_w));
    let twist = moments(window.samples.iter().map(|s| window.axis.value(&s.twist)));
    Ok(WrenchSample {
        window_id: window.id,
        alpha: window.samples.iter().map(|s| s.frame.alpha).sum::<f64>() / nf,
        gamma: circular_mean(window.samples.iter().map(|s| s.frame.gamma)),
        component: window.axis.component(),
        value: (power.mean() - idle_power_w) / dominant,
        quality: WindowQuality {
            n_samples: n,
            twist_cv: twist.cv(),
            power_cv: power.cv(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFit {
    pub component: Component,
    pub n_samples: usize,
    pub coefficients: [f64; BASIS_LEN],
    pub residual_rms: f64,
    pub condition_number: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub window_id: usize,
    pub component: Component,
    pub alpha: f64,
    pub gamma: f64,
    pub value: f64,
    pub predicted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub components: Vec<ComponentFit>,
    pub residuals: Vec<Residual>,
}

impl FitReport {
    pub fn component(&self, c: Component) -> Option<&ComponentFit> {
        self.components.iter().find(|f| f.component == c)
    }

    pub fn max_residual_rms(&self) -> f64 {
        self.components.iter().map(|c| c.residual_rms).fold(0.0, f64::max)
    }
}

/// Ordinary least squares per component over the enabled basis terms.
pub fn fit_model(
    samples: &[WrenchSample],
    masks: &BasisMasks,
    eval_mode: EvalMode,
    idle_power_w: f64,
) -> Result<(WrenchModel, FitReport)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by_key(|s| (s.window_id, s.component));

    let mut coeffs = Coefficients::default();
    let mut fits = Vec::new();
    let mut residuals = Vec::new();

    for c in Component::ALL {
        let cols: Vec<usize> = (0..BASIS_LEN).filter(|&i| masks.get(c)[i]).collect();
        if cols.is_empty() {
            continue;
        }
        let rows: Vec<&WrenchSample> = sorted.iter().filter(|s| s.component == c).collect();
        if rows.len() < cols.len() {
            return Err(Error::InsufficientSamples {
                component: c,
                needed: cols.len(),
                got: rows.len(),
            });
        }
        let design = DMatrix::from_fn(rows.len(), cols.len(), |r, k| basis(&rows[r].frame())[cols[k]]);
        let target = DVector::from_iterator(rows.len(), rows.iter().map(|s| s.value));
        let svd = design.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { component: c, condition });
        }
        let x = svd
            .solve(&target, 0.0)
            .map_err(|e| Error::InvalidConfig(format!("least squares for {c}: {e}")))?;
        let predicted = &design * &x;
        let mut sq = 0.0;
        for (r, s) in rows.iter().enumerate() {
            let res = s.value - predicted[r];
            sq += res * res;
            residuals.push(Residual {
                window_id: s.window_id,
                component: c,
                alpha: s.alpha,
                gamma: s.gamma,
                value: s.value,
                predicted: predicted[r],
                residual: res,
            });
        }
        let slot = coeffs.get_mut(c);
        for (k, &col) in cols.iter().enumerate() {
            slot[col] = x[k];
        }
        fits.push(ComponentFit {
            component: c,
            n_samples: rows.len(),
            coefficients: *slot,
            residual_rms: (sq / rows.len() as f64).sqrt(),
            condition_number: condition,
        });
    }

    let mut model = WrenchModel::new(coeffs)
        .with_masks(*masks)
        .with_mode(eval_mode)
        .with_idle_power(idle_power_w);
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.alpha), hi.max(s.alpha)));
    if lo.is_finite() {
        model.alpha_fit_range_deg = Some([lo.to_degrees(), hi.to_degrees()]);
    }
    Ok((
        model,
        FitReport {
            schema_version: 1,
            components: fits,
            residuals,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinConfig {
    pub alpha_width_deg: f64,
    pub gamma_width_deg: f64,
}

impl Default for BinConfig {
    fn default() -> Self {
        Self {
            alpha_width_deg: 2.0,
            gamma_width_deg: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityBin {
    pub component: Component,
    /// Half-open `[lo, hi)` in degrees.
    pub alpha_deg: [f64; 2],
    pub gamma_deg: [f64; 2],
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub cv: f64,
    /// Fewer than two samples: repeatability cannot be judged.
    pub flagged: bool,
}

pub fn repeatability_report(samples: &[WrenchSample], bins: &BinConfig) -> Vec<RepeatabilityBin> {
    let mut groups: BTreeMap<(Component, i64, i64), Vec<f64>> = BTreeMap::new();
    for s in samples {
        let a = (s.alpha.to_degrees() / bins.alpha_width_deg).floor() as i64;
        let g = (wrap_two_pi(s.gamma).to_degrees() / bins.gamma_width_deg).floor() as i64;
        groups.entry((s.component, a, g)).or_default().push(s.value);
    }
    groups
        .into_iter()
        .map(|((component, a, g), values)| {
            let m = moments(values.iter().copied());
            RepeatabilityBin {
                component,
                alpha_deg: [a as f64 * bins.alpha_width_deg, (a + 1) as f64 * bins.alpha_width_deg],
                gamma_deg: [g as f64 * bins.gamma_width_deg, (g + 1) as f64 * bins.gamma_width_deg],
                n: values.len(),
                mean: m.mean(),
                std: m.std(),
                cv: m.cv(),
                flagged: values.len() < 2,
            }
        })
        .collect()
}

pub const DATASET_HEADER: [&str; 8] = [
    "window_id",
    "alpha_rad",
    "gamma_rad",
    "component",
    "value",
    "n_samples",
    "twist_cv",
    "power_cv",
];

pub fn write_dataset<W: Write>(writer: W, samples: &[WrenchSample]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(DATASET_HEADER)?;
    for s in samples {
        w.write_record([
            s.window_id.to_string(),
            s.alpha.to_string(),
            s.gamma.to_string(),
            s.component.to_string(),
            s.value.to_string(),
            s.quality.n_samples.to_string(),
            s.quality.twist_cv.to_string(),
            s.quality.power_cv.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<WrenchSample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(DATASET_HEADER.iter().copied()) {
        return Err(Error::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let bad = |what: &str| Error::MalformedRow {
            line,
            reason: format!("bad {what}"),
        };
        let f = |k: usize| rec.get(k).and_then(|v| v.trim().parse::<f64>().ok()).ok_or_else(|| bad(DATASET_HEADER[k]));
        let u = |k: usize| rec.get(k).and_then(|v| v.trim().parse::<usize>().ok()).ok_or_else(|| bad(DATASET_HEADER[k]));
        out.push(WrenchSample {
            window_id: u(0)?,
            alpha: f(1)?,
            gamma: f(2)?,
            component: rec.get(3).and_then(Component::parse).ok_or_else(|| bad("component"))?,
            value: f(4)?,
            quality: WindowQuality {
                n_samples: u(5)?,
                twist_cv: f(6)?,
                power_cv: f(7)?,
            },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub window: WindowConfig,
    pub idle_power_w: f64,
    pub eval_mode: EvalMode,
    pub basis_masks: BasisMasks,
    pub frame_source: FrameSource,
    pub bins: BinConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub model: WrenchModel,
    pub report: FitReport,
    pub dataset: Vec<WrenchSample>,
    pub repeatability: Vec<RepeatabilityBin>,
}

/// Segments, estimates and fits in one pass. Windows without a dominant axis are skipped.
pub fn calibrate(
    cleaned: &[TelemetrySample],
    cfg: &CalibrationConfig,
    terrain: Option<&Terrain>,
) -> Result<Calibration> {
    let framed = frame_samples(cleaned, cfg.frame_source, terrain)?;
    let windows = segment_windows(&framed, &cfg.window);
    let dataset: Vec<WrenchSample> = windows
        .iter()
        .filter_map(|w| estimate_wrench_sample(w, cfg.idle_power_w).ok())
        .collect();
    let (model, report) = fit_model(&dataset, &cfg.basis_masks, cfg.eval_mode, cfg.idle_power_w)?;
    let repeatability = repeatability_report(&dataset, &cfg.bins);
    Ok(Calibration {
        model,
        report,
        dataset,
        repeatability,
    })
}
