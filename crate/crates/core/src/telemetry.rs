//! Telemetry log I/O and preprocessing.
//!
//! The preprocessing pipeline runs in a fixed order:
//!
//! 1. drop near-stationary samples,
//! 2. reject power outliers against a running median / MAD,
//! 3. smooth power and twist with an exponential moving average,
//! 4. optionally reject samples whose electrical power is inconsistent with
//!    the mechanical power predicted by a wrench model.
//!
//! Rules 2 and 3 operate on contiguous runs: a time gap longer than
//! `max_gap_s` (typically left behind by rule 1 when the robot stops) starts
//! a new run, so neither the median window nor the moving average mixes
//! separate motion segments.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se2::{Pose, Twist};
use crate::terrain::slope_from_gravity;
use crate::wrench::WrenchModel;

pub const TELEMETRY_HEADER: [&str; 12] = [
    "t_s",
    "gx_mps2",
    "gy_mps2",
    "gz_mps2",
    "x_m",
    "y_m",
    "yaw_rad",
    "vx_mps",
    "vy_mps",
    "omega_radps",
    "voltage_v",
    "current_a",
];

/// Scale factor turning a MAD into a standard-deviation estimate for Gaussian data.
pub const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub t: f64,
    pub gravity_body: [f64; 3],
    pub pose: Pose,
    pub twist: Twist,
    pub voltage: f64,
    pub current: f64,
}

impl TelemetrySample {
    pub fn electrical_power(&self) -> f64 {
        self.voltage * self.current
    }

    fn to_record(self) -> [f64; 12] {
        [
            self.t,
            self.gravity_body[0],
            self.gravity_body[1],
            self.gravity_body[2],
            self.pose.x,
            self.pose.y,
            self.pose.yaw,
            self.twist.vx,
            self.twist.vy,
            self.twist.omega,
            self.voltage,
            self.current,
        ]
    }

    fn from_record(v: &[f64; 12]) -> Self {
        Self {
            t: v[0],
            gravity_body: [v[1], v[2], v[3]],
            // stored verbatim; the log is trusted to carry wrapped yaw
            pose: Pose {
                x: v[4],
                y: v[5],
                yaw: v[6],
            },
            twist: Twist::new(v[7], v[8], v[9]),
            voltage: v[10],
            current: v[11],
        }
    }
}

pub fn electrical_power(sample: &TelemetrySample) -> f64 {
    sample.electrical_power()
}

/// Parses a telemetry CSV. Errors carry 1-based line numbers (the header is line 1).
pub fn parse_log<R: Read>(reader: R) -> Result<Vec<TelemetrySample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TELEMETRY_HEADER.iter().copied()) {
        return Err(Error::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out: Vec<TelemetrySample> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if rec.len() != TELEMETRY_HEADER.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {} fields, got {}", TELEMETRY_HEADER.len(), rec.len()),
            });
        }
        let mut vals = [0.0; 12];
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("{}: {field:?} is not a number", TELEMETRY_HEADER[k]),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("{} is not finite", TELEMETRY_HEADER[k]),
                });
            }
            vals[k] = v;
        }
        let s = TelemetrySample::from_record(&vals);
        if s.voltage <= 0.0 || s.current < 0.0 {
            return Err(Error::MalformedRow {
                line,
                reason: "voltage must be > 0 and current >= 0".into(),
            });
        }
        if let Some(prev) = out.last() {
            if s.t <= prev.t {
                return Err(Error::NonMonotonicTime { at: line });
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// Writes a telemetry CSV using shortest round-trip float formatting.
pub fn write_log<W: Write>(writer: W, samples: &[TelemetrySample]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(TELEMETRY_HEADER)?;
    for s in samples {
        w.write_record(s.to_record().iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Translational speed below which a sample counts as stationary; also used in rad/s for yaw rate.
    pub v_min: f64,
    pub median_window: usize,
    pub mad_threshold: f64,
    pub ema_alpha: f64,
    pub consistency_eta: f64,
    pub p_floor_w: f64,
    /// A larger gap between consecutive samples starts a new run.
    pub max_gap_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            v_min: 0.05,
            median_window: 5,
            mad_threshold: 3.0,
            ema_alpha: 0.2,
            consistency_eta: 5.0,
            p_floor_w: 1.0,
            max_gap_s: 0.5,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.v_min >= 0.0 && self.v_min.is_finite()) {
            return bad("v_min must be >= 0");
        }
        if self.median_window == 0 || self.median_window.is_multiple_of(2) {
            return bad("median_window must be a positive odd count");
        }
        if !(self.mad_threshold > 0.0 && self.mad_threshold.is_finite()) {
            return bad("mad_threshold must be > 0");
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return bad("ema_alpha must lie in (0, 1]");
        }
        if !(self.consistency_eta >= 1.0 && self.consistency_eta.is_finite()) {
            return bad("consistency_eta must be >= 1");
        }
        if !(self.p_floor_w >= 0.0 && self.p_floor_w.is_finite()) {
            return bad("p_floor_w must be >= 0");
        }
        if !(self.max_gap_s > 0.0) {
            return bad("max_gap_s must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub input: usize,
    pub low_speed: usize,
    pub power_outlier: usize,
    pub inconsistent: usize,
    /// False when no model was supplied and the consistency bound was skipped.
    pub consistency_checked: bool,
    pub output: usize,
}

impl RejectionReport {
    pub fn rejected(&self) -> usize {
        self.low_speed + self.power_outlier + self.inconsistent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub samples: Vec<TelemetrySample>,
    pub report: RejectionReport,
}

fn is_stationary(s: &TelemetrySample, v_min: f64) -> bool {
    s.twist.vx.hypot(s.twist.vy) < v_min && s.twist.omega.abs() < v_min
}

/// Rule 1.
pub fn drop_low_speed(samples: &[TelemetrySample], v_min: f64) -> Vec<TelemetrySample> {
    samples.iter().filter(|s| !is_stationary(s, v_min)).copied().collect()
}

/// Splits at time gaps longer than `max_gap_s`; returns half-open index ranges.
pub fn split_runs(samples: &[TelemetrySample], max_gap_s: f64) -> Vec<std::ops::Range<usize>> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..samples.len() {
        if samples[i].t - samples[i - 1].t > max_gap_s {
            runs.push(start..i);
            start = i;
        }
    }
    if start < samples.len() {
        runs.push(start..samples.len());
    }
    runs
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Flags samples whose power deviates from the centred window median by more
/// than `threshold · 1.4826 · MAD`. Windows are shifted inward at run edges and
/// shrink to the whole run when it is shorter than `window`.
fn flag_outliers(power: &[f64], window: usize, threshold: f64) -> Vec<bool> {
    let n = power.len();
    let w = window.min(n);
    let half = w / 2;
    let mut buf = vec![0.0; w];
    let mut dev = vec![0.0; w];
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half).min(n - w);
            buf.copy_from_slice(&power[lo..lo + w]);
            let m = median(&mut buf);
            for (d, p) in dev.iter_mut().zip(&power[lo..lo + w]) {
                *d = (p - m).abs();
            }
            let mad = median(&mut dev);
            // a zero MAD would flag rounding noise in otherwise constant data
            let scale = (MAD_TO_SIGMA * mad).max(1e-9 * m.abs().max(1.0));
            (power[i] - m).abs() > threshold * scale
        })
        .collect()
}

/// Rule 2, repeated until no further sample is flagged so that it is idempotent.
/// Runs are re-split on every pass since a removal can open a new gap.
pub fn reject_power_outliers(samples: &[TelemetrySample], cfg: &PreprocessConfig) -> Vec<TelemetrySample> {
    let mut cur = samples.to_vec();
    loop {
        let mut keep = Vec::with_capacity(cur.len());
        for run in split_runs(&cur, cfg.max_gap_s) {
            let power: Vec<f64> = cur[run].iter().map(|s| s.electrical_power()).collect();
            keep.extend(flag_outliers(&power, cfg.median_window, cfg.mad_threshold).into_iter().map(|f| !f));
        }
        if keep.iter().all(|&k| k) {
            return cur;
        }
        cur = cur.into_iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s).collect();
    }
}

/// `y += a·(x − y)`, restarted at every run boundary. A constant input is a fixed point.
pub fn ema(values: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut y = match values.first() {
        Some(&v) => v,
        None => return out,
    };
    for &x in values {
        y += alpha * (x - y);
        out.push(y);
    }
    out
}

/// Rule 3. Smoothed power is stored back through the current (`I = P / V`).
pub fn smooth(samples: &[TelemetrySample], cfg: &PreprocessConfig) -> Vec<TelemetrySample> {
    let mut out = samples.to_vec();
    for run in split_runs(samples, cfg.max_gap_s) {
        let chunk = &samples[run.clone()];
        let p = ema(&chunk.iter().map(|s| s.electrical_power()).collect::<Vec<_>>(), cfg.ema_alpha);
        let vx = ema(&chunk.iter().map(|s| s.twist.vx).collect::<Vec<_>>(), cfg.ema_alpha);
        let vy = ema(&chunk.iter().map(|s| s.twist.vy).collect::<Vec<_>>(), cfg.ema_alpha);
        let om = ema(&chunk.iter().map(|s| s.twist.omega).collect::<Vec<_>>(), cfg.ema_alpha);
        for (k, s) in out[run].iter_mut().enumerate() {
            if p[k] != s.electrical_power() {
                s.current = p[k] / s.voltage;
            }
            s.twist = Twist::new(vx[k], vy[k], om[k]);
        }
    }
    out
}

/// Mechanical power predicted by `model` for a sample, idle draw excluded.
pub fn mechanical_power(model: &WrenchModel, s: &TelemetrySample) -> Result<f64> {
    let frame = slope_from_gravity(s.gravity_body)?;
    Ok(model.power(&frame, &s.twist) - model.idle_power_w)
}

/// Rule 4: keeps samples with `P_mech / η <= P_elec <= η · max(P_mech, P_floor)`.
/// Samples with implausible gravity readings are rejected as well.
pub fn consistent(model: &WrenchModel, s: &TelemetrySample, cfg: &PreprocessConfig) -> bool {
    let Ok(p_mech) = mechanical_power(model, s) else {
        return false;
    };
    let p_elec = s.electrical_power();
    let eta = cfg.consistency_eta;
    p_elec >= p_mech / eta && p_elec <= eta * p_mech.max(cfg.p_floor_w)
}

pub fn preprocess(
    samples: &[TelemetrySample],
    cfg: &PreprocessConfig,
    model: Option<&WrenchModel>,
) -> Result<Preprocessed> {
    cfg.validate()?;
    let mut report = RejectionReport {
        input: samples.len(),
        consistency_checked: model.is_some(),
        ..Default::default()
    };

    let moving = drop_low_speed(samples, cfg.v_min);
    report.low_speed = samples.len() - moving.len();
    if moving.is_empty() {
        return Ok(Preprocessed {
            samples: moving,
            report,
        });
    }
    if moving.len() < cfg.median_window {
        return Err(Error::WindowTooShort {
            remaining: moving.len(),
            window: cfg.median_window,
        });
    }

    let kept = reject_power_outliers(&moving, cfg);
    report.power_outlier = moving.len() - kept.len();

    let smoothed = smooth(&kept, cfg);

    let cleaned: Vec<TelemetrySample> = match model {
        Some(m) => smoothed.into_iter().filter(|s| consistent(m, s, cfg)).collect(),
        None => smoothed,
    };
    report.inconsistent = kept.len() - cleaned.len();
    report.output = cleaned.len();
    Ok(Preprocessed {
        samples: cleaned,
        report,
    })
}
