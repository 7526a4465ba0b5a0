#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slope_energy::calibration::{calibrate, Calibration, CalibrationConfig};
use slope_energy::planner::LatticeConfig;
use slope_energy::synth::{generate_telemetry, Scenario};
use slope_energy::telemetry::{parse_log, preprocess, PreprocessConfig};
use slope_energy::terrain::HeightGrid;
use slope_energy::wrench::{Component, Coefficients, WrenchModel};
use slope_energy::{Pose, Terrain, Twist};

/// synth -> CSV -> ingest -> calibrate, with the ground truth's basis masks.
pub fn run_pipeline(scenario: &Scenario) -> Calibration {
    let csv = generate_telemetry(scenario).unwrap().csv_string().unwrap();
    let log = parse_log(csv.as_bytes()).unwrap();
    let cleaned = preprocess(&log, &PreprocessConfig::default(), None).unwrap();
    let cfg = CalibrationConfig {
        basis_masks: scenario.ground_truth.basis_masks,
        idle_power_w: scenario.ground_truth.idle_power_w,
        eval_mode: scenario.ground_truth.eval_mode,
        ..Default::default()
    };
    calibrate(&cleaned.samples, &cfg, None).unwrap()
}

/// Largest relative error over every enabled, non-zero ground-truth coefficient.
pub fn max_relative_error(fit: &Coefficients, truth: &WrenchModel) -> f64 {
    let mut worst: f64 = 0.0;
    for c in Component::ALL {
        let mask = truth.basis_masks.get(c);
        for (i, _) in mask.iter().enumerate().filter(|(_, on)| **on) {
            let t = truth.coeffs.get(c)[i];
            let f = fit.get(c)[i];
            let err = if t == 0.0 { f.abs() } else { ((f - t) / t).abs() };
            worst = worst.max(err);
        }
    }
    worst
}

pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let idx = ((values.len() - 1) as f64 * q).round() as usize;
    values[idx]
}

#[allow(clippy::too_many_arguments)]
/// Plain Dijkstra over `(col, row, heading)`, building every edge from scratch.
pub fn ucs_oracle(
    terrain: &Terrain,
    model: &WrenchModel,
    cfg: &LatticeConfig,
    cols: usize,
    rows: usize,
    origin: [f64; 2],
    start: (usize, usize, usize),
    goal: (usize, usize),
) -> Option<f64> {
    let h = cfg.headings;
    let cs = cfg.cell_size_m;
    let pos = |c: usize, r: usize| (origin[0] + c as f64 * cs, origin[1] + r as f64 * cs);
    let step = 2.0 * PI / h as f64;
    let neighbour = |angle: f64| -> Option<(i64, i64)> {
        let (s, c) = angle.sin_cos();
        let scale = if (s.abs() - c.abs()).abs() < 1e-9 { 2f64.sqrt() } else { 1.0 };
        let (dx, dy) = ((c * scale).round(), (s * scale).round());
        if (dx - c * scale).abs() < 1e-9 && (dy - s * scale).abs() < 1e-9 && (dx != 0.0 || dy != 0.0) {
            Some((dx as i64, dy as i64))
        } else {
            None
        }
    };
    let cost = |pose: Pose, twist: Twist, dur: f64| {
        let f = terrain.frame_at(&pose).unwrap();
        model.power(&f, &twist) * dur
    };

    let mut dist: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(start, 0.0);
    heap.push(Reverse((0u64, start)));
    while let Some(Reverse((bits, n))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[&n] {
            continue;
        }
        if (n.0, n.1) == goal {
            return Some(d);
        }
        let (x, y) = pos(n.0, n.1);
        let yaw = n.2 as f64 * step;
        let mut edges = Vec::new();
        let mut translations = vec![(yaw, Twist::new(cfg.speed_mps, 0.0, 0.0))];
        if cfg.allow_lateral {
            translations.push((yaw + PI / 2.0, Twist::new(0.0, cfg.speed_mps, 0.0)));
            translations.push((yaw - PI / 2.0, Twist::new(0.0, -cfg.speed_mps, 0.0)));
        }
        for (dir, twist) in translations {
            if let Some((dx, dy)) = neighbour(dir) {
                let (c, r) = (n.0 as i64 + dx, n.1 as i64 + dy);
                if c < 0 || r < 0 || c >= cols as i64 || r >= rows as i64 {
                    continue;
                }
                let (x1, y1) = pos(c as usize, r as usize);
                let len = (x1 - x).hypot(y1 - y);
                let e = cost(Pose::new((x + x1) / 2.0, (y + y1) / 2.0, yaw), twist, len / cfg.speed_mps);
                edges.push(((c as usize, r as usize, n.2), e));
            }
        }
        for sign in [1.0, -1.0] {
            let k = if sign > 0.0 { (n.2 + 1) % h } else { (n.2 + h - 1) % h };
            let e = cost(
                Pose::new(x, y, yaw + 0.5 * sign * step),
                Twist::new(0.0, 0.0, sign * cfg.omega_radps),
                step / cfg.omega_radps,
            );
            edges.push(((n.0, n.1, k), e));
        }
        for (m, e) in edges {
            assert!(e >= 0.0);
            let nd = d + e;
            if dist.get(&m).is_none_or(|&old| nd < old) {
                dist.insert(m, nd);
                heap.push(Reverse((nd.to_bits(), m)));
            }
        }
    }
    None
}

/// Smooth random heightmap with slopes kept under roughly 15 degrees.
pub fn random_heightmap(rng: &mut ChaCha8Rng, cols: usize, rows: usize, cell: f64) -> Terrain {
    let ax = rng.random_range(-0.15..0.15);
    let ay = rng.random_range(-0.15..0.15);
    let amp = rng.random_range(0.0..0.4);
    let k1 = rng.random_range(0.1..0.6);
    let k2 = rng.random_range(0.1..0.6);
    let ph = rng.random_range(0.0..PI);
    let grid = HeightGrid::from_fn([0.0, 0.0], cell, rows, cols, |x, y| {
        ax * x + ay * y + amp * (k1 * x + ph).sin() * (k2 * y).cos()
    })
    .unwrap();
    Terrain::Grid(grid)
}

/// Reference-shaped model with randomized but cost-positive coefficients.
pub fn random_model(rng: &mut ChaCha8Rng) -> WrenchModel {
    let mut m = WrenchModel::reference();
    m.coeffs.fx = [
        rng.random_range(60.0..100.0),
        rng.random_range(0.0..40.0),
        rng.random_range(0.0..150.0),
        0.0,
    ];
    m.coeffs.fy = [rng.random_range(50.0..100.0), rng.random_range(0.0..150.0), 0.0, 0.0];
    m.coeffs.tau = [rng.random_range(1.0..10.0), rng.random_range(0.0..20.0), 0.0, 0.0];
    m.idle_power_w = rng.random_range(0.0..10.0);
    m
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
