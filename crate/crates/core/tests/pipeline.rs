mod common;

use common::{max_relative_error, run_pipeline};
use slope_energy::synth::{Leg, Noise, Scenario};
use slope_energy::wrench::{Component, MotionAxis, WrenchModel};

#[test]
fn noise_free_default_grid_recovers_ground_truth() {
    let truth = WrenchModel::reference();
    let cal = run_pipeline(&Scenario::default_grid(truth.clone()));
    let err = max_relative_error(&cal.model.coeffs, &truth);
    assert!(err <= 1e-9, "max relative error {err:e}");
    assert!(cal.report.max_residual_rms() <= 1e-9);
    // 60 forward + 12 lateral + 4 rotation windows
    assert_eq!(cal.dataset.len(), 76);
}

#[test]
fn noise_free_with_idle_power() {
    let truth = WrenchModel::reference().with_idle_power(12.0);
    let cal = run_pipeline(&Scenario::default_grid(truth.clone()));
    assert!(max_relative_error(&cal.model.coeffs, &truth) <= 1e-9);
}

#[test]
fn single_forward_leg_recovers_flat_force() {
    let mut truth = WrenchModel::reference();
    truth.basis_masks.fx = [true, false, false, false];
    truth.basis_masks.fy = [true, false, false, false];
    truth.basis_masks.tau = [true, false, false, false];
    let legs = vec![
        Leg::new(10.0, 0.0, MotionAxis::Forward),
        Leg::new(10.0, 0.0, MotionAxis::Lateral),
        Leg::new(10.0, 0.0, MotionAxis::Rotation),
    ];
    let cal = run_pipeline(&Scenario::new(truth.clone(), legs));
    let fx = cal.report.component(Component::Fx).unwrap();
    assert_eq!(fx.n_samples, 1);
    // single-term model: the flat force absorbs the slope terms
    let expected = truth.unit_cost(&slope_energy::SlopeFrame::from_degrees(10.0, 0.0).unwrap(), MotionAxis::Forward);
    assert!((cal.model.coeffs.fx[0] - expected).abs() <= 1e-9 * expected);
}

#[test]
fn noisy_grid_stays_close() {
    let truth = WrenchModel::reference();
    let s = Scenario::default_grid(truth.clone())
        .with_noise(Noise::power(0.05))
        .with_seed(3);
    let cal = run_pipeline(&s);
    assert!(max_relative_error(&cal.model.coeffs, &truth) < 0.05);
    assert!(cal.repeatability.iter().any(|b| b.n >= 3));
}
