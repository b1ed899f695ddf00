use std::sync::Arc;

use qdgf_core::concentration::{
    concentration_curve, concentration_curve_with_runs, default_u_grid, profile_check, sign_split_curve, CurveConfig,
    Experiment, PredictedProfile,
};
use qdgf_core::exemplars::{ensemble_helicity_grid, helicity_setup, point_setup};
use qdgf_core::io::{load_field, save_field};
use qdgf_core::operators::{CurlStencil, IsotropicFlowKernel, ScalarKernel};
use qdgf_core::sampling::{quadratic_value, reconstruct_field, sample_coefficients, DistanceEvaluator, RngStream};
use qdgf_core::spectral::fundamental_basis;
use qdgf_core::{exemplars, FieldKind, Grid, Sign};

fn helicity() -> (Experiment, IsotropicFlowKernel) {
    let kernel = IsotropicFlowKernel::gaussian(3.0, 1.0).unwrap();
    let grid = Arc::new(ensemble_helicity_grid(1.0).unwrap());
    let (c, o) = helicity_setup(kernel, grid, CurlStencil::FourthOrder).unwrap();
    (Experiment::new(c, o).unwrap(), kernel)
}

fn point() -> Experiment {
    let grid = Arc::new(Grid::cube(1, 3.0, 41, 1, FieldKind::Complex).unwrap());
    let (c, o) = point_setup(ScalarKernel::Gaussian { sigma: 1.0 }, grid).unwrap();
    Experiment::new(c, o).unwrap()
}

#[test]
fn helicity_branches_are_statistically_indistinguishable() {
    let (exp, _) = helicity();
    let us = default_u_grid(&exp, Sign::Plus).unwrap();
    let cfg = CurveConfig { epsilon: 1.0, samples_per_u: 600, seed: 41, method: None };
    let split = sign_split_curve(&exp, &us[..4], &cfg).unwrap();
    assert!(split.warning.is_none());
    for z in split.branch_z_scores() {
        assert!(z.abs() < 2.576, "two-sample z = {z}");
    }
    for c in &split.combined {
        assert!((c.p_plus_event - c.p_minus_event).abs() < 1e-6);
        assert!(c.p_combined <= c.bound + 1e-12);
    }
}

#[test]
fn helicity_fitted_direction_reproduces_fundamental_projection() {
    let (exp, kernel) = helicity();
    let us = default_u_grid(&exp, Sign::Plus).unwrap();
    let cfg = CurveConfig { samples_per_u: 200, seed: 8, ..Default::default() };
    let (_, runs) = concentration_curve_with_runs(&exp, Sign::Plus, &us[3..], &cfg).unwrap();
    let rep = profile_check(&exp, &runs[0].ensemble, &PredictedProfile::Helicity { kernel, sign: Sign::Plus }).unwrap();
    let worst = rep.fundamental_cosines.iter().copied().fold(1.0, f64::min);
    assert!(worst > 0.999, "{worst}");
    assert!(rep.phase_ks.is_none());
}

#[test]
fn low_threshold_matches_unconditional_mismatch() {
    let exp = point();
    let eps = 0.8;
    let cfg = CurveConfig { epsilon: eps, samples_per_u: 5000, seed: 12, method: None };
    let curve = concentration_curve(&exp, Sign::Plus, &[-1.0], &cfg).unwrap();
    let p = curve.points[0];
    assert_eq!(p.draws, 5000);

    let basis = fundamental_basis(exp.spectrum(), Sign::Plus).unwrap();
    let eval = DistanceEvaluator::new(exp.spectrum(), exp.cov(), &basis).unwrap();
    let mut rng = RngStream::new(99, 0);
    let n = 20_000;
    let hits = sample_coefficients(&mut rng, exp.spectrum(), n)
        .iter()
        .filter(|t| eval.evaluate(t).unwrap().distance > eps)
        .count() as f64;
    let q = hits / n as f64;
    let sigma = (p.p_err.powi(2) + q * (1.0 - q) / n as f64).sqrt();
    assert!((p.p_exceed - q).abs() < 3.0 * sigma, "{} vs {q} (σ = {sigma})", p.p_exceed);
}

#[test]
fn conditioned_samples_survive_field_files() {
    let exp = point();
    let basis = fundamental_basis(exp.spectrum(), Sign::Plus).unwrap();
    let eval = DistanceEvaluator::new(exp.spectrum(), exp.cov(), &basis).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(3, 0);
    for (i, t) in sample_coefficients(&mut rng, exp.spectrum(), 5).iter().enumerate() {
        let phi = reconstruct_field(t, exp.spectrum(), exp.cov()).unwrap();
        let path = dir.path().join(format!("sample_{i}.csv"));
        save_field(&path, &phi).unwrap();
        let back = load_field(&path, Some(FieldKind::Complex)).unwrap();
        assert_eq!(back, phi);
        let q = exp.form().evaluate(&back).unwrap();
        assert!((q - quadratic_value(t, exp.spectrum())).abs() < 1e-8 * q.abs().max(1.0));
        assert!(eval.evaluate(t).unwrap().distance <= 2.0);
    }
    let pred = exemplars::point_prediction(&ScalarKernel::Gaussian { sigma: 1.0 }, exp.spectrum().grid().clone()).unwrap();
    let path = dir.path().join("profile.csv");
    save_field(&path, &pred.profile).unwrap();
    assert!(load_field(&path, Some(FieldKind::Real)).is_err());
}
