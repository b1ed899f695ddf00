//! Acceptance criteria 1–7. Every test prints one `PASS`/`FAIL` line per
//! criterion (with the clauses that decided it) before asserting.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

use qdgf_core::concentration::{
    concentration_curve_with_runs, conditioned_run, default_u_grid, profile_check, ConcentrationCurve, CurveConfig,
    Experiment, PredictedProfile, ProfileReport,
};
use qdgf_core::exemplars::{
    analytic_helicity_spectrum, curl_curl_identity_check, default_helicity_grid, default_point_grid,
    ensemble_helicity_grid, helicity_eigenvalues, helicity_grid_spectrum, helicity_setup, point_prediction, point_setup,
};
use qdgf_core::io::curve_csv;
use qdgf_core::operators::{Covariance, CovarianceOperator, CurlStencil, Functional, IsotropicFlowKernel, QuadraticForm, ScalarKernel};
use qdgf_core::sampling::{sample_coefficients, Method, RngStream};
use qdgf_core::spectral::{dense_spectrum, fundamental_basis, low_rank_spectrum, restricted_co_spectrum, TOL_DEG};
use qdgf_core::tails::{
    asymptotic_scan, default_scan_range, tail_closed_form, tail_inversion, tail_lower_bound, EigenvalueProfile,
};
use qdgf_core::{FieldKind, Grid, Sign};

const SEED: u64 = 20_240_917;
const SAMPLES_PER_U: usize = 2000;
const EPSILON: f64 = 0.25;

struct Verdict {
    criterion: u32,
    clauses: Vec<(String, bool)>,
}

impl Verdict {
    fn new(criterion: u32) -> Self {
        Verdict { criterion, clauses: Vec::new() }
    }

    fn check(&mut self, name: impl Into<String>, ok: bool) {
        let name = name.into();
        println!("  [{}] {name}", if ok { "ok" } else { "FAILED" });
        self.clauses.push((name, ok));
    }

    fn finish(self, started: Instant, budget_s: f64) {
        let elapsed = started.elapsed().as_secs_f64();
        let mut v = self;
        v.check(format!("runtime {elapsed:.1} s < {budget_s} s"), elapsed < budget_s);
        let pass = v.clauses.iter().all(|(_, ok)| *ok);
        println!("criterion {}: {}", v.criterion, if pass { "PASS" } else { "FAIL" });
        let failed: Vec<&str> = v.clauses.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect();
        assert!(pass, "criterion {} failed: {failed:?}", v.criterion);
    }
}

// Criterion 1 ---------------------------------------------------------------

/// `[[X, −Y], [Y, X]]`: real matrix whose spectrum is that of `X + iY`
/// together with its conjugate.
fn realify(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(x);
    m.view_mut((n, n), (n, n)).copy_from(x);
    m.view_mut((0, n), (n, n)).copy_from(&(-y));
    m.view_mut((n, 0), (n, n)).copy_from(y);
    m
}

/// Nonzero eigenvalues of the non-Hermitian product `C̃Õ` from a real
/// Schur decomposition, sorted descending.
fn co_eigenvalues_oracle(cov: &CovarianceOperator, form: &QuadraticForm) -> Vec<f64> {
    let (o_re, o_im) = form.to_dense();
    let c = cov.matrix();
    let (product, doubled) = match o_im {
        None => (c * &o_re, false),
        Some(im) => (realify(&(c * &o_re), &(c * &im)), true),
    };
    let ev = product.complex_eigenvalues();
    let scale = ev.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut vals: Vec<f64> = ev.iter().filter(|z| z.norm() > 1e-8 * scale).map(|z| z.re).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    if doubled {
        vals = vals.iter().step_by(2).copied().collect();
    }
    vals
}

fn random_pair(seed: u64) -> (CovarianceOperator, QuadraticForm) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let complex = seed % 3 == 2;
    let n = if complex { 2 * rng.random_range(40..75) + 1 } else { 2 * rng.random_range(50..150) + 1 };
    let kind = if complex { FieldKind::Complex } else { FieldKind::Real };
    let g = Arc::new(Grid::cube(1, 3.0, n, 1, kind).unwrap());
    let kernel = if seed % 2 == 0 {
        ScalarKernel::Exponential { corr_length: rng.random_range(0.2..2.0) }
    } else {
        ScalarKernel::Gaussian { sigma: rng.random_range(0.1..0.3) }
    };
    let c = CovarianceOperator::assemble_scalar(g.clone(), kernel).unwrap();
    let r = rng.random_range(1..=6);
    let fs: Vec<Functional> = (0..r)
        .map(|_| Functional::new((0..rng.random_range(1..=3)).map(|_| (rng.random_range(0..n), 0, rng.random_range(-1.0..1.0))).collect()))
        .collect();
    let s_re = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
    let s_im = complex.then(|| DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0)));
    (c, QuadraticForm::factored(g, fs, s_re, s_im).unwrap())
}

#[test]
fn criterion_1_spectral_equivalence() {
    let t0 = Instant::now();
    let mut v = Verdict::new(1);
    let mut worst_rel = 0.0f64;
    let mut worst_res = 0.0f64;
    let mut counts_match = true;
    let mut max_dim = 0;
    for seed in 0..10u64 {
        let (c, o) = random_pair(1000 + seed);
        max_dim = max_dim.max(c.grid().len());
        let oracle = co_eigenvalues_oracle(&c, &o);
        for m in [low_rank_spectrum(&c, &o, TOL_DEG).unwrap(), dense_spectrum(&c, &o, TOL_DEG).unwrap()] {
            let mut ev = m.eigenvalues().to_vec();
            ev.sort_by(|a, b| b.total_cmp(a));
            if ev.len() != oracle.len() {
                println!("  seed {seed}: {} modes of M vs {} nonzero eigenvalues of C̃Õ", ev.len(), oracle.len());
                counts_match = false;
                continue;
            }
            for (a, b) in ev.iter().zip(&oracle) {
                worst_rel = worst_rel.max((a - b).abs() / b.abs());
            }
        }
        for pair in restricted_co_spectrum(&c, &o).unwrap() {
            worst_res = worst_res.max(pair.relative_residual);
        }
    }
    v.check(format!("10 pairs, largest dimension {max_dim} ≤ 300"), max_dim <= 300);
    v.check("nonzero counts of M and C̃Õ agree", counts_match);
    v.check(format!("max relative eigenvalue difference {worst_rel:.2e} ≤ 1e-9"), worst_rel <= 1e-9);
    v.check(format!("max residual ‖C̃Õβ − λβ‖/(|λ₁|‖β‖) = {worst_res:.2e} ≤ 1e-8"), worst_res <= 1e-8);
    v.finish(t0, 60.0);
}

// Criteria 2 and 7 ----------------------------------------------------------

fn point_experiment() -> (Experiment, ScalarKernel, Arc<Grid>) {
    let kernel = ScalarKernel::Gaussian { sigma: 1.0 };
    let grid = Arc::new(default_point_grid(1.0).unwrap());
    let (c, o) = point_setup(kernel, grid.clone()).unwrap();
    (Experiment::new(c, o).unwrap(), kernel, grid)
}

fn point_pipeline(seed: u64) -> (Experiment, Vec<f64>, ConcentrationCurve, Vec<ProfileReport>) {
    let (exp, kernel, grid) = point_experiment();
    let us = default_u_grid(&exp, Sign::Plus).unwrap();
    let cfg = CurveConfig { epsilon: EPSILON, samples_per_u: SAMPLES_PER_U, seed, method: None };
    let (curve, runs) = concentration_curve_with_runs(&exp, Sign::Plus, &us, &cfg).unwrap();
    let predicted = PredictedProfile::Scalar(point_prediction(&kernel, grid).unwrap().profile);
    let reports = runs.iter().map(|r| profile_check(&exp, &r.ensemble, &predicted).unwrap()).collect();
    (exp, us, curve, reports)
}

#[test]
fn criterion_2_point_pipeline() {
    let t0 = Instant::now();
    let mut v = Verdict::new(2);
    let (exp, us, curve, reports) = point_pipeline(SEED);
    let l1 = exp.spectrum().leading(Sign::Plus).unwrap();
    v.check(format!("λ₁ = {l1:.12} within 1e-6 of C(0) = 1"), (l1 - 1.0).abs() <= 1e-6);

    let (_, kernel, grid) = point_experiment();
    let predicted = point_prediction(&kernel, grid).unwrap().profile;
    let basis = fundamental_basis(exp.spectrum(), Sign::Plus).unwrap();
    let b = &basis.vectors()[0];
    let cos = predicted.inner_product(b).unwrap().norm() / b.l2_norm();
    v.check(format!("cosine(fundamental profile, C(x)/‖C‖) = {cos:.9} ≥ 0.999"), cos >= 0.999);

    let last = curve.points.last().unwrap();
    v.check(format!("largest threshold u = {:.4} uses tilting", last.u), last.method == Method::Tilted);
    let frac = reports.last().unwrap().fraction_below(EPSILON);
    v.check(format!("fraction with aligned error < {EPSILON} at 4×q99 = {frac:.4} ≥ 0.95"), frac >= 0.95);
    let medians: Vec<f64> = reports.iter().map(|r| r.median_error).collect();
    println!("  thresholds {us:.4?}");
    println!("  median aligned errors {medians:.4?}");
    v.check("median aligned error strictly decreasing in u", medians.windows(2).all(|w| w[1] < w[0]));
    v.finish(t0, 300.0);
}

// Criterion 3 ---------------------------------------------------------------

#[test]
fn criterion_3_helicity_eigenstructure() {
    let t0 = Instant::now();
    let mut v = Verdict::new(3);
    let kernel = IsotropicFlowKernel::gaussian(3.0, 1.0).unwrap();
    let (lp, lm, deg) = helicity_eigenvalues(3.0, 1.0).unwrap();
    let exact = 5f64.sqrt() * 3.0 / 3.0;
    v.check("closed form √5E/3ℓ", (lp - exact).abs() < 1e-15 && lm == -lp && deg == 3);

    let analytic = analytic_helicity_spectrum(&kernel).unwrap();
    let plus: Vec<f64> = analytic.iter().copied().filter(|x| *x > 0.0).collect();
    let minus: Vec<f64> = analytic.iter().copied().filter(|x| *x < 0.0).collect();
    let err = analytic.iter().map(|x| (x.abs() - exact).abs()).fold(0.0, f64::max);
    v.check(format!("analytic low-rank route: spectrum {analytic:.12?}, max error {err:.1e} ≤ 1e-10"), err <= 1e-10);
    v.check("degeneracy 3 per sign", plus.len() == 3 && minus.len() == 3);

    let rel = |n: usize| {
        let grid = Arc::new(if n == 13 { default_helicity_grid(1.0).unwrap() } else { Grid::cube(3, 2.0, n, 3, FieldKind::Real).unwrap() });
        let s = helicity_grid_spectrum(&kernel, grid, CurlStencil::FourthOrder).unwrap();
        let lead = s.leading(Sign::Plus).unwrap();
        let lead_m = s.leading(Sign::Minus).unwrap();
        println!("  {n}³ grid: λ₊ = {lead:.8}, λ₋ = {lead_m:.8}, degeneracies {} / {}", s.degeneracy(Sign::Plus), s.degeneracy(Sign::Minus));
        ((lead - exact).abs() / exact).max((lead_m + exact).abs() / exact)
    };
    let (e13, e17) = (rel(13), rel(17));
    v.check(format!("13³ grid route within 5% (relative error {e13:.3e})"), e13 < 0.05);
    v.check(format!("17³ discrepancy {e17:.3e} below 13³ discrepancy {e13:.3e}"), e17 < e13);

    let hs = [0.1, 0.05, 0.025, 0.0125];
    for axis in 0..3 {
        let rep = curl_curl_identity_check(&kernel, axis, &hs).unwrap();
        let last = *rep.rows.last().unwrap();
        let order = *rep.orders.last().unwrap();
        v.check(
            format!("axis {axis}: curl–curl → {:.6} (value {:.6} at h = {}), observed order {order:.3} ≥ 1.9", rep.limit, last.value, last.h),
            order >= 1.9 && (rep.limit - 10.0).abs() < 1e-12,
        );
    }
    v.finish(t0, 600.0);
}

// Criterion 4 ---------------------------------------------------------------

fn concentration_clauses(v: &mut Verdict, label: &str, curve: &ConcentrationCurve, min_fraction: f64) {
    for p in &curve.points {
        println!(
            "  {label} u = {:.4} [{}] P(D > ε) = {:.4} ± {:.4}, ESS = {:.0}, frac(D < ε) = {:.4}, median D = {:.4}",
            p.u, p.method, p.p_exceed, p.p_err, p.ess, p.frac_below_eps, p.median_d
        );
    }
    let viol = curve.monotonicity_violations();
    v.check(format!("{label}: P_u(D > 0.25) non-increasing beyond 1σ (violations at {viol:?})"), viol.is_empty());
    let frac = curve.points.last().unwrap().frac_below_eps;
    v.check(format!("{label}: fraction with D < 0.25 at largest u = {frac:.4} ≥ {min_fraction}"), frac >= min_fraction);
    let ess = curve.points.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min);
    v.check(format!("{label}: min ESS {ess:.0} ≥ 100"), ess >= 100.0);
}

#[test]
fn criterion_4_concentration() {
    let t0 = Instant::now();
    let mut v = Verdict::new(4);
    let cfg = CurveConfig { epsilon: EPSILON, samples_per_u: SAMPLES_PER_U, seed: SEED, method: None };

    let (point, _, _) = point_experiment();
    let us = default_u_grid(&point, Sign::Plus).unwrap();
    let (curve, _) = concentration_curve_with_runs(&point, Sign::Plus, &us, &cfg).unwrap();
    concentration_clauses(&mut v, "point", &curve, 0.9);

    let kernel = IsotropicFlowKernel::gaussian(3.0, 1.0).unwrap();
    let grid = Arc::new(ensemble_helicity_grid(1.0).unwrap());
    let (c, o) = helicity_setup(kernel, grid, CurlStencil::FourthOrder).unwrap();
    let hel = Experiment::new(c, o).unwrap();
    println!("  helicity 7³ spectrum: λ₊ = {:.6} (degeneracy {})", hel.spectrum().leading(Sign::Plus).unwrap(), hel.spectrum().degeneracy(Sign::Plus));
    let us = default_u_grid(&hel, Sign::Plus).unwrap();
    let (curve, _) = concentration_curve_with_runs(&hel, Sign::Plus, &us, &cfg).unwrap();
    concentration_clauses(&mut v, "helicity", &curve, 0.8);
    v.finish(t0, 900.0);
}

// Criterion 5 ---------------------------------------------------------------

/// `P(Σ λ_j |t_j|² > u)` for distinct complex modes by partial fractions:
/// `Σ_{λ_j > 0} Π_{k≠j} λ_j/(λ_j − λ_k) e^{−u/λ_j}` for `u ≥ 0`.
fn partial_fractions(lams: &[f64], u: f64) -> f64 {
    lams.iter()
        .enumerate()
        .filter(|(_, l)| **l > 0.0)
        .map(|(j, &lj)| {
            let w: f64 = lams.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, &lk)| lj / (lj - lk)).product();
            w * (-u / lj).exp()
        })
        .sum()
}

#[test]
fn criterion_5_tails() {
    let t0 = Instant::now();
    let mut v = Verdict::new(5);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut profiles = Vec::new();
    for _ in 0..5 {
        let n = rng.random_range(2..=6);
        let mut lams: Vec<f64> = (0..n)
            .map(|i| if i == 0 { rng.random_range(1.0..3.0) } else { rng.random_range(-2.0..1.0) })
            .collect();
        lams.retain(|l| l.abs() > 0.05);
        let p = EigenvalueProfile::from_values(FieldKind::Complex, &lams).unwrap();
        for u in [0.0, 0.5, 2.0, 5.0, 12.0] {
            let oracle = partial_fractions(&lams, u);
            let inv = tail_inversion(&p, u).unwrap();
            let cf = tail_closed_form(&p, u).unwrap();
            worst = worst.max((inv - oracle).abs()).max((cf - oracle).abs()).max((inv - cf).abs());
        }
        profiles.push(p);
    }
    v.check(format!("inversion vs partial fractions on 5 complex profiles: max |Δ| = {worst:.2e} ≤ 1e-6"), worst <= 1e-6);

    let lam = 1.7;
    let single = EigenvalueProfile::from_values(FieldKind::Real, &[lam]).unwrap();
    let mut worst_real = 0.0f64;
    for u in [0.1, 1.0, 3.0, 8.0, 20.0] {
        let oracle = erfc((u / (2.0 * lam)).sqrt());
        worst_real = worst_real.max((tail_inversion(&single, u).unwrap() - oracle).abs());
    }
    v.check(format!("real single mode vs normal tail: max |Δ| = {worst_real:.2e} ≤ 1e-8"), worst_real <= 1e-8);

    profiles.push(single);
    profiles.push(EigenvalueProfile::from_values(FieldKind::Real, &[2.0, 2.0, 1.0, -0.5]).unwrap());
    profiles.push(EigenvalueProfile::from_values(FieldKind::Complex, &[1.0, 1.0, 1.0, -1.0, -1.0, -1.0]).unwrap());
    for (i, p) in profiles.iter().enumerate() {
        let (a, b) = default_scan_range(p).unwrap();
        let scan = asymptotic_scan(p, a, b, 60).unwrap();
        let Some(vs) = scan.v_star else {
            v.check(format!("profile {i}: ratio ρ/ρ_asym never settles in [0.95, 1.05]"), false);
            continue;
        };
        let tail_ok = scan.points.iter().filter(|q| q.v >= vs).all(|q| {
            let bound = tail_lower_bound(p, q.v, 0.5).unwrap().0;
            tail_inversion(p, q.v).unwrap() >= bound
        });
        v.check(format!("profile {i}: ratio stays in band beyond v* = {vs:.3}; lower bound (α = 0.5) holds there"), tail_ok);
    }
    v.finish(t0, 60.0);
}

// Criterion 6 ---------------------------------------------------------------

#[test]
fn criterion_6_sampler_statistics() {
    let t0 = Instant::now();
    let mut v = Verdict::new(6);
    let g = Arc::new(Grid::cube(1, 2.0, 9, 1, FieldKind::Complex).unwrap());
    let c = CovarianceOperator::assemble_scalar(g.clone(), ScalarKernel::Exponential { corr_length: 1.0 }).unwrap();
    let fs = vec![Functional::point(4, 0), Functional::point(1, 0), Functional::point(7, 0)];
    let s = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, -0.5, 0.2, 0.0, 0.2, 0.8]);
    let o = QuadraticForm::factored(g, fs, s, None).unwrap();
    let spectrum = low_rank_spectrum(&c, &o, TOL_DEG).unwrap();

    let total = 1_000_000usize;
    let mut rng = RngStream::new(SEED, 0);
    let width = spectrum.len();
    let mut sum = vec![Complex64::new(0.0, 0.0); width];
    let mut sum_abs2 = vec![0.0; width];
    let mut sum_sq = vec![Complex64::new(0.0, 0.0); width];
    for _ in 0..10 {
        for sample in sample_coefficients(&mut rng, &spectrum, total / 10) {
            for (k, t) in sample.t.iter().enumerate() {
                sum[k] += t;
                sum_abs2[k] += t.norm_sqr();
                sum_sq[k] += t * t;
            }
        }
    }
    let n = total as f64;
    // Re t and Im t have variance ½; |t|² ~ Exp(1); Re t², Im t² have variance 1.
    let (sd_mean, sd_var, sd_pseudo) = ((0.5 / n).sqrt(), (1.0 / n).sqrt(), (1.0 / n).sqrt());
    let mut z_max = 0.0f64;
    for k in 0..width {
        let m = sum[k] / n;
        let var = sum_abs2[k] / n;
        let pv = sum_sq[k] / n;
        z_max = z_max
            .max(m.re.abs() / sd_mean)
            .max(m.im.abs() / sd_mean)
            .max((var - 1.0).abs() / sd_var)
            .max(pv.re.abs() / sd_pseudo)
            .max(pv.im.abs() / sd_pseudo);
    }
    v.check(format!("10⁶ draws over {width} modes: max |z| of mean/variance/pseudo-variance = {z_max:.2} ≤ 3"), z_max <= 3.0);

    let (point, _, _) = point_experiment();
    let basis = fundamental_basis(point.spectrum(), Sign::Plus).unwrap();
    let u = default_u_grid(&point, Sign::Plus).unwrap()[1];
    let mean_d = |m: Method, stream: u64| {
        let cfg = CurveConfig { epsilon: EPSILON, samples_per_u: 4000, seed: SEED, method: Some(m) };
        let run = conditioned_run(&point, &basis, Sign::Plus, u, &cfg, stream).unwrap();
        run.ensemble.weighted_mean(&run.reports.iter().map(|r| r.distance).collect::<Vec<_>>())
    };
    let ((ma, sa), (mb, sb)) = (mean_d(Method::Rejection, 0), mean_d(Method::Tilted, 1));
    let z = (ma - mb).abs() / (sa * sa + sb * sb).sqrt();
    v.check(
        format!("E_u[D] at u = q90 = {u:.4}: rejection {ma:.4} ± {sa:.4}, tilted {mb:.4} ± {sb:.4}, |z| = {z:.2} ≤ 3"),
        z <= 3.0,
    );
    v.finish(t0, 120.0);
}

// Criterion 7 ---------------------------------------------------------------

#[test]
fn criterion_7_determinism() {
    let t0 = Instant::now();
    let mut v = Verdict::new(7);
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let (_, _, curve, _) = point_pipeline(SEED);
        let path = dir.path().join(format!("curve_{run}.csv"));
        std::fs::write(&path, curve_csv(&curve)).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    v.check(format!("two runs with seed {SEED} give byte-identical CSVs ({} bytes)", bytes[0].len()), bytes[0] == bytes[1]);
    let (_, _, other, _) = point_pipeline(SEED + 1);
    v.check("a different seed changes the CSV", curve_csv(&other).into_bytes() != bytes[0]);
    v.finish(t0, 600.0);
}
