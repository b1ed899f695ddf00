//! The experiments behind each subcommand. Each one fills in the defaults it
//! uses, writes its artifacts and returns a JSON summary for the manifest.

use std::sync::Arc;

use serde_json::{json, Value};

use qdgf_core::concentration::{
    concentration_curve, conditioned_run, default_u_grid, quantile, sign_split_curve, ConcentrationCurve, CurveConfig,
    Experiment as Setup, DEFAULT_EPSILON,
};
use qdgf_core::exemplars::{
    analytic_helicity_spectrum, curl_curl_identity_check, gram_identity_check, helicity_alpha, helicity_eigenvalues,
    helicity_prediction, helicity_subspace_angles, point_prediction,
};
use qdgf_core::io::{curve_csv, fmt_f64, spectrum_csv};
use qdgf_core::operators::{
    CovarianceOperator, CurlStencil, IsotropicFlowKernel, Kernel, KernelCovariance, QuadraticForm, ScalarKernel,
};
use qdgf_core::sampling::{quadratic_value, reconstruct_field, sample_coefficients, DistanceEvaluator, Method, RngStream};
use qdgf_core::spectral::{build_m_spectrum, fundamental_basis, SignedSpectrum, TOL_DEG};
use qdgf_core::tails::{
    asymptotic_scan, default_scan_range, tail_closed_form, tail_inversion, tail_lower_bound, tail_monte_carlo,
    EigenvalueProfile, MC_DEFAULT_DRAWS,
};
use qdgf_core::{Complex64, Error, FieldKind, Grid, Sign};

use crate::config::{KernelName, MethodChoice, ObservableName, RunConfig};
use crate::output::Outputs;
use crate::CliError;

type Res<T> = Result<T, CliError>;

const CURL_CURL_STEPS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Res<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(config_err(format!("`{name}` must be positive, got {v}")))
    }
}

fn sign_tag(sign: Sign) -> &'static str {
    match sign {
        Sign::Plus => "plus",
        Sign::Minus => "minus",
    }
}

/// Grid, kernel and observable described by a configuration.
struct Model {
    grid: Arc<Grid>,
    kernel: Kernel,
    form: QuadraticForm,
}

/// Resolves the model. `dense` selects the smaller default helicity grid,
/// used when the covariance will be eigendecomposed.
fn model(cfg: &mut RunConfig, dense: bool) -> Res<Model> {
    let observable = *cfg.observable.get_or_insert(ObservableName::Point);
    match observable {
        ObservableName::Point => {
            let kernel = match *cfg.kernel.get_or_insert(KernelName::Gaussian) {
                KernelName::Gaussian => ScalarKernel::Gaussian { sigma: positive("sigma", *cfg.sigma.get_or_insert(1.0))? },
                KernelName::Exponential => {
                    ScalarKernel::Exponential { corr_length: positive("corr_length", *cfg.corr_length.get_or_insert(1.0))? }
                }
                KernelName::Flow => return Err(config_err("the point observable needs a scalar kernel (gaussian or exponential)")),
            };
            let scale = cfg.sigma.or(cfg.corr_length).unwrap_or(1.0);
            let dim = *cfg.dim.get_or_insert(1);
            let hw = positive("half_width", *cfg.half_width.get_or_insert(3.0 * scale))?;
            let points = *cfg.points.get_or_insert(61);
            let kind = *cfg.kind.get_or_insert(FieldKind::Complex);
            let grid = Arc::new(Grid::cube(dim, hw, points, 1, kind)?);
            let form = QuadraticForm::point_intensity(grid.clone())?;
            Ok(Model { grid, kernel: kernel.into(), form })
        }
        ObservableName::Helicity => {
            if *cfg.kernel.get_or_insert(KernelName::Flow) != KernelName::Flow {
                return Err(config_err("the helicity observable needs the flow kernel"));
            }
            let energy = positive("energy", *cfg.energy.get_or_insert(3.0))?;
            let l = positive("taylor_scale", *cfg.taylor_scale.get_or_insert(1.0))?;
            let kernel = IsotropicFlowKernel::gaussian(energy, l)?;
            if *cfg.dim.get_or_insert(3) != 3 {
                return Err(config_err("the helicity observable lives in three dimensions (`dim` = 3)"));
            }
            let (hw, n) = if dense { (1.5 * l, 7) } else { (2.0 * l, 13) };
            let hw = positive("half_width", *cfg.half_width.get_or_insert(hw))?;
            let points = *cfg.points.get_or_insert(n);
            let kind = *cfg.kind.get_or_insert(FieldKind::Real);
            let stencil = *cfg.stencil.get_or_insert(CurlStencil::FourthOrder);
            let grid = Arc::new(Grid::cube(3, hw, points, 3, kind)?);
            let form = QuadraticForm::helicity_with(grid.clone(), stencil)?;
            Ok(Model { grid, kernel: kernel.into(), form })
        }
    }
}

fn dense_setup(cfg: &mut RunConfig) -> Res<Setup> {
    let m = model(cfg, true)?;
    let cov = CovarianceOperator::assemble(m.grid, m.kernel)?;
    Ok(Setup::new(cov, m.form)?)
}

fn spectrum_summary(s: &SignedSpectrum) -> Value {
    json!({
        "route": format!("{:?}", s.path()),
        "modes": s.len(),
        "leading_plus": s.leading(Sign::Plus),
        "leading_minus": s.leading(Sign::Minus),
        "degeneracy_plus": s.degeneracy(Sign::Plus),
        "degeneracy_minus": s.degeneracy(Sign::Minus),
        "trace_abs": s.trace_abs(),
    })
}

fn write_bases(out: &mut Outputs, s: &SignedSpectrum) -> Res<()> {
    for sign in [Sign::Plus, Sign::Minus] {
        if s.degeneracy(sign) == 0 {
            continue;
        }
        let basis = fundamental_basis(s, sign)?;
        for (k, b) in basis.vectors().iter().enumerate() {
            out.field(&format!("basis_{}_{k}.csv", sign_tag(sign)), b)?;
        }
    }
    Ok(())
}

pub fn spectrum(cfg: &mut RunConfig, out: &mut Outputs) -> Res<Value> {
    let m = model(cfg, false)?;
    // The helicity observable has a low-rank factorisation, so its spectrum
    // needs no eigendecomposed covariance.
    let s = match m.kernel {
        Kernel::Flow(_) => build_m_spectrum(&KernelCovariance::new(m.grid, m.kernel)?, &m.form, TOL_DEG)?,
        Kernel::Scalar(_) => build_m_spectrum(&CovarianceOperator::assemble(m.grid, m.kernel)?, &m.form, TOL_DEG)?,
    };
    out.write("spectrum.csv", spectrum_csv(&s))?;
    write_bases(out, &s)?;
    Ok(spectrum_summary(&s))
}

fn ensemble_table(rows: impl Iterator<Item = (usize, f64, f64, Option<f64>)>) -> String {
    let mut csv = String::from("sample_id,Q,weight,D\n");
    for (i, q, w, d) in rows {
        csv.push_str(&format!("{i},{},{},{}\n", fmt_f64(q), fmt_f64(w), d.map(fmt_f64).unwrap_or_default()));
    }
    csv
}

pub fn sample(cfg: &mut RunConfig, out: &mut Outputs) -> Res<Value> {
    let setup = dense_setup(cfg)?;
    let count = *cfg.samples.get_or_insert(100);
    let seed = *cfg.seed.get_or_insert(0);
    let sign = *cfg.sign.get_or_insert(Sign::Plus);
    let save = *cfg.save_fields.get_or_insert(true);
    let s = setup.spectrum();
    let eval = if s.degeneracy(sign) > 0 {
        Some(DistanceEvaluator::new(s, setup.cov(), &fundamental_basis(s, sign)?)?)
    } else {
        None
    };
    let mut rng = RngStream::new(seed, 0);
    let draws = sample_coefficients(&mut rng, s, count);
    let mut rows = Vec::with_capacity(count);
    for (i, t) in draws.iter().enumerate() {
        let d = eval.as_ref().map(|e| e.evaluate(t).map(|r| r.distance)).transpose()?;
        rows.push((i, quadratic_value(t, s), 1.0, d));
        if save {
            out.field(&format!("fields/sample_{i:05}.csv"), &reconstruct_field(t, s, setup.cov())?)?;
        }
    }
    out.write("samples.csv", ensemble_table(rows.into_iter()))?;
    Ok(json!({ "spectrum": spectrum_summary(s), "samples": count }))
}

fn method(cfg: &mut RunConfig) -> Option<Method> {
    match *cfg.method.get_or_insert(MethodChoice::Auto) {
        MethodChoice::Auto => None,
        MethodChoice::Rejection => Some(Method::Rejection),
        MethodChoice::Tilted => Some(Method::Tilted),
    }
}

/// Thresholds from `u`, else from `quantiles` of `sign · Q`, else `fallback`.
fn thresholds(cfg: &mut RunConfig, setup: &Setup, sign: Sign, fallback: impl FnOnce() -> Res<Vec<f64>>) -> Res<Vec<f64>> {
    let us = match (&cfg.u, &cfg.quantiles) {
        (Some(u), _) => u.clone(),
        (None, Some(qs)) => {
            let profile = setup.profile(sign)?;
            qs.iter().map(|&q| quantile(&profile, q)).collect::<qdgf_core::Result<Vec<_>>>()?
        }
        (None, None) => fallback()?,
    };
    if us.is_empty() || us.windows(2).any(|w| !(w[1] > w[0])) || us.iter().any(|u| !u.is_finite()) {
        return Err(config_err(format!("thresholds must be finite and strictly ascending, got {us:?}")));
    }
    cfg.u = Some(us.clone());
    Ok(us)
}

fn curve_config(cfg: &mut RunConfig, default_samples: usize) -> Res<CurveConfig> {
    let epsilon = positive("epsilon", *cfg.epsilon.get_or_insert(DEFAULT_EPSILON))?;
    let samples_per_u = *cfg.samples.get_or_insert(default_samples);
    if samples_per_u == 0 {
        return Err(config_err("`samples` must be positive"));
    }
    Ok(CurveConfig { epsilon, samples_per_u, seed: *cfg.seed.get_or_insert(0), method: method(cfg) })
}

pub fn condition(cfg: &mut RunConfig, out: &mut Outputs) -> Res<Value> {
    let setup = dense_setup(cfg)?;
    let sign = *cfg.sign.get_or_insert(Sign::Plus);
    let cc = curve_config(cfg, 1000)?;
    let save = *cfg.save_fields.get_or_insert(true);
    let us = thresholds(cfg, &setup, sign, || Ok(vec![quantile(&setup.profile(sign)?, 0.99)?]))?;
    if us.len() != 1 {
        return Err(config_err("`condition` takes a single threshold"));
    }
    let basis = fundamental_basis(setup.spectrum(), sign)?;
    let run = conditioned_run(&setup, &basis, sign, us[0], &cc, 0)?;
    let weights = run.ensemble.weights();
    let rows = run
        .ensemble
        .samples
        .iter()
        .zip(&weights)
        .zip(&run.reports)
        .enumerate()
        .map(|(i, ((s, &w), r))| (i, s.q, w, Some(r.distance)));
    out.write("ensemble.csv", ensemble_table(rows))?;
    if save {
        for (i, s) in run.ensemble.samples.iter().enumerate() {
            out.field(&format!("fields/sample_{i:05}.csv"), &reconstruct_field(&s.coeffs, setup.spectrum(), setup.cov())?)?;
        }
    }
    Ok(json!({
        "spectrum": spectrum_summary(setup.spectrum()),
        "point": run.point,
        "log_normalizer": run.ensemble.log_normalizer,
        "acceptance_rate": run.ensemble.acceptance_rate(),
    }))
}

pub fn concentration(cfg: &mut RunConfig, out: &mut Outputs) -> Res<Value> {
    let setup = dense_setup(cfg)?;
    let sign = *cfg.sign.get_or_insert(Sign::Plus);
    let cc = curve_config(cfg, 2000)?;
    let split = *cfg.split.get_or_insert(false);
    let us = thresholds(cfg, &setup, sign, || Ok(default_u_grid(&setup, sign)?))?;
    let summarise = |c: &ConcentrationCurve| {
        json!({
            "sign": sign_tag(c.sign),
            "leading_eigenvalue": c.leading_eigenvalue,
            "degeneracy": c.degeneracy,
            "non_increasing": c.is_non_increasing(),
            "monotonicity_violations": c.monotonicity_violations(),
            "unreliable_thresholds": c.points.iter().filter(|p| p.unreliable).map(|p| p.u).collect::<Vec<_>>(),
        })
    };
    if !split {
        let curve = concentration_curve(&setup, sign, &us, &cc)?;
        out.write("concentration.csv", curve_csv(&curve))?;
        return Ok(json!({ "curve": summarise(&curve) }));
    }
    let s = sign_split_curve(&setup, &us, &cc)?;
    let mut curves = Vec::new();
    for c in [&s.plus, &s.minus].into_iter().flatten() {
        out.write(&format!("concentration_{}.csv", sign_tag(c.sign)), curve_csv(c))?;
        curves.push(summarise(c));
    }
    let mut csv = String::from("u,p_plus_event,p_minus_event,p_combined,p_combined_err,bound\n");
    for p in &s.combined {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(p.u),
            fmt_f64(p.p_plus_event),
            fmt_f64(p.p_minus_event),
            fmt_f64(p.p_combined),
            fmt_f64(p.p_combined_err),
            fmt_f64(p.bound)
        ));
    }
    out.write("concentration_combined.csv", csv)?;
    if let Some(w) = &s.warning {
        eprintln!("warning: {w}");
    }
    Ok(json!({ "curves": curves, "branch_z_scores": s.branch_z_scores(), "warning": s.warning }))
}

pub fn tail(cfg: &mut RunConfig, out: &mut Outputs) -> Res<Value> {
    let eigs = cfg.eigs.clone().ok_or_else(|| config_err("`tail` needs `eigs`"))?;
    let kind = *cfg.kind.get_or_insert(FieldKind::Complex);
    let us = cfg.u.clone().ok_or_else(|| config_err("`tail` needs `u`"))?;
    let draws = *cfg.mc_draws.get_or_insert(MC_DEFAULT_DRAWS);
    let alpha = *cfg.alpha.get_or_insert(0.5);
    let seed = *cfg.seed.get_or_insert(0);
    let profile = EigenvalueProfile::from_values(kind, &eigs)?;
    let mut csv = String::from("u,P_inversion,P_closed_form,P_mc,mc_sigma,lower_bound,C1\n");
    for (j, &u) in us.iter().enumerate() {
        let inv = tail_inversion(&profile, u)?;
        let cf = match tail_closed_form(&profile, u) {
            Ok(p) => fmt_f64(p),
            Err(Error::ClosedFormUnavailable) => String::new(),
            Err(e) => return Err(e.into()),
        };
        let (mc, sd) = if draws > 0 {
            let est = tail_monte_carlo(&profile, u, draws, &mut RngStream::new(seed, j as u64))?;
            (fmt_f64(est.probability), fmt_f64(est.std_error))
        } else {
            (String::new(), String::new())
        };
        let (lb, c1) = if profile.lambda_max().is_some() && u > 0.0 {
            let (b, c) = tail_lower_bound(&profile, u, alpha)?;
            (fmt_f64(b), fmt_f64(c))
        } else {
            (String::new(), String::new())
        };
        csv.push_str(&format!("{},{},{cf},{mc},{sd},{lb},{c1}\n", fmt_f64(u), fmt_f64(inv)));
    }
    out.write("tail.csv", csv)?;
    let v_star = match profile.lambda_max() {
        Some(_) => {
            let (a, b) = default_scan_range(&profile)?;
            asymptotic_scan(&profile, a, b, 60)?.v_star
        }
        None => None,
    };
    Ok(json!({ "mean": profile.mean(), "variance": profile.variance(), "v_star": v_star }))
}

pub fn exemplar_point(cfg: &mut RunConfig, out: &mut Outputs) -> Res<Value> {
    cfg.observable = Some(ObservableName::Point);
    let m = model(cfg, true)?;
    let Kernel::Scalar(kernel) = m.kernel else { unreachable!("point observable resolves a scalar kernel") };
    let cov = CovarianceOperator::assemble(m.grid.clone(), m.kernel)?;
    let s = build_m_spectrum(&cov, &m.form, TOL_DEG)?;
    out.write("spectrum.csv", spectrum_csv(&s))?;
    let pred = point_prediction(&kernel, m.grid)?;
    out.field("profile.csv", &pred.profile)?;
    let basis = fundamental_basis(&s, Sign::Plus)?;
    let b = &basis.vectors()[0];
    let unit = b.scale(Complex64::new(1.0 / b.l2_norm(), 0.0))?;
    out.field("fundamental.csv", &unit)?;
    let overlap = pred.profile.inner_product(&unit)?;
    let aligned = unit.scale(Complex64::from_polar(1.0, -overlap.arg()))?;
    let lambda1 = s.leading(Sign::Plus).unwrap_or(f64::NAN);
    let report = json!({
        "lambda1": lambda1,
        "lambda1_predicted": pred.lambda1,
        "lambda1_error": (lambda1 - pred.lambda1).abs(),
        "degeneracy": s.degeneracy(Sign::Plus),
        "degeneracy_predicted": pred.degeneracy,
        "profile_cosine": overlap.norm(),
        "profile_l2_error": aligned.sub(&pred.profile)?.l2_norm(),
    });
    out.write("comparison.json", serde_json::to_string_pretty(&report).expect("plain JSON"))?;
    Ok(report)
}

pub fn exemplar_helicity(cfg: &mut RunConfig, out: &mut Outputs) -> Res<Value> {
    cfg.observable = Some(ObservableName::Helicity);
    let m = model(cfg, false)?;
    let Kernel::Flow(kernel) = m.kernel else { unreachable!("helicity observable resolves the flow kernel") };
    let stencil = cfg.stencil.unwrap_or_default();
    let cov = KernelCovariance::new(m.grid.clone(), m.kernel)?;
    let s = build_m_spectrum(&cov, &m.form, TOL_DEG)?;
    out.write("spectrum.csv", spectrum_csv(&s))?;
    let (lp, lm, deg) = helicity_eigenvalues(kernel.energy, kernel.taylor_scale)?;
    let analytic = analytic_helicity_spectrum(&kernel)?;
    let rel = |got: Option<f64>, want: f64| got.map(|g| (g - want).abs() / want.abs());
    let mut per_sign = serde_json::Map::new();
    for sign in [Sign::Plus, Sign::Minus] {
        let angles = helicity_subspace_angles(&s, &kernel, sign)?;
        let gram = gram_identity_check(&cov, &kernel, sign, stencil, helicity_alpha(&kernel))?;
        let rows: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| gram[(i, j)]).collect()).collect();
        per_sign.insert(sign_tag(sign).into(), json!({ "subspace_angles_deg": angles, "normalized_gram": rows }));
        for k in 0..3 {
            let mut e = [0.0; 3];
            e[k] = 1.0;
            let u = helicity_prediction(&kernel, m.grid.clone(), sign, e)?;
            out.field(&format!("u_{}_e{}.csv", sign_tag(sign), k + 1), &u)?;
        }
    }
    let curl_curl = (0..3)
        .map(|axis| curl_curl_identity_check(&kernel, axis, &CURL_CURL_STEPS))
        .collect::<qdgf_core::Result<Vec<_>>>()?;
    let report = json!({
        "lambda_plus_predicted": lp,
        "lambda_minus_predicted": lm,
        "degeneracy_predicted": deg,
        "analytic_spectrum": analytic,
        "grid_lambda_plus": s.leading(Sign::Plus),
        "grid_lambda_minus": s.leading(Sign::Minus),
        "grid_degeneracy_plus": s.degeneracy(Sign::Plus),
        "grid_degeneracy_minus": s.degeneracy(Sign::Minus),
        "relative_error_plus": rel(s.leading(Sign::Plus), lp),
        "relative_error_minus": rel(s.leading(Sign::Minus), lm),
        "branches": per_sign,
        "curl_curl": curl_curl,
    });
    out.write("comparison.json", serde_json::to_string_pretty(&report).expect("plain JSON"))?;
    Ok(report)
}
