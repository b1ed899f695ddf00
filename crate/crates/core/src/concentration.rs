//! Decay of the mismatch probability `P_u(D > ε)` with the threshold `u`.
//!
//! Each threshold gets its own conditional ensemble drawn from an
//! independent random stream, so curves are reproducible for a given seed
//! regardless of how the thresholds are scheduled across threads.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::Field;
use crate::operators::{CovarianceOperator, IsotropicFlowKernel, QuadraticForm};
use crate::sampling::{
    conditional_ensemble, fundamental_projection, reconstruct_field, ConditionalEnsemble, DistanceEvaluator,
    DistanceReport, Method, RngStream,
};
use crate::spectral::{build_m_spectrum, fundamental_basis, FundamentalBasis, SignedSpectrum, TOL_DEG};
use crate::tails::{tail_inversion, EigenvalueProfile};
use crate::{exemplars, Error, Result, Sign};

pub const DEFAULT_EPSILON: f64 = 0.25;
/// Quantiles of the unconditional `±Q` used for the default thresholds.
pub const DEFAULT_QUANTILES: [f64; 3] = [0.5, 0.9, 0.99];
/// Multiples of the top quantile appended to the default thresholds.
pub const TILTED_MULTIPLES: [f64; 2] = [2.0, 4.0];
/// Rejection is chosen while `P(±Q > u)` is at least this large.
pub const REJECTION_MIN_ACCEPTANCE: f64 = 1e-3;
/// Points with a smaller effective sample size are flagged unreliable.
pub const UNRELIABLE_ESS: f64 = 30.0;
/// Stream offset separating the two branches of a sign-split curve.
const MINUS_STREAM_OFFSET: u64 = 1 << 32;

/// Covariance, observable and their signed spectrum.
#[derive(Debug, Clone)]
pub struct Experiment {
    cov: CovarianceOperator,
    form: QuadraticForm,
    spectrum: SignedSpectrum,
}

impl Experiment {
    pub fn new(cov: CovarianceOperator, form: QuadraticForm) -> Result<Self> {
        let spectrum = build_m_spectrum(&cov, &form, TOL_DEG)?;
        Ok(Experiment { cov, form, spectrum })
    }

    pub fn cov(&self) -> &CovarianceOperator {
        &self.cov
    }

    pub fn form(&self) -> &QuadraticForm {
        &self.form
    }

    pub fn spectrum(&self) -> &SignedSpectrum {
        &self.spectrum
    }

    /// Eigenvalue profile of `sign · Q`.
    pub fn profile(&self, sign: Sign) -> Result<EigenvalueProfile> {
        let p = EigenvalueProfile::from_spectrum(&self.spectrum)?;
        Ok(match sign {
            Sign::Plus => p,
            Sign::Minus => p.negated(),
        })
    }
}

/// Exact quantile of `sign · Q` from the inverted distribution.
pub fn quantile(profile: &EigenvalueProfile, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1), got {q}")));
    }
    let target = 1.0 - q;
    let sd = profile.variance().sqrt();
    let mut lo = if profile.lambda_min().is_none() { 0.0 } else { profile.mean() - 10.0 * sd };
    while tail_inversion(profile, lo)? < target {
        lo -= 10.0 * sd;
    }
    let mut hi = profile.mean() + 10.0 * sd;
    while tail_inversion(profile, hi)? > target {
        hi += 10.0 * sd;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if tail_inversion(profile, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.abs().max(sd) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Quantiles `{0.5, 0.9, 0.99}` of the unconditional `sign · Q`, followed by
/// `2×` and `4×` the top quantile.
pub fn default_u_grid(experiment: &Experiment, sign: Sign) -> Result<Vec<f64>> {
    if experiment.spectrum.degeneracy(sign) == 0 {
        return Err(Error::EmptyBranch(sign));
    }
    let profile = experiment.profile(sign)?;
    let mut us = DEFAULT_QUANTILES.iter().map(|&q| quantile(&profile, q)).collect::<Result<Vec<_>>>()?;
    let top = *us.last().expect("three quantiles");
    us.extend(TILTED_MULTIPLES.iter().map(|m| m * top));
    Ok(us)
}

/// Settings shared by every threshold of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub epsilon: f64,
    pub samples_per_u: usize,
    pub seed: u64,
    /// `None` picks rejection or tilting per threshold.
    pub method: Option<Method>,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig { epsilon: DEFAULT_EPSILON, samples_per_u: 2000, seed: 0, method: None }
    }
}

/// Summary of one conditional ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub u: f64,
    pub method: Method,
    pub theta: f64,
    /// `P(±Q > u)` from the inverted distribution.
    pub acceptance_estimate: f64,
    pub p_exceed: f64,
    pub p_err: f64,
    pub ess: f64,
    pub median_d: f64,
    pub frac_below_eps: f64,
    /// Weighted mean of `±Q` over the ensemble.
    pub mean_q: f64,
    pub draws: u64,
    pub unreliable: bool,
}

/// A conditional ensemble together with its per-sample distances.
#[derive(Debug, Clone)]
pub struct ConditionedRun {
    pub point: CurvePoint,
    pub ensemble: ConditionalEnsemble,
    pub reports: Vec<DistanceReport>,
}

/// Weighted median of `values`.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i];
        if acc >= 0.5 * total {
            return values[i];
        }
    }
    values.get(*idx.last().unwrap_or(&0)).copied().unwrap_or(f64::NAN)
}

/// Kolmogorov–Smirnov distance between a sample in `[0, 1)` and the uniform law.
pub fn ks_uniform(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

fn choose_method(profile: &EigenvalueProfile, u: f64, forced: Option<Method>) -> Result<(Method, f64)> {
    let acceptance = tail_inversion(profile, u)?;
    let method = forced.unwrap_or(if acceptance >= REJECTION_MIN_ACCEPTANCE { Method::Rejection } else { Method::Tilted });
    Ok((method, acceptance))
}

/// Draws and summarises the ensemble `{sign · Q > u}` on random stream `stream`.
pub fn conditioned_run(
    experiment: &Experiment,
    basis: &FundamentalBasis,
    sign: Sign,
    u: f64,
    cfg: &CurveConfig,
    stream: u64,
) -> Result<ConditionedRun> {
    let profile = experiment.profile(sign)?;
    let (method, acceptance) = choose_method(&profile, u, cfg.method)?;
    let mut rng = RngStream::new(cfg.seed, stream);
    let ensemble = conditional_ensemble(&experiment.spectrum, sign, u, method, cfg.samples_per_u, &mut rng)?;
    let eval = DistanceEvaluator::new(&experiment.spectrum, &experiment.cov, basis)?;
    let reports = ensemble.samples.iter().map(|s| eval.evaluate(&s.coeffs)).collect::<Result<Vec<_>>>()?;
    for (i, r) in reports.iter().enumerate() {
        if r.distance > r.bound * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::InvariantViolated(format!(
                "sample {i} at u = {u}: D = {} exceeds 2‖δφ‖/‖φ̄‖ = {}",
                r.distance, r.bound
            )));
        }
    }
    let weights = ensemble.weights();
    let d: Vec<f64> = reports.iter().map(|r| r.distance).collect();
    let exceed: Vec<f64> = d.iter().map(|&x| if x > cfg.epsilon { 1.0 } else { 0.0 }).collect();
    let below: Vec<f64> = d.iter().map(|&x| if x < cfg.epsilon { 1.0 } else { 0.0 }).collect();
    let (p_exceed, p_err) = ensemble.weighted_mean(&exceed);
    let (frac_below_eps, _) = ensemble.weighted_mean(&below);
    let q: Vec<f64> = ensemble.samples.iter().map(|s| sign.factor() * s.q).collect();
    let (mean_q, _) = ensemble.weighted_mean(&q);
    if mean_q < u {
        return Err(Error::InvariantViolated(format!("conditional mean {mean_q} of ±Q below threshold {u}")));
    }
    let ess = ensemble.ess();
    let point = CurvePoint {
        u,
        method,
        theta: ensemble.theta,
        acceptance_estimate: acceptance,
        p_exceed,
        p_err,
        ess,
        median_d: weighted_median(&d, &weights),
        frac_below_eps,
        mean_q,
        draws: ensemble.draws,
        unreliable: ess < UNRELIABLE_ESS,
    };
    Ok(ConditionedRun { point, ensemble, reports })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationCurve {
    pub sign: Sign,
    pub epsilon: f64,
    pub seed: u64,
    pub samples_per_u: usize,
    pub leading_eigenvalue: f64,
    pub degeneracy: usize,
    pub points: Vec<CurvePoint>,
}

impl ConcentrationCurve {
    /// Indices `j` where `p_{j+1}` exceeds `p_j` by more than their combined
    /// one-sigma error.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        self.points
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].p_exceed - w[0].p_exceed > (w[0].p_err.powi(2) + w[1].p_err.powi(2)).sqrt())
            .map(|(j, _)| j)
            .collect()
    }

    pub fn is_non_increasing(&self) -> bool {
        self.monotonicity_violations().is_empty()
    }
}

fn check_u_list(u_list: &[f64], epsilon: f64) -> Result<()> {
    if u_list.is_empty() || u_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("thresholds must be nonempty and strictly ascending".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Conditional ensembles for every threshold, in parallel. Threshold `j`
/// uses random stream `stream_offset + j`.
pub fn conditioned_runs(
    experiment: &Experiment,
    sign: Sign,
    u_list: &[f64],
    cfg: &CurveConfig,
    stream_offset: u64,
) -> Result<Vec<ConditionedRun>> {
    check_u_list(u_list, cfg.epsilon)?;
    let basis = fundamental_basis(&experiment.spectrum, sign)?;
    u_list
        .par_iter()
        .enumerate()
        .map(|(j, &u)| conditioned_run(experiment, &basis, sign, u, cfg, stream_offset + j as u64))
        .collect()
}

fn curve_from_runs(experiment: &Experiment, sign: Sign, cfg: &CurveConfig, runs: &[ConditionedRun]) -> ConcentrationCurve {
    ConcentrationCurve {
        sign,
        epsilon: cfg.epsilon,
        seed: cfg.seed,
        samples_per_u: cfg.samples_per_u,
        leading_eigenvalue: experiment.spectrum.leading(sign).unwrap_or(f64::NAN),
        degeneracy: experiment.spectrum.degeneracy(sign),
        points: runs.iter().map(|r| r.point).collect(),
    }
}

/// `P_u(D > ε)` for each `u` in `u_list`.
pub fn concentration_curve(experiment: &Experiment, sign: Sign, u_list: &[f64], cfg: &CurveConfig) -> Result<ConcentrationCurve> {
    let runs = conditioned_runs(experiment, sign, u_list, cfg, 0)?;
    Ok(curve_from_runs(experiment, sign, cfg, &runs))
}

/// Concentration curve together with its ensembles.
pub fn concentration_curve_with_runs(
    experiment: &Experiment,
    sign: Sign,
    u_list: &[f64],
    cfg: &CurveConfig,
) -> Result<(ConcentrationCurve, Vec<ConditionedRun>)> {
    let runs = conditioned_runs(experiment, sign, u_list, cfg, 0)?;
    Ok((curve_from_runs(experiment, sign, cfg, &runs), runs))
}

/// Mismatch probability conditioned on `|Q| > u`, with `φ̄` taken on the
/// branch of the realised sign of `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitPoint {
    pub u: f64,
    /// `P(Q > u)` and `P(−Q > u)`.
    pub p_plus_event: f64,
    pub p_minus_event: f64,
    pub p_combined: f64,
    pub p_combined_err: f64,
    /// `P_u^+(D_+ > ε) + P_u^−(D_− > ε)`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignSplitCurve {
    pub plus: Option<ConcentrationCurve>,
    pub minus: Option<ConcentrationCurve>,
    pub combined: Vec<SplitPoint>,
    pub warning: Option<String>,
}

impl SignSplitCurve {
    /// Per-threshold z-scores of `p_+ − p_−`.
    pub fn branch_z_scores(&self) -> Vec<f64> {
        match (&self.plus, &self.minus) {
            (Some(p), Some(m)) => p
                .points
                .iter()
                .zip(&m.points)
                .map(|(a, b)| {
                    let s = (a.p_err.powi(2) + b.p_err.powi(2)).sqrt();
                    if s == 0.0 {
                        if a.p_exceed == b.p_exceed { 0.0 } else { f64::INFINITY }
                    } else {
                        (a.p_exceed - b.p_exceed) / s
                    }
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Both fixed-sign curves and the `|Q|`-conditioned combination.
///
/// The events `{Q > u}` and `{−Q > u}` are disjoint for `u ≥ 0`, so the
/// `|Q|`-conditioned probability is the mixture of the two branch curves
/// with weights `P(±Q > u)/(P(Q > u) + P(−Q > u))`.
pub fn sign_split_curve(experiment: &Experiment, u_list: &[f64], cfg: &CurveConfig) -> Result<SignSplitCurve> {
    check_u_list(u_list, cfg.epsilon)?;
    if u_list[0] < 0.0 {
        return Err(Error::InvalidArgument("sign-split thresholds must be non-negative".into()));
    }
    let has = |s: Sign| experiment.spectrum.degeneracy(s) > 0;
    let plus = if has(Sign::Plus) { Some(concentration_curve(experiment, Sign::Plus, u_list, cfg)?) } else { None };
    let minus = if has(Sign::Minus) {
        let runs = conditioned_runs(experiment, Sign::Minus, u_list, cfg, MINUS_STREAM_OFFSET)?;
        Some(curve_from_runs(experiment, Sign::Minus, cfg, &runs))
    } else {
        None
    };
    let warning = match (&plus, &minus) {
        (Some(_), Some(_)) => None,
        (None, None) => return Err(Error::InvalidArgument("observable has no nonzero eigenvalues".into())),
        _ => Some("one branch of the spectrum is empty; only the other fixed-sign curve is reported".to_string()),
    };
    let pp = experiment.profile(Sign::Plus)?;
    let pm = experiment.profile(Sign::Minus)?;
    let mut combined = Vec::with_capacity(u_list.len());
    for (j, &u) in u_list.iter().enumerate() {
        let (a, b) = (tail_inversion(&pp, u)?, tail_inversion(&pm, u)?);
        let pt = |c: &Option<ConcentrationCurve>| c.as_ref().map_or((0.0, 0.0), |c| (c.points[j].p_exceed, c.points[j].p_err));
        let (p1, e1) = pt(&plus);
        let (p2, e2) = pt(&minus);
        let (w1, w2) = (a / (a + b), b / (a + b));
        combined.push(SplitPoint {
            u,
            p_plus_event: a,
            p_minus_event: b,
            p_combined: w1 * p1 + w2 * p2,
            p_combined_err: ((w1 * e1).powi(2) + (w2 * e2).powi(2)).sqrt(),
            bound: p1 + p2,
        });
    }
    Ok(SignSplitCurve { plus, minus, combined, warning })
}

/// The profile an ensemble is expected to concentrate on.
#[derive(Debug, Clone)]
pub enum PredictedProfile {
    /// A fixed profile, matched up to a global phase.
    Scalar(Field),
    /// `u_±(x; e_t)` with `e_t` read off each sample's `φ̄(0)`.
    Helicity { kernel: IsotropicFlowKernel, sign: Sign },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    /// Aligned `L²` distance between `φ/‖φ‖` and the unit predicted profile.
    pub errors: Vec<f64>,
    pub weights: Vec<f64>,
    pub median_error: f64,
    /// Fitted phases `arg⟨p|φ⟩` in `[0, 2π)` (scalar profiles only).
    pub phases: Vec<f64>,
    /// KS distance of `phase/2π` from the uniform law (scalar profiles only).
    pub phase_ks: Option<f64>,
    /// Cosine between each sample's `φ̄` and its aligned prediction.
    pub fundamental_cosines: Vec<f64>,
}

impl ProfileReport {
    /// Weighted fraction of samples with aligned error below `eps`.
    pub fn fraction_below(&self, eps: f64) -> f64 {
        let total: f64 = self.weights.iter().sum();
        self.errors.iter().zip(&self.weights).filter(|(e, _)| **e < eps).map(|(_, w)| w).sum::<f64>() / total
    }
}

fn unit(f: &Field) -> Result<Field> {
    let n = f.l2_norm();
    if n == 0.0 {
        return Err(Error::InvalidArgument("zero profile".into()));
    }
    f.scale(Complex64::new(1.0 / n, 0.0))
}

/// Compares each realisation with the predicted profile after alignment.
pub fn profile_check(experiment: &Experiment, ensemble: &ConditionalEnsemble, predicted: &PredictedProfile) -> Result<ProfileReport> {
    if ensemble.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let basis = fundamental_basis(&experiment.spectrum, ensemble.sign)?;
    let mut errors = Vec::with_capacity(ensemble.len());
    let mut phases = Vec::new();
    let mut cosines = Vec::with_capacity(ensemble.len());
    let scalar = match predicted {
        PredictedProfile::Scalar(p) => {
            if p.grid() != experiment.spectrum.grid() {
                return Err(Error::GridMismatch);
            }
            Some(unit(p)?)
        }
        PredictedProfile::Helicity { .. } => None,
    };
    for s in &ensemble.samples {
        let phi = unit(&reconstruct_field(&s.coeffs, &experiment.spectrum, &experiment.cov)?)?;
        let bar = fundamental_projection(&s.coeffs, &basis)?;
        let bar_norm = bar.l2_norm();
        let (pred, phase) = match (predicted, &scalar) {
            (PredictedProfile::Scalar(_), Some(p)) => {
                let ov = p.inner_product(&phi)?;
                let th = ov.arg().rem_euclid(std::f64::consts::TAU);
                (p.scale(Complex64::from_polar(1.0, th))?, Some(th))
            }
            (PredictedProfile::Helicity { kernel, sign }, _) => {
                let o = bar.grid().origin();
                let v0 = [bar.value(o, 0).re, bar.value(o, 1).re, bar.value(o, 2).re];
                let n = (v0[0] * v0[0] + v0[1] * v0[1] + v0[2] * v0[2]).sqrt();
                if n == 0.0 {
                    return Err(Error::UndefinedDistance);
                }
                let e_t = [v0[0] / n, v0[1] / n, v0[2] / n];
                (unit(&exemplars::helicity_prediction(kernel, bar.grid().clone(), *sign, e_t)?)?, None)
            }
            _ => unreachable!("scalar profile is set exactly for scalar predictions"),
        };
        errors.push(phi.sub(&pred)?.l2_norm());
        if let Some(th) = phase {
            phases.push(th);
        }
        cosines.push(if bar_norm == 0.0 { 0.0 } else { pred.inner_product(&bar)?.norm() / bar_norm });
    }
    let weights = ensemble.weights();
    let phase_ks = (!phases.is_empty())
        .then(|| ks_uniform(&phases.iter().map(|t| t / std::f64::consts::TAU).collect::<Vec<_>>()));
    Ok(ProfileReport { median_error: weighted_median(&errors, &weights), errors, weights, phases, phase_ks, fundamental_cosines: cosines })
}
