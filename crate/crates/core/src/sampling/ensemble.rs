//! Conditional ensembles `{±Q > u}` by rejection or exponential tilting.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{draw_xi, RngStream, SpectralCoefficients};
use crate::spectral::SignedSpectrum;
use crate::{Error, FieldKind, Result, Sign};

/// Relative distance kept between the tilt and its pole.
pub const TILT_CAP: f64 = 1e-6;

/// Rejection gives up after this many draws with fewer than
/// [`GUARD_MIN_ACCEPTED`] acceptances.
const GUARD_DRAWS: u64 = 10_000_000;
const GUARD_MIN_ACCEPTED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rejection,
    Tilted,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rejection => "rejection",
            Method::Tilted => "tilted",
        })
    }
}

/// `(c, s)` with `E_θ[λ|t|²] = λ / (1 − cθλ)` and density ratio
/// `Π (1 − cθλ)^{-1/s}`.
fn kind_constants(kind: FieldKind) -> (f64, f64) {
    match kind {
        FieldKind::Complex => (1.0, 1.0),
        FieldKind::Real => (2.0, 2.0),
    }
}

/// Tilt `θ ≥ 0` with `E_θ[sign · Q] = u` under the density `∝ exp(θ · sign · Q)`.
///
/// Returns 0 when `u` does not exceed the unconditional mean. The tilt is
/// capped at `(1 − 1e-6)/(c λ_max)`.
pub fn tilt_parameter(eigenvalues: &[f64], u: f64, kind: FieldKind, sign: Sign) -> Result<f64> {
    let (c, _) = kind_constants(kind);
    let s = sign.factor();
    let lmax = eigenvalues.iter().map(|l| s * l).fold(f64::NEG_INFINITY, f64::max);
    if !(lmax > 0.0) {
        return Err(Error::EmptyBranch(sign));
    }
    let mean = |theta: f64| -> f64 { eigenvalues.iter().map(|l| s * l / (1.0 - c * theta * s * l)).sum() };
    if u <= mean(0.0) {
        return Ok(0.0);
    }
    let cap = (1.0 - TILT_CAP) / (c * lmax);
    if mean(cap) < u {
        return Err(Error::InfeasibleTilt { u });
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone)]
pub struct EnsembleSample {
    pub coeffs: SpectralCoefficients,
    pub q: f64,
    /// `−θ · sign · Q`, the log importance weight up to a constant.
    pub log_weight: f64,
}

/// Weighted realisations with `sign · Q > u`.
#[derive(Debug, Clone)]
pub struct ConditionalEnsemble {
    pub sign: Sign,
    pub u: f64,
    pub method: Method,
    pub theta: f64,
    pub samples: Vec<EnsembleSample>,
    /// Proposals drawn, accepted or not.
    pub draws: u64,
    /// `log Π (1 − cθ·sign·λ)^{-1/s}`, the proposal-to-target normaliser.
    pub log_normalizer: f64,
}

impl ConditionalEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Importance weights scaled so the largest is 1; all ones for rejection.
    pub fn weights(&self) -> Vec<f64> {
        let m = self.samples.iter().map(|s| s.log_weight).fold(f64::NEG_INFINITY, f64::max);
        self.samples.iter().map(|s| (s.log_weight - m).exp()).collect()
    }

    /// `(Σw)² / Σw²`.
    pub fn ess(&self) -> f64 {
        let w = self.weights();
        let s1: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|x| x * x).sum();
        if s2 == 0.0 {
            0.0
        } else {
            s1 * s1 / s2
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.samples.len() as f64 / self.draws as f64
    }

    /// Estimate of `P(sign · Q > u)` with its standard error.
    pub fn exceedance_probability(&self) -> (f64, f64) {
        let n = self.draws as f64;
        if self.samples.is_empty() {
            return (0.0, 0.0);
        }
        let m = self.samples.iter().map(|s| s.log_weight).fold(f64::NEG_INFINITY, f64::max);
        let w = self.weights();
        let s1: f64 = w.iter().sum::<f64>() / n;
        let s2: f64 = w.iter().map(|x| x * x).sum::<f64>() / n;
        let scale = (self.log_normalizer + m).exp();
        let var = ((s2 - s1 * s1) / n).max(0.0);
        (scale * s1, scale * var.sqrt())
    }

    /// Self-normalised weighted mean of per-sample values with its
    /// delta-method standard error.
    pub fn weighted_mean(&self, values: &[f64]) -> (f64, f64) {
        let w = self.weights();
        let sw: f64 = w.iter().sum();
        let mean = w.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / sw;
        let var = w.iter().zip(values).map(|(w, v)| (w * (v - mean)).powi(2)).sum::<f64>() / (sw * sw);
        (mean, var.sqrt())
    }
}

/// Draws `count` realisations conditioned on `sign · Q > u`.
///
/// Rejection samples the unconditional law. Tilting inflates the variance
/// of mode `n` by `(1 − cθ·sign·λ_n)^{-1}` and weights each sample by
/// `exp(−θ·sign·Q)`; zero-space noise is never tilted.
pub fn conditional_ensemble(
    spectrum: &SignedSpectrum,
    sign: Sign,
    u: f64,
    method: Method,
    count: usize,
    rng: &mut RngStream,
) -> Result<ConditionalEnsemble> {
    if spectrum.degeneracy(sign) == 0 {
        return Err(Error::EmptyBranch(sign));
    }
    let kind = spectrum.kind();
    let (c, s_pow) = kind_constants(kind);
    let s = sign.factor();
    let lam = spectrum.eigenvalues();
    let theta = match method {
        Method::Rejection => 0.0,
        Method::Tilted => tilt_parameter(lam, u, kind, sign)?,
    };
    let sd: Vec<f64> = lam.iter().map(|l| (1.0 / (1.0 - c * theta * s * l)).sqrt()).collect();
    let log_normalizer = -lam.iter().map(|l| (1.0 - c * theta * s * l).ln()).sum::<f64>() / s_pow;

    let mut samples = Vec::with_capacity(count);
    let mut draws: u64 = 0;
    let mut t = vec![Complex64::new(0.0, 0.0); lam.len()];
    while samples.len() < count {
        if samples.len() < GUARD_MIN_ACCEPTED && draws >= GUARD_DRAWS {
            return Err(Error::AcceptanceGuard { draws, accepted: samples.len() });
        }
        draws += 1;
        let mut q = 0.0;
        for ((tn, sdn), l) in t.iter_mut().zip(&sd).zip(lam) {
            *tn = rng.standard(kind) * *sdn;
            q += l * tn.norm_sqr();
        }
        if s * q > u {
            let xi = draw_xi(rng, spectrum);
            samples.push(EnsembleSample {
                coeffs: SpectralCoefficients { kind, t: t.clone(), xi },
                q,
                log_weight: -theta * s * q,
            });
        }
    }
    debug_assert!(samples.iter().all(|x| s * x.q > u));
    Ok(ConditionalEnsemble { sign, u, method, theta, samples, draws, log_normalizer })
}
