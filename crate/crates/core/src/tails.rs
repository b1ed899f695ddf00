//! Law of `Q = Σ λ_n |t_n|²` (complex) or `Σ λ_n t_n²` (real).
//!
//! The characteristic function is `φ(k) = Π_n (1 − i c k λ_n)^{-m_n/s}`
//! with `(c, s) = (1, 1)` for complex fields and `(2, 2)` for real ones.
//! Densities and tails are obtained by integrating along the shifted line
//! `k = x − iγ`, where `γ` is the saddle point of `e^{-ikv} φ(k)` on the
//! imaginary axis. Every factor then has positive real part, so the
//! principal branch of the fractional powers is continuous along the path.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::quadrature::{integrate, wynn_epsilon};
use crate::sampling::RngStream;
use crate::spectral::SignedSpectrum;
use crate::{Error, FieldKind, Result, Sign};

/// One distinct eigenvalue and its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileMode {
    pub value: f64,
    pub multiplicity: usize,
}

/// Signed eigenvalues with multiplicities, sorted by decreasing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueProfile {
    kind: FieldKind,
    modes: Vec<ProfileMode>,
}

impl EigenvalueProfile {
    /// Groups exactly equal values. Zero values are dropped.
    pub fn from_values(kind: FieldKind, values: &[f64]) -> Result<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| *x != 0.0).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("eigenvalues must be finite".into()));
        }
        v.sort_by(|a, b| b.total_cmp(a));
        let mut modes: Vec<ProfileMode> = Vec::new();
        for x in v {
            match modes.last_mut() {
                Some(m) if m.value == x => m.multiplicity += 1,
                _ => modes.push(ProfileMode { value: x, multiplicity: 1 }),
            }
        }
        Self::from_modes(kind, modes)
    }

    pub fn from_modes(kind: FieldKind, mut modes: Vec<ProfileMode>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidArgument("profile needs at least one nonzero eigenvalue".into()));
        }
        if modes.iter().any(|m| m.multiplicity == 0 || !m.value.is_finite() || m.value == 0.0) {
            return Err(Error::InvalidArgument("modes need finite nonzero values and multiplicity ≥ 1".into()));
        }
        modes.sort_by(|a, b| b.value.total_cmp(&a.value));
        Ok(Self { kind, modes })
    }

    /// All nonzero modes of a spectrum, one entry per degenerate cluster.
    pub fn from_spectrum(spectrum: &SignedSpectrum) -> Result<Self> {
        Self::from_clusters(spectrum, |_| true)
    }

    /// The leading cluster of `sign` together with the whole opposite branch:
    /// the variable `V` whose density bounds `P(±Q > u)` from below.
    pub fn leading_and_opposite(spectrum: &SignedSpectrum, sign: Sign) -> Result<Self> {
        let r = spectrum.branch_range(sign);
        if r.is_empty() {
            return Err(Error::EmptyBranch(sign));
        }
        let lead = spectrum.cluster_ids()[r.start];
        let other = spectrum.branch_range(sign.flip());
        Self::from_clusters(spectrum, |n| spectrum.cluster_ids()[n] == lead || other.contains(&n))
    }

    fn from_clusters(spectrum: &SignedSpectrum, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let lam = spectrum.eigenvalues();
        let ids = spectrum.cluster_ids();
        let mut modes: Vec<(usize, f64, usize)> = Vec::new();
        for n in (0..lam.len()).filter(|&n| keep(n)) {
            match modes.last_mut() {
                Some((id, sum, m)) if *id == ids[n] => {
                    *sum += lam[n];
                    *m += 1;
                }
                _ => modes.push((ids[n], lam[n], 1)),
            }
        }
        let modes = modes
            .into_iter()
            .map(|(_, sum, m)| ProfileMode { value: sum / m as f64, multiplicity: m })
            .collect();
        Self::from_modes(spectrum.kind(), modes)
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn modes(&self) -> &[ProfileMode] {
        &self.modes
    }

    /// Profile of `−Q`.
    pub fn negated(&self) -> Self {
        let mut modes: Vec<ProfileMode> =
            self.modes.iter().map(|m| ProfileMode { value: -m.value, ..*m }).collect();
        modes.reverse();
        Self { kind: self.kind, modes }
    }

    /// Largest positive eigenvalue `λ_1`.
    pub fn lambda_max(&self) -> Option<f64> {
        self.modes.first().map(|m| m.value).filter(|v| *v > 0.0)
    }

    /// Most negative eigenvalue.
    pub fn lambda_min(&self) -> Option<f64> {
        self.modes.last().map(|m| m.value).filter(|v| *v < 0.0)
    }

    /// Multiplicity of `λ_1` (0 without a positive branch).
    pub fn leading_multiplicity(&self) -> usize {
        if self.lambda_max().is_some() {
            self.modes[0].multiplicity
        } else {
            0
        }
    }

    pub fn negatives(&self) -> impl Iterator<Item = &ProfileMode> {
        self.modes.iter().filter(|m| m.value < 0.0)
    }

    /// Total number of modes counted with multiplicity.
    pub fn total_multiplicity(&self) -> usize {
        self.modes.iter().map(|m| m.multiplicity).sum()
    }

    pub fn has_repeated(&self) -> bool {
        self.modes.iter().any(|m| m.multiplicity > 1)
    }

    /// `E[Q] = Σ m λ`.
    pub fn mean(&self) -> f64 {
        self.modes.iter().map(|m| m.multiplicity as f64 * m.value).sum()
    }

    /// `Var[Q]`: `Σ mλ²` complex, `2Σ mλ²` real.
    pub fn variance(&self) -> f64 {
        self.constants().1 * self.modes.iter().map(|m| m.multiplicity as f64 * m.value * m.value).sum::<f64>()
    }

    fn constants(&self) -> (f64, f64) {
        match self.kind {
            FieldKind::Complex => (1.0, 1.0),
            FieldKind::Real => (2.0, 2.0),
        }
    }

    /// Total exponent `Σ m / s` governing the decay `|φ(x)| ~ x^{-Σm/s}`.
    fn decay_order(&self) -> f64 {
        self.total_multiplicity() as f64 / self.constants().1
    }

    /// `ln φ(k)` for complex `k` inside the analyticity strip.
    fn log_cf(&self, k: Complex64) -> Complex64 {
        let (c, s) = self.constants();
        let i = Complex64::i();
        self.modes
            .iter()
            .map(|m| -(m.multiplicity as f64 / s) * (1.0 - i * c * k * m.value).ln())
            .sum()
    }

    /// Open interval of admissible `γ` on the line `k = x − iγ`.
    fn strip(&self) -> (f64, f64) {
        let c = self.constants().0;
        let hi = self.lambda_max().map_or(f64::INFINITY, |l| 1.0 / (c * l));
        let lo = self.lambda_min().map_or(f64::NEG_INFINITY, |l| 1.0 / (c * l));
        (lo, hi)
    }

    /// `d/dγ` of `−γv + ln φ(−iγ)`.
    fn saddle_equation(&self, gamma: f64, v: f64) -> f64 {
        let (c, s) = self.constants();
        -v + self
            .modes
            .iter()
            .map(|m| m.multiplicity as f64 / s * c * m.value / (1.0 - c * m.value * gamma))
            .sum::<f64>()
    }

    /// Curvature of `ln|φ|` along the shifted line at `x = 0`.
    fn curvature(&self, gamma: f64) -> f64 {
        let (c, s) = self.constants();
        self.modes
            .iter()
            .map(|m| {
                let q = c * m.value / (1.0 - c * m.value * gamma);
                m.multiplicity as f64 / s * q * q
            })
            .sum()
    }

    /// Root of the saddle equation, or `None` when it runs off the strip.
    fn saddle(&self, v: f64) -> Option<f64> {
        let (mut lo, mut hi) = self.strip();
        let scale = 1.0 / (self.constants().0 * self.modes.iter().map(|m| m.value.abs()).fold(0.0, f64::max));
        if lo == f64::NEG_INFINITY {
            let mut g = -scale;
            while self.saddle_equation(g, v) > 0.0 {
                g *= 2.0;
                if g < -1e300 {
                    return None;
                }
            }
            lo = g;
        }
        if hi == f64::INFINITY {
            let mut g = scale;
            while self.saddle_equation(g, v) < 0.0 {
                g *= 2.0;
                if g > 1e300 {
                    return None;
                }
            }
            hi = g;
        }
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.saddle_equation(mid, v) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// Relative accuracy requested from the inversion quadrature.
const INVERSION_RTOL: f64 = 1e-11;
/// Width of the central panel in units of the saddle width.
const CORE_WIDTHS: f64 = 40.0;
const MAX_TAIL_PANELS: usize = 400;

/// `(1/π) ∫_0^∞ Re f(x) dx` for `f` with `|f| ≲ x^{-p}` oscillating like
/// `e^{-ixw}` at large `x`.
fn half_line_integral(
    f: impl Fn(f64) -> f64,
    width: f64,
    w: f64,
    magnitude: f64,
) -> Result<f64> {
    let x1 = CORE_WIDTHS * width;
    let abs_tol = INVERSION_RTOL * magnitude * width;
    let (core, _) = integrate(&f, 0.0, x1, abs_tol, INVERSION_RTOL)?;
    if w == 0.0 {
        // x = x1 / s maps (x1, ∞) onto (0, 1).
        let (tail, _) = integrate(|s: f64| if s <= 0.0 { 0.0 } else { f(x1 / s) * x1 / (s * s) }, 0.0, 1.0, abs_tol, INVERSION_RTOL)?;
        return Ok((core + tail) / PI);
    }
    let half = PI / w.abs();
    let mut partial = Vec::with_capacity(64);
    let mut sum = 0.0;
    let mut last = f64::NAN;
    let mut settled = 0;
    for j in 0..MAX_TAIL_PANELS {
        let a = x1 + j as f64 * half;
        let (piece, _) = integrate(&f, a, a + half, abs_tol * 1e-2, INVERSION_RTOL)?;
        sum += piece;
        partial.push(sum);
        if partial.len() >= 4 {
            let est = wynn_epsilon(&partial[partial.len().saturating_sub(24)..]);
            settled = if (est - last).abs() <= abs_tol { settled + 1 } else { 0 };
            if settled >= 2 {
                return Ok((core + est) / PI);
            }
            last = est;
        }
    }
    Err(Error::Quadrature(format!("oscillatory tail did not settle (last estimate {last:.6e})")))
}

/// Density `ρ(v)` of `Q` by characteristic-function inversion.
pub fn pdf_inversion(profile: &EigenvalueProfile, v: f64) -> Result<f64> {
    let (lo, hi) = profile.strip();
    let has_pos = hi.is_finite();
    let has_neg = lo.is_finite();
    if v == 0.0 && profile.decay_order() <= 1.0 {
        return Err(Error::InvalidArgument(
            "density is not integrable at v = 0 for this profile (Σ m/s ≤ 1)".into(),
        ));
    }
    if (v <= 0.0 && !has_neg) || (v >= 0.0 && !has_pos) {
        return Ok(0.0);
    }
    let gamma = profile.saddle(v).ok_or_else(|| Error::Quadrature("saddle point not found".into()))?;
    let i = Complex64::i();
    let base = profile.log_cf(Complex64::new(0.0, -gamma)).re - gamma * v;
    let width = 1.0 / profile.curvature(gamma).sqrt();
    // The integrand is divided by its saddle value so the quadrature works on O(1) numbers.
    let f = |x: f64| -> f64 {
        let k = Complex64::new(x, -gamma);
        (profile.log_cf(k) - i * k * v - base).exp().re
    };
    let scaled = half_line_integral(f, width, v, 1.0)?;
    Ok(scaled * base.exp())
}

/// How to compute `P(Q > u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    Inversion,
    ClosedForm,
    MonteCarlo { draws: u64, seed: u64 },
}

/// Default number of Monte Carlo draws.
pub const MC_DEFAULT_DRAWS: u64 = 1_000_000;

impl TailMethod {
    pub fn monte_carlo(seed: u64) -> Self {
        TailMethod::MonteCarlo { draws: MC_DEFAULT_DRAWS, seed }
    }
}

/// A tail probability with its one-standard-deviation error (zero for the
/// deterministic methods).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub probability: f64,
    pub std_error: f64,
}

pub fn tail_probability(profile: &EigenvalueProfile, u: f64, method: TailMethod) -> Result<TailEstimate> {
    let exact = |p: f64| TailEstimate { probability: p, std_error: 0.0 };
    match method {
        TailMethod::Inversion => tail_inversion(profile, u).map(exact),
        TailMethod::ClosedForm => tail_closed_form(profile, u).map(exact),
        TailMethod::MonteCarlo { draws, seed } => {
            let mut rng = RngStream::new(seed, 0);
            tail_monte_carlo(profile, u, draws, &mut rng)
        }
    }
}

/// `P(Q > u)` by integrating `φ(k) e^{-iku}/(ik)` along the shifted line.
///
/// For `γ > 0` the line passes below the pole at `k = 0` and yields the
/// tail directly; for `γ < 0` it passes above and yields `P(Q > u) − 1`.
pub fn tail_inversion(profile: &EigenvalueProfile, u: f64) -> Result<f64> {
    let (lo, hi) = profile.strip();
    if u <= 0.0 && !lo.is_finite() {
        return Ok(1.0);
    }
    if u >= 0.0 && !hi.is_finite() {
        return Ok(0.0);
    }
    let saddle = profile.saddle(u).ok_or_else(|| Error::Quadrature("saddle point not found".into()))?;
    // Keep the line away from the pole at the origin.
    let max_abs = profile.modes.iter().map(|m| m.value.abs()).fold(0.0, f64::max);
    let gap = 0.1 / (profile.constants().0 * max_abs);
    let gamma = if saddle > 0.0 || (saddle == 0.0 && hi.is_finite()) {
        saddle.max(gap.min(0.1 * hi))
    } else {
        saddle.min(-gap.min(0.1 * -lo))
    };
    let i = Complex64::i();
    let k0 = Complex64::new(0.0, -gamma);
    let base = (profile.log_cf(k0) - i * k0 * u).re - gamma.abs().ln();
    let width = 1.0 / (profile.curvature(gamma) + 1.0 / (gamma * gamma)).sqrt();
    let f = |x: f64| -> f64 {
        let k = Complex64::new(x, -gamma);
        ((profile.log_cf(k) - i * k * u - base).exp() / (i * k)).re
    };
    let scaled = half_line_integral(f, width, u, 1.0)?;
    let p = scaled * base.exp() + if gamma < 0.0 { 1.0 } else { 0.0 };
    Ok(p.clamp(0.0, 1.0))
}

/// Partial-fraction tail for complex profiles with distinct eigenvalues:
/// `P(Q > u) = Σ_{λ_n > 0} A_n e^{-u/λ_n}` for `u ≥ 0` and
/// `1 − Σ_{λ_n < 0} A_n e^{-u/λ_n}` for `u < 0`, with
/// `A_n = λ_n^{M−1} / Π_{m≠n} (λ_n − λ_m)`.
pub fn tail_closed_form(profile: &EigenvalueProfile, u: f64) -> Result<f64> {
    if profile.kind != FieldKind::Complex || profile.has_repeated() {
        return Err(Error::ClosedFormUnavailable);
    }
    let lam: Vec<f64> = profile.modes.iter().map(|m| m.value).collect();
    let big_m = lam.len() as i32;
    let coeff = |n: usize| -> f64 {
        let den: f64 = lam.iter().enumerate().filter(|&(j, _)| j != n).map(|(_, l)| lam[n] - l).product();
        lam[n].powi(big_m - 1) / den
    };
    let p = if u >= 0.0 {
        (0..lam.len()).filter(|&n| lam[n] > 0.0).map(|n| coeff(n) * (-u / lam[n]).exp()).sum()
    } else {
        1.0 - (0..lam.len()).filter(|&n| lam[n] < 0.0).map(|n| coeff(n) * (-u / lam[n]).exp()).sum::<f64>()
    };
    Ok(p)
}

/// Monte Carlo `P(Q > u)` with its binomial standard error.
pub fn tail_monte_carlo(profile: &EigenvalueProfile, u: f64, draws: u64, rng: &mut RngStream) -> Result<TailEstimate> {
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be positive".into()));
    }
    let mut hits: u64 = 0;
    for _ in 0..draws {
        let mut q = 0.0;
        for m in &profile.modes {
            for _ in 0..m.multiplicity {
                q += m.value * rng.standard(profile.kind).norm_sqr();
            }
        }
        if q > u {
            hits += 1;
        }
    }
    let n = draws as f64;
    let p = hits as f64 / n;
    Ok(TailEstimate { probability: p, std_error: (p * (1.0 - p) / n).sqrt() })
}

/// `Γ(n/2)` for a positive integer `n`, by exact recursion from `Γ(1) = 1`
/// and `Γ(1/2) = √π`.
pub fn gamma_half(n: usize) -> f64 {
    assert!(n > 0, "Γ(0) is undefined");
    let (mut x, mut g) = if n % 2 == 0 { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    while x < n as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

fn leading(profile: &EigenvalueProfile) -> Result<(f64, usize)> {
    match profile.lambda_max() {
        Some(l) => Ok((l, profile.leading_multiplicity())),
        None => Err(Error::InvalidArgument("λ_1 must be positive".into())),
    }
}

/// Large-`v` form of the density, governed by the leading cluster.
///
/// Complex: `(v/λ_1)^{g−1} e^{−v/λ_1} / ((g−1)! λ_1) · Π (1 − λ_n/λ_1)^{−m_n}`;
/// real: `(v/2λ_1)^{g/2−1} e^{−v/2λ_1} / (Γ(g/2) 2λ_1) · Π (1 − λ_n/λ_1)^{−m_n/2}`.
/// The product runs over every mode outside the leading cluster.
pub fn pdf_asymptotic(profile: &EigenvalueProfile, v: f64) -> Result<f64> {
    let (l1, g) = leading(profile)?;
    if !(v > 0.0) {
        return Err(Error::InvalidArgument("asymptotic density needs v > 0".into()));
    }
    let (c, s) = profile.constants();
    let prod: f64 = profile.modes[1..]
        .iter()
        .map(|m| -(m.multiplicity as f64 / s) * (1.0 - m.value / l1).ln())
        .sum();
    let scale = c * l1;
    let half = g as f64 / s;
    let log_gamma = match profile.kind {
        FieldKind::Complex => gamma_half(2 * g).ln(),
        FieldKind::Real => gamma_half(g).ln(),
    };
    let x = v / scale;
    Ok((prod + (half - 1.0) * x.ln() - x - log_gamma).exp() / scale)
}

/// Lower bound `C_1(α) u^{g−1} e^{−u/λ_1}` (complex) or
/// `C_1(α) u^{g/2−1} e^{−u/2λ_1}` (real) on `P(Q > u)` for large `u`.
///
/// Returns `(bound, C_1(α))`. The product in `C_1` runs over the negative
/// modes only.
pub fn tail_lower_bound(profile: &EigenvalueProfile, u: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("α must lie in (0, 1), got {alpha}")));
    }
    let (l1, g) = leading(profile)?;
    let s = profile.constants().1;
    let neg: f64 = profile
        .negatives()
        .map(|m| -(m.multiplicity as f64 / s) * (1.0 - m.value / l1).ln())
        .sum::<f64>()
        .exp();
    let (c1, power, rate) = match profile.kind {
        FieldKind::Complex => {
            let gf = g as f64;
            ((1.0 - alpha) / (gamma_half(2 * g) * l1.powf(gf - 1.0)) * neg, gf - 1.0, 1.0 / l1)
        }
        FieldKind::Real => {
            let h = g as f64 / 2.0;
            ((1.0 - alpha).powi(2) / (gamma_half(g) * (2.0 * l1).powf(h - 1.0)) * neg, h - 1.0, 0.5 / l1)
        }
    };
    let bound = if u > 0.0 { c1 * u.powf(power) * (-u * rate).exp() } else { f64::NAN };
    Ok((bound, c1))
}

/// One point of an asymptotic-ratio scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioPoint {
    pub v: f64,
    pub rho: f64,
    pub rho_asym: f64,
    pub ratio: f64,
}

/// Scan of `ρ/ρ_asym` over a grid of `v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticScan {
    pub points: Vec<RatioPoint>,
    /// Smallest scanned `v` from which the ratio stays in the band at every
    /// later scan point.
    pub v_star: Option<f64>,
}

/// Band the ratio must stay in beyond `v*`.
pub const RATIO_BAND: (f64, f64) = (0.95, 1.05);

/// Default scan window `[max(E[Q], λ_1), λ_1 (40 g + 60)]`.
pub fn default_scan_range(profile: &EigenvalueProfile) -> Result<(f64, f64)> {
    let (l1, g) = leading(profile)?;
    let c = profile.constants().0;
    Ok((profile.mean().max(c * l1), c * l1 * (40.0 * g as f64 + 60.0)))
}

pub fn asymptotic_scan(profile: &EigenvalueProfile, v_start: f64, v_end: f64, steps: usize) -> Result<AsymptoticScan> {
    if !(v_start > 0.0 && v_end > v_start && steps >= 2) {
        return Err(Error::InvalidArgument("scan needs 0 < v_start < v_end and ≥ 2 steps".into()));
    }
    let mut points = Vec::with_capacity(steps);
    for j in 0..steps {
        let v = v_start + (v_end - v_start) * j as f64 / (steps - 1) as f64;
        let rho = pdf_inversion(profile, v)?;
        let rho_asym = pdf_asymptotic(profile, v)?;
        points.push(RatioPoint { v, rho, rho_asym, ratio: rho / rho_asym });
    }
    let inside = |r: f64| r >= RATIO_BAND.0 && r <= RATIO_BAND.1;
    let mut v_star = None;
    for p in points.iter().rev() {
        if inside(p.ratio) {
            v_star = Some(p.v);
        } else {
            break;
        }
    }
    Ok(AsymptoticScan { points, v_star })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

    fn complex(v: &[f64]) -> EigenvalueProfile {
        EigenvalueProfile::from_values(FieldKind::Complex, v).unwrap()
    }
    fn real(v: &[f64]) -> EigenvalueProfile {
        EigenvalueProfile::from_values(FieldKind::Real, v).unwrap()
    }

    #[test]
    fn pdf_examples() {
        assert_relative_eq!(pdf_inversion(&complex(&[1.0]), 1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-9);
        let chi1 = ChiSquared::new(1.0).unwrap().pdf(1.0);
        assert_relative_eq!(pdf_inversion(&real(&[1.0]), 1.0).unwrap(), chi1, max_relative = 1e-9);
        let oracle = (-0.5f64).exp() - (-1.0f64).exp();
        assert_relative_eq!(pdf_inversion(&complex(&[2.0, 1.0]), 1.0).unwrap(), oracle, max_relative = 1e-9);
    }

    #[test]
    fn pdf_support_and_singularity() {
        assert_eq!(pdf_inversion(&complex(&[2.0, 1.0]), -1.0).unwrap(), 0.0);
        assert_eq!(pdf_inversion(&complex(&[-2.0]), 0.5).unwrap(), 0.0);
        assert!(pdf_inversion(&real(&[1.0]), 0.0).is_err());
        assert!(pdf_inversion(&complex(&[1.0]), 0.0).is_err());
        assert_eq!(pdf_inversion(&complex(&[2.0, 1.0]), 0.0).unwrap(), 0.0);
        // Mixed signs: two-sided exponential, ρ(v) = e^{-|v|}/2 for λ = ±1.
        let p = complex(&[1.0, -1.0]);
        assert_relative_eq!(pdf_inversion(&p, -0.7).unwrap(), 0.5 * (-0.7f64).exp(), max_relative = 1e-9);
        assert_relative_eq!(pdf_inversion(&p, 0.0).unwrap(), 0.5, max_relative = 1e-9);
    }

    #[test]
    fn tail_examples() {
        let p = complex(&[2.0, 1.0]);
        let oracle = 2.0 * (-0.5f64).exp() - (-1.0f64).exp();
        assert_relative_eq!(tail_closed_form(&p, 1.0).unwrap(), oracle, max_relative = 1e-14);
        assert_relative_eq!(tail_inversion(&p, 1.0).unwrap(), oracle, max_relative = 1e-9);
        let normal = 2.0 * Normal::new(0.0, 1.0).unwrap().sf(2.0);
        assert!((tail_inversion(&real(&[1.0]), 4.0).unwrap() - normal).abs() < 1e-10);
        assert_eq!(tail_inversion(&p, -1e9).unwrap(), 1.0);
        assert_eq!(tail_inversion(&p, 0.0).unwrap(), 1.0);
        assert_eq!(tail_inversion(&p.negated(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn tail_far_and_near_mean() {
        let p = complex(&[2.0, 1.0, -0.5]);
        for u in [-3.0, -0.2, 0.0, 0.3, 2.5, 10.0, 80.0] {
            let a = tail_inversion(&p, u).unwrap();
            let b = tail_closed_form(&p, u).unwrap();
            assert!((a - b).abs() <= 1e-9 * b.max(1e-300) + 1e-13, "u={u}: {a} vs {b}");
        }
    }

    #[test]
    fn real_tails_against_chi_square() {
        for (g, u) in [(1, 0.3), (1, 25.0), (2, 7.0), (3, 20.0), (5, 1.0)] {
            let p = real(&vec![1.0; g]);
            let chi = ChiSquared::new(g as f64).unwrap().sf(u);
            let inv = tail_inversion(&p, u).unwrap();
            assert!((inv - chi).abs() < 1e-9 * chi.max(1e-6), "g={g} u={u}: {inv} vs {chi}");
        }
    }

    #[test]
    fn closed_form_rejects_repeats_and_real() {
        assert!(matches!(tail_closed_form(&complex(&[1.0, 1.0]), 1.0), Err(Error::ClosedFormUnavailable)));
        assert!(matches!(tail_closed_form(&real(&[1.0]), 1.0), Err(Error::ClosedFormUnavailable)));
    }

    #[test]
    fn monte_carlo_agrees() {
        let p = complex(&[2.0, 1.0]);
        let est = tail_probability(&p, 3.0, TailMethod::MonteCarlo { draws: 200_000, seed: 5 }).unwrap();
        let exact = tail_closed_form(&p, 3.0).unwrap();
        assert!((est.probability - exact).abs() < 4.0 * est.std_error);
    }

    #[test]
    fn asymptotic_examples() {
        let p = complex(&[1.0]);
        assert_relative_eq!(pdf_asymptotic(&p, 3.0).unwrap(), (-3.0f64).exp(), max_relative = 1e-14);
        let p = complex(&[1.0, 1.0]);
        assert_relative_eq!(pdf_asymptotic(&p, 10.0).unwrap(), 10.0 * (-10.0f64).exp(), max_relative = 1e-14);
        let p = real(&[1.0, 1.0, 1.0]);
        let chi3 = ChiSquared::new(3.0).unwrap();
        let formula = (10.0f64).sqrt() * (-10.0f64).exp() / (2.0 * gamma_half(3));
        assert_relative_eq!(pdf_asymptotic(&p, 20.0).unwrap(), formula, max_relative = 1e-14);
        // χ²_3 is exactly of this form.
        assert_relative_eq!(pdf_asymptotic(&p, 20.0).unwrap(), chi3.pdf(20.0), max_relative = 1e-12);
        assert!(pdf_asymptotic(&complex(&[-1.0]), 1.0).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        let (b, c1) = tail_lower_bound(&complex(&[1.0]), 5.0, 0.5).unwrap();
        assert_eq!(c1, 0.5);
        assert_relative_eq!(b, 0.5 * (-5.0f64).exp(), max_relative = 1e-15);
        let (_, c1) = tail_lower_bound(&complex(&[1.0, -1.0]), 5.0, 0.5).unwrap();
        assert_relative_eq!(c1, 0.25, max_relative = 1e-15);
        let (_, c1) = tail_lower_bound(&real(&[1.0]), 5.0, 0.5).unwrap();
        assert_relative_eq!(c1, 0.25 * 2.0f64.sqrt() / PI.sqrt(), max_relative = 1e-14);
        assert!(tail_lower_bound(&complex(&[1.0]), 5.0, 1.0).is_err());
        assert!(tail_lower_bound(&complex(&[1.0]), 5.0, 0.0).is_err());
    }

    #[test]
    fn gamma_at_half_integers() {
        assert_eq!(gamma_half(2), 1.0);
        assert_eq!(gamma_half(8), 6.0);
        assert_relative_eq!(gamma_half(1), PI.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(gamma_half(5), 0.75 * PI.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn normalisation() {
        let p = complex(&[1.5, 0.7, -0.4]);
        let (mean, sd) = (p.mean(), p.variance().sqrt());
        let (a, b) = (mean - 12.0 * sd, mean + 12.0 * sd);
        let (mass, _) = integrate(|v| pdf_inversion(&p, v).unwrap(), a, b, 1e-12, 1e-10).unwrap();
        // Analytic remainders beyond the window from the closed form.
        let outside = tail_closed_form(&p, b).unwrap() + (1.0 - tail_closed_form(&p, a).unwrap());
        assert!((mass + outside - 1.0).abs() < 1e-6, "{mass} {outside}");
    }

    #[test]
    fn scan_finds_onset() {
        let p = complex(&[1.0, 1.0, -0.5, -0.2]);
        let (a, b) = default_scan_range(&p).unwrap();
        let scan = asymptotic_scan(&p, a, b, 60).unwrap();
        let vs = scan.v_star.expect("ratio enters the band");
        for q in scan.points.iter().filter(|q| q.v >= vs) {
            assert!(q.ratio >= 0.95 && q.ratio <= 1.05);
            let tail = tail_inversion(&p, q.v).unwrap();
            assert!(tail >= tail_lower_bound(&p, q.v, 0.5).unwrap().0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mirror_symmetry(
            vals in proptest::collection::vec(0.2f64..3.0, 1..4),
            negs in proptest::collection::vec(0.2f64..3.0, 0..3),
            u in -4.0f64..6.0,
            real_kind in any::<bool>(),
        ) {
            let kind = if real_kind { FieldKind::Real } else { FieldKind::Complex };
            let all: Vec<f64> = vals.iter().copied().chain(negs.iter().map(|x| -x)).collect();
            let p = EigenvalueProfile::from_values(kind, &all).unwrap();
            let a = tail_inversion(&p, u).unwrap();
            let b = 1.0 - tail_inversion(&p.negated(), -u).unwrap();
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }

        #[test]
        fn tail_is_monotone(vals in proptest::collection::vec(-2.0f64..3.0, 1..5), u in -5.0f64..8.0) {
            prop_assume!(vals.iter().all(|v| v.abs() > 0.05));
            let p = EigenvalueProfile::from_values(FieldKind::Complex, &vals).unwrap();
            let a = tail_inversion(&p, u).unwrap();
            let b = tail_inversion(&p, u + 0.5).unwrap();
            prop_assert!(b <= a + 1e-10);
        }
    }
}
