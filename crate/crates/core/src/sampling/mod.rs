//! Karhunen–Loève sampling in the eigenbasis of `M`.
//!
//! A realisation is stored as [`SpectralCoefficients`]: one coefficient
//! `t_n` per nonzero mode of `M`, plus white noise `ξ` over the kept
//! covariance modes whose projection onto the zero space of `M` supplies
//! the rest of the field. In the `μ` basis the field has coordinates
//! `z = Σ t_n a_n + P⊥ ξ`, so `φ̃ = U diag(√μ) z` and `‖φ‖² = Σ μ_m |z_m|²`.

mod ensemble;
mod rng;

pub use ensemble::{conditional_ensemble, tilt_parameter, ConditionalEnsemble, EnsembleSample, Method, TILT_CAP};
pub use rng::RngStream;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::grid::Field;
use crate::operators::CovarianceOperator;
use crate::spectral::{FundamentalBasis, SignedSpectrum};
use crate::{Error, FieldKind, Result};

/// One realisation in spectral coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoefficients {
    pub kind: FieldKind,
    /// Coefficients of the nonzero modes, in spectrum order. Real kinds
    /// have zero imaginary parts.
    pub t: Vec<Complex64>,
    /// White noise over the kept covariance modes, projected onto the zero
    /// space of `M` on use. Empty when the covariance is matrix-free.
    pub xi: Vec<Complex64>,
}

impl SpectralCoefficients {
    pub fn unit(spectrum: &SignedSpectrum, mode: usize) -> Self {
        let mut t = vec![Complex64::new(0.0, 0.0); spectrum.len()];
        t[mode] = Complex64::new(1.0, 0.0);
        let k = spectrum.mu_coords().map_or(0, |a| a.nrows());
        SpectralCoefficients { kind: spectrum.kind(), t, xi: vec![Complex64::new(0.0, 0.0); k] }
    }
}

/// Draws white noise for the zero space.
pub(crate) fn draw_xi(rng: &mut RngStream, spectrum: &SignedSpectrum) -> Vec<Complex64> {
    let k = spectrum.mu_coords().map_or(0, |a| a.nrows());
    (0..k).map(|_| rng.standard(spectrum.kind())).collect()
}

/// `count` unconditional realisations: `t_n` then `ξ`, per sample.
pub fn sample_coefficients(rng: &mut RngStream, spectrum: &SignedSpectrum, count: usize) -> Vec<SpectralCoefficients> {
    (0..count)
        .map(|_| {
            let t = (0..spectrum.len()).map(|_| rng.standard(spectrum.kind())).collect();
            let xi = draw_xi(rng, spectrum);
            SpectralCoefficients { kind: spectrum.kind(), t, xi }
        })
        .collect()
}

/// `Q = Σ λ_n |t_n|²`.
pub fn quadratic_value(t: &SpectralCoefficients, spectrum: &SignedSpectrum) -> f64 {
    spectrum.eigenvalues().iter().zip(&t.t).map(|(l, z)| l * z.norm_sqr()).sum()
}

fn check_len(t: &SpectralCoefficients, spectrum: &SignedSpectrum) -> Result<()> {
    if t.t.len() != spectrum.len() {
        return Err(Error::DimensionMismatch { expected: spectrum.len(), actual: t.t.len() });
    }
    if t.kind != spectrum.kind() {
        return Err(Error::KindMismatch(format!("coefficients are {} but the grid is {}", t.kind, spectrum.kind())));
    }
    Ok(())
}

/// `μ`-basis coordinates `z = Σ t_n a_n + P⊥ ξ`.
pub fn mu_coordinates(t: &SpectralCoefficients, spectrum: &SignedSpectrum) -> Result<Vec<Complex64>> {
    check_len(t, spectrum)?;
    let a = spectrum
        .mu_coords()
        .ok_or_else(|| Error::InvalidArgument("sampling needs an eigendecomposed covariance".into()))?;
    if t.xi.len() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), actual: t.xi.len() });
    }
    Ok(combine(a, &t.t, &t.xi))
}

fn combine(a: &DMatrix<Complex64>, t: &[Complex64], xi: &[Complex64]) -> Vec<Complex64> {
    let mut z = xi.to_vec();
    for n in 0..a.ncols() {
        let col = a.column(n);
        let p: Complex64 = col.iter().zip(xi).map(|(x, y)| x.conj() * y).sum();
        let c = t[n] - p;
        for (zi, ai) in z.iter_mut().zip(col.iter()) {
            *zi += c * ai;
        }
    }
    z
}

/// `φ = Σ t_n C^{1/2}|λ_n⟩ + C^{1/2} P⊥ ξ` in function coordinates.
pub fn reconstruct_field(t: &SpectralCoefficients, spectrum: &SignedSpectrum, cov: &CovarianceOperator) -> Result<Field> {
    let z = mu_coordinates(t, spectrum)?;
    if z.len() != cov.kept_rank() {
        return Err(Error::DimensionMismatch { expected: cov.kept_rank(), actual: z.len() });
    }
    Field::from_weighted(spectrum.grid().clone(), &cov.from_mu_coords(&z))
}

/// `φ̄ = Σ_{n ≤ g} t_n β_n` over the fundamental modes of the basis.
pub fn fundamental_projection(t: &SpectralCoefficients, basis: &FundamentalBasis) -> Result<Field> {
    let mut acc = basis.vectors()[0].scale(Complex64::new(0.0, 0.0))?;
    for (j, &n) in basis.modes().iter().enumerate() {
        let c = *t.t.get(n).ok_or(Error::DimensionMismatch { expected: n + 1, actual: t.t.len() })?;
        acc = acc.add(&basis.vectors()[j].scale(c)?)?;
    }
    Ok(acc)
}

/// `δφ = φ − φ̄`.
pub fn residual(phi: &Field, phi_bar: &Field) -> Result<Field> {
    phi.sub(phi_bar)
}

/// `‖φ/‖φ‖ − φ̄/‖φ̄‖‖`, in `[0, 2]`.
pub fn distance_statistic(phi: &Field, phi_bar: &Field) -> Result<f64> {
    let (a, b) = (phi.l2_norm(), phi_bar.l2_norm());
    if a == 0.0 || b == 0.0 {
        return Err(Error::UndefinedDistance);
    }
    let d = phi.scale(Complex64::new(1.0 / a, 0.0))?.sub(&phi_bar.scale(Complex64::new(1.0 / b, 0.0))?)?;
    Ok(d.l2_norm())
}

/// Evaluates the distance statistic and its bound directly from spectral
/// coefficients, without reconstructing fields.
#[derive(Debug, Clone)]
pub struct DistanceEvaluator {
    mu: Vec<f64>,
    a: DMatrix<Complex64>,
    modes: Vec<usize>,
}

/// Distance and bound for one realisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub distance: f64,
    /// `2‖δφ‖/‖φ̄‖`
    pub bound: f64,
    pub norm: f64,
    pub fundamental_norm: f64,
}

impl DistanceEvaluator {
    pub fn new(spectrum: &SignedSpectrum, cov: &CovarianceOperator, basis: &FundamentalBasis) -> Result<Self> {
        let a = spectrum
            .mu_coords()
            .ok_or_else(|| Error::InvalidArgument("distance needs an eigendecomposed covariance".into()))?
            .clone();
        if a.nrows() != cov.kept_rank() {
            return Err(Error::DimensionMismatch { expected: cov.kept_rank(), actual: a.nrows() });
        }
        Ok(DistanceEvaluator { mu: cov.eigenvalues().iter().cloned().collect(), a, modes: basis.modes().to_vec() })
    }

    pub fn evaluate(&self, t: &SpectralCoefficients) -> Result<DistanceReport> {
        let z = combine(&self.a, &t.t, &t.xi);
        let mut zbar = vec![Complex64::new(0.0, 0.0); z.len()];
        for &n in &self.modes {
            for (b, a) in zbar.iter_mut().zip(self.a.column(n).iter()) {
                *b += t.t[n] * a;
            }
        }
        let norm = |v: &[Complex64]| v.iter().zip(&self.mu).map(|(z, m)| m * z.norm_sqr()).sum::<f64>().sqrt();
        let (n, nb) = (norm(&z), norm(&zbar));
        if n == 0.0 || nb == 0.0 {
            return Err(Error::UndefinedDistance);
        }
        let mut d2 = 0.0;
        let mut r2 = 0.0;
        for ((z, b), m) in z.iter().zip(&zbar).zip(&self.mu) {
            d2 += m * (z / n - b / nb).norm_sqr();
            r2 += m * (z - b).norm_sqr();
        }
        Ok(DistanceReport { distance: d2.sqrt(), bound: 2.0 * r2.sqrt() / nb, norm: n, fundamental_norm: nb })
    }
}
