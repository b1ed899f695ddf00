//! Discretised covariance operators in weighted coordinates
//! `C̃ = W^{1/2} K W^{1/2}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::form::Functional;
use super::kernel::{IsotropicFlowKernel, Kernel, ScalarKernel};
use crate::grid::Grid;
use crate::linalg::{eigh, max_abs};
use crate::{Error, Result};

/// Relative eigenvalue cutoff below which covariance modes are dropped.
pub const MU_CUTOFF: f64 = 1e-12;
/// Relative size of negative eigenvalues tolerated as roundoff.
pub const NEGATIVE_TOLERANCE: f64 = 1e-8;

/// Operations the spectral code needs from a covariance.
pub trait Covariance: Send + Sync {
    fn grid(&self) -> &Arc<Grid>;

    /// Covariance Gram `G_ab = Cov(ℓ_a(φ), ℓ_b(φ))` of real linear functionals.
    fn functional_gram(&self, functionals: &[Functional]) -> DMatrix<f64>;

    /// Weighted-coordinate vector `C̃ Σ_a c_a f̃_a`.
    fn apply_functionals(&self, functionals: &[Functional], coeffs: &[Complex64]) -> Vec<Complex64>;

    /// The eigendecomposed form, when one is available.
    fn decomposed(&self) -> Option<&CovarianceOperator> {
        None
    }
}

/// Dense covariance with its eigendecomposition `C̃ = U diag(μ) Uᵀ`.
#[derive(Debug, Clone)]
pub struct CovarianceOperator {
    grid: Arc<Grid>,
    kernel: Option<Kernel>,
    matrix: DMatrix<f64>,
    all_eigenvalues: DVector<f64>,
    mu: DVector<f64>,
    modes: DMatrix<f64>,
}

fn kernel_matrix(grid: &Grid, kernel: &Kernel) -> DMatrix<f64> {
    let n = grid.components();
    let dim = grid.len();
    let coords = grid.all_coords();
    let d = grid.dim();
    let w = grid.weights();
    let mut m = DMatrix::zeros(dim, dim);
    let mut r = vec![0.0; d];
    for i in 0..grid.node_count() {
        for j in 0..=i {
            for k in 0..d {
                r[k] = coords[i * d + k] - coords[j * d + k];
            }
            let s = (w[i] * w[j]).sqrt();
            for a in 0..n {
                for b in 0..n {
                    let v = s * kernel.entry(&r, a, b);
                    m[(i * n + a, j * n + b)] = v;
                    m[(j * n + b, i * n + a)] = v;
                }
            }
        }
    }
    m
}

impl CovarianceOperator {
    /// Scalar kernel on a one-component grid.
    pub fn assemble_scalar(grid: Arc<Grid>, kernel: ScalarKernel) -> Result<Self> {
        kernel.validate()?;
        if grid.components() != 1 {
            return Err(Error::InvalidCovariance(format!(
                "scalar kernel needs a one-component grid, got {}",
                grid.components()
            )));
        }
        let m = kernel_matrix(&grid, &Kernel::Scalar(kernel));
        Self::build(grid, Some(Kernel::Scalar(kernel)), m)
    }

    /// Isotropic flow kernel on a real three-component grid in three dimensions.
    pub fn assemble_flow(grid: Arc<Grid>, kernel: IsotropicFlowKernel) -> Result<Self> {
        check_flow_grid(&grid)?;
        let m = kernel_matrix(&grid, &Kernel::Flow(kernel));
        Self::build(grid, Some(Kernel::Flow(kernel)), m)
    }

    pub fn assemble(grid: Arc<Grid>, kernel: Kernel) -> Result<Self> {
        match kernel {
            Kernel::Scalar(k) => Self::assemble_scalar(grid, k),
            Kernel::Flow(k) => Self::assemble_flow(grid, k),
        }
    }

    /// Wraps a user-supplied symmetric positive semidefinite matrix already in
    /// weighted coordinates.
    pub fn from_weighted_matrix(grid: Arc<Grid>, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != grid.len() || matrix.ncols() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), actual: matrix.nrows() });
        }
        Self::build(grid, None, matrix)
    }

    fn build(grid: Arc<Grid>, kernel: Option<Kernel>, matrix: DMatrix<f64>) -> Result<Self> {
        let eig = eigh(&matrix)?;
        let mu1 = eig.values[0];
        if !(mu1 > 0.0) {
            return Err(Error::InvalidCovariance("covariance has no positive eigenvalue".into()));
        }
        let lowest = eig.values[eig.values.len() - 1];
        if lowest < -NEGATIVE_TOLERANCE * mu1 {
            return Err(Error::InvalidCovariance(format!(
                "eigenvalue {lowest:e} is below -{NEGATIVE_TOLERANCE:e} * mu_1; kernel is not positive semidefinite"
            )));
        }
        let cutoff = MU_CUTOFF * mu1;
        let all = eig.values.map(|x| x.max(0.0));
        let k = eig.values.iter().take_while(|&&x| x > cutoff).count();
        let mu = eig.values.rows(0, k).into_owned();
        let modes = eig.vectors.columns(0, k).into_owned();
        Ok(CovarianceOperator { grid, kernel, matrix, all_eigenvalues: all, mu, modes })
    }

    pub fn kernel(&self) -> Option<&Kernel> {
        self.kernel.as_ref()
    }

    /// `C̃` in weighted coordinates.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Kept eigenvalues `μ_1 ≥ μ_2 ≥ … > 1e-12 μ_1`.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.mu
    }

    /// Every eigenvalue of `C̃` with roundoff negatives set to zero.
    pub fn all_eigenvalues(&self) -> &DVector<f64> {
        &self.all_eigenvalues
    }

    /// Kept eigenvectors as columns, orthonormal in weighted coordinates.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn kept_rank(&self) -> usize {
        self.mu.len()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// `max |C̃ - U diag(μ) Uᵀ|`.
    pub fn reconstruction_error(&self) -> f64 {
        let rec = &self.modes * DMatrix::from_diagonal(&self.mu) * self.modes.transpose();
        max_abs(&(rec - &self.matrix))
    }

    /// `C̃ v` with the full matrix.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let re = &self.matrix * DVector::from_iterator(v.len(), v.iter().map(|z| z.re));
        let im = &self.matrix * DVector::from_iterator(v.len(), v.iter().map(|z| z.im));
        re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }

    pub fn sqrt(&self) -> SqrtCovariance<'_> {
        SqrtCovariance { cov: self }
    }

    /// `B_μ = diag(√μ) Uᵀ F̃`, the functionals expressed in the `μ` basis.
    pub fn functionals_in_mu_basis(&self, functionals: &[Functional]) -> DMatrix<f64> {
        let k = self.kept_rank();
        let mut b = DMatrix::zeros(k, functionals.len());
        let n = self.grid.components();
        for (a, f) in functionals.iter().enumerate() {
            for &(node, comp, c) in f.terms() {
                let row = node * n + comp;
                let s = c / self.grid.weights()[node].sqrt();
                for m in 0..k {
                    b[(m, a)] += self.mu[m].sqrt() * self.modes[(row, m)] * s;
                }
            }
        }
        b
    }

    /// Weighted field `U diag(√μ) z` for a vector `z` of `μ`-basis coordinates.
    pub fn from_mu_coords(&self, z: &[Complex64]) -> Vec<Complex64> {
        let k = self.kept_rank();
        let re = DVector::from_iterator(k, z.iter().zip(self.mu.iter()).map(|(z, m)| z.re * m.sqrt()));
        let im = DVector::from_iterator(k, z.iter().zip(self.mu.iter()).map(|(z, m)| z.im * m.sqrt()));
        let re = &self.modes * re;
        let im = &self.modes * im;
        re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }
}

impl Covariance for CovarianceOperator {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn functional_gram(&self, functionals: &[Functional]) -> DMatrix<f64> {
        let b = self.functionals_in_mu_basis(functionals);
        b.transpose() * b
    }

    fn apply_functionals(&self, functionals: &[Functional], coeffs: &[Complex64]) -> Vec<Complex64> {
        let b = self.functionals_in_mu_basis(functionals);
        let z: Vec<Complex64> = (0..b.nrows())
            .map(|m| (0..b.ncols()).map(|a| coeffs[a] * b[(m, a)]).sum())
            .collect();
        // U diag(√μ) B_μ c = U diag(μ) Uᵀ F̃ c
        let z: Vec<Complex64> = z.iter().zip(self.mu.iter()).map(|(z, m)| z * m.sqrt()).collect();
        let k = self.kept_rank();
        let re = &self.modes * DVector::from_iterator(k, z.iter().map(|z| z.re));
        let im = &self.modes * DVector::from_iterator(k, z.iter().map(|z| z.im));
        re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }

    fn decomposed(&self) -> Option<&CovarianceOperator> {
        Some(self)
    }
}

/// Applier for `C̃^{1/2} = U diag(√μ) Uᵀ` over the kept modes.
#[derive(Debug, Clone, Copy)]
pub struct SqrtCovariance<'a> {
    cov: &'a CovarianceOperator,
}

impl SqrtCovariance<'_> {
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let u = &self.cov.modes;
        let k = self.cov.kept_rank();
        let vr = DVector::from_iterator(v.len(), v.iter().map(|z| z.re));
        let vi = DVector::from_iterator(v.len(), v.iter().map(|z| z.im));
        let mut pr = u.transpose() * vr;
        let mut pi = u.transpose() * vi;
        for m in 0..k {
            let s = self.cov.mu[m].sqrt();
            pr[m] *= s;
            pi[m] *= s;
        }
        let r = u * pr;
        let i = u * pi;
        r.iter().zip(i.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }
}

/// Matrix-free kernel covariance for grids too large to eigendecompose.
///
/// Only supports the functional operations used by the low-rank spectrum.
#[derive(Debug, Clone)]
pub struct KernelCovariance {
    grid: Arc<Grid>,
    kernel: Kernel,
}

impl KernelCovariance {
    pub fn new(grid: Arc<Grid>, kernel: Kernel) -> Result<Self> {
        match kernel {
            Kernel::Scalar(k) => {
                k.validate()?;
                if grid.components() != 1 {
                    return Err(Error::InvalidCovariance("scalar kernel needs a one-component grid".into()));
                }
            }
            Kernel::Flow(_) => check_flow_grid(&grid)?,
        }
        Ok(KernelCovariance { grid, kernel })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn trace(&self) -> f64 {
        self.kernel.trace_at_zero() * self.grid.weights().iter().sum::<f64>()
    }
}

impl Covariance for KernelCovariance {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn functional_gram(&self, functionals: &[Functional]) -> DMatrix<f64> {
        let r = functionals.len();
        let d = self.grid.dim();
        let mut g = DMatrix::zeros(r, r);
        let mut sep = vec![0.0; d];
        for a in 0..r {
            for b in a..r {
                let mut s = 0.0;
                for &(ni, ci, cv) in functionals[a].terms() {
                    let xi = self.grid.coords(ni);
                    for &(nj, cj, cw) in functionals[b].terms() {
                        let xj = self.grid.coords(nj);
                        for k in 0..d {
                            sep[k] = xi[k] - xj[k];
                        }
                        s += cv * cw * self.kernel.entry(&sep, ci, cj);
                    }
                }
                g[(a, b)] = s;
                g[(b, a)] = s;
            }
        }
        g
    }

    fn apply_functionals(&self, functionals: &[Functional], coeffs: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.components();
        let d = self.grid.dim();
        let mut terms: Vec<(Vec<f64>, usize, Complex64)> = Vec::new();
        for (f, &c) in functionals.iter().zip(coeffs) {
            for &(node, comp, v) in f.terms() {
                terms.push((self.grid.coords(node), comp, c * v));
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        let mut sep = vec![0.0; d];
        for node in 0..self.grid.node_count() {
            let x = self.grid.coords(node);
            let sw = self.grid.weights()[node].sqrt();
            for a in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for (y, comp, c) in &terms {
                    for k in 0..d {
                        sep[k] = x[k] - y[k];
                    }
                    s += c * self.kernel.entry(&sep, a, *comp);
                }
                out[node * n + a] = s * sw;
            }
        }
        out
    }
}

fn check_flow_grid(grid: &Grid) -> Result<()> {
    if grid.dim() != 3 || grid.components() != 3 || grid.kind() != crate::FieldKind::Real {
        return Err(Error::InvalidCovariance(format!(
            "flow kernel needs a real three-component grid in three dimensions, got d = {}, N = {}, {}",
            grid.dim(),
            grid.components(),
            grid.kind()
        )));
    }
    Ok(())
}
