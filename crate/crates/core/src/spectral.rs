//! Signed spectrum of `M = C^{1/2} O C^{1/2}` and the fundamental basis.
//!
//! Two routes are provided. The dense route forms `M` in the basis of kept
//! covariance modes, `M_μ = diag(√μ) Uᵀ Õ U diag(√μ)`, and diagonalises it.
//! The low-rank route applies when `Õ = F̃ S F̃†` has rank `r`: the nonzero
//! spectrum of `C O` equals that of the `r x r` matrix
//! `H = diag(√g) Vᵀ S V diag(√g)`, where `G = F̃ᵀ C̃ F̃ = V diag(g) Vᵀ` is the
//! covariance Gram of the functionals. With `H w = λ w` and
//! `c = V diag(1/√g) w`, the eigenvector is `|λ⟩ = C̃^{1/2} F̃ c` and
//! `β = C̃^{1/2}|λ⟩ = C̃ F̃ c`, which only needs kernel sums.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::grid::{Field, Grid};
use crate::linalg::{eigh, eigh_complex, fix_phase};
use crate::operators::{Covariance, CovarianceOperator, FormRepr, QuadraticForm};
use crate::{Error, FieldKind, Result, Sign};

/// Default relative tolerance for grouping near-degenerate eigenvalues.
pub const TOL_DEG: f64 = 1e-6;
/// Eigenvalues with `|λ| <= ZERO_TOL · max|λ|` count as zero modes.
pub const ZERO_TOL: f64 = 1e-12;

/// Which route produced a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumPath {
    Dense,
    LowRank,
}

/// Nonzero eigenpairs of `M`, positive branch first.
///
/// Modes are ordered `λ_1 ≥ λ_2 ≥ … > 0` followed by `λ_{-1} ≤ λ_{-2} ≤ … < 0`.
#[derive(Debug, Clone)]
pub struct SignedSpectrum {
    grid: Arc<Grid>,
    path: SpectrumPath,
    eigenvalues: Vec<f64>,
    n_plus: usize,
    cluster_ids: Vec<usize>,
    g_plus: usize,
    g_minus: usize,
    zero_dim: usize,
    mu_coords: Option<DMatrix<Complex64>>,
    beta: DMatrix<Complex64>,
    functional_coeffs: Option<DMatrix<Complex64>>,
    trace_co: f64,
}

impl SignedSpectrum {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kind(&self) -> FieldKind {
        self.grid.kind()
    }

    pub fn path(&self) -> SpectrumPath {
        self.path
    }

    /// All nonzero eigenvalues in branch order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn positive(&self) -> &[f64] {
        &self.eigenvalues[..self.n_plus]
    }

    pub fn negative(&self) -> &[f64] {
        &self.eigenvalues[self.n_plus..]
    }

    /// Mode indices of the requested branch.
    pub fn branch_range(&self, sign: Sign) -> std::ops::Range<usize> {
        match sign {
            Sign::Plus => 0..self.n_plus,
            Sign::Minus => self.n_plus..self.eigenvalues.len(),
        }
    }

    pub fn cluster_ids(&self) -> &[usize] {
        &self.cluster_ids
    }

    /// Multiplicity of the leading eigenvalue of a branch (0 when empty).
    pub fn degeneracy(&self, sign: Sign) -> usize {
        match sign {
            Sign::Plus => self.g_plus,
            Sign::Minus => self.g_minus,
        }
    }

    /// Leading eigenvalue `λ_{±1}` of a branch.
    pub fn leading(&self, sign: Sign) -> Option<f64> {
        let r = self.branch_range(sign);
        (!r.is_empty()).then(|| self.eigenvalues[r.start])
    }

    /// Dimension of the zero eigenspace within the sampled space.
    pub fn zero_dim(&self) -> usize {
        self.zero_dim
    }

    pub fn trace_abs(&self) -> f64 {
        self.eigenvalues.iter().map(|x| x.abs()).sum()
    }

    /// `Tr(C̃ Õ)` computed independently of the eigensolver.
    pub fn trace_co(&self) -> f64 {
        self.trace_co
    }

    /// Eigenvectors `|λ_n⟩` in the basis of kept covariance modes, when the
    /// covariance was eigendecomposed.
    pub fn mu_coords(&self) -> Option<&DMatrix<Complex64>> {
        self.mu_coords.as_ref()
    }

    /// `β̃_n = C̃^{1/2}|λ_n⟩` in weighted coordinates, one column per mode.
    pub fn beta(&self) -> &DMatrix<Complex64> {
        &self.beta
    }

    pub fn beta_field(&self, n: usize) -> Result<Field> {
        let col: Vec<Complex64> = self.beta.column(n).iter().cloned().collect();
        Field::from_weighted(self.grid.clone(), &col)
    }

    /// Coefficients `c_n` with `β̃_n = C̃ F̃ c_n` (low-rank route only).
    pub fn functional_coeffs(&self) -> Option<&DMatrix<Complex64>> {
        self.functional_coeffs.as_ref()
    }

    /// Deviation of `⟨λ_i|λ_j⟩` from the identity, when the eigenvectors are
    /// available in the `μ` basis.
    pub fn orthonormality_error(&self) -> Option<f64> {
        self.mu_coords.as_ref().map(|a| {
            let g = a.adjoint() * a;
            let n = g.nrows();
            (g - DMatrix::<Complex64>::identity(n, n)).iter().fold(0.0f64, |m, z| m.max(z.norm()))
        })
    }
}

fn cluster(values: &[f64], tol: f64, first_id: usize) -> (Vec<usize>, usize) {
    let mut ids = Vec::with_capacity(values.len());
    let mut id = first_id;
    let mut lead = f64::NAN;
    for &v in values {
        if lead.is_nan() || (v - lead).abs() > tol * lead.abs() {
            if !lead.is_nan() {
                id += 1;
            }
            lead = v;
        }
        ids.push(id);
    }
    let leading = ids.iter().take_while(|&&i| i == first_id).count();
    (ids, leading)
}

struct RawModes {
    values: Vec<f64>,
    /// Per mode: (μ-basis vector, β̃, functional coefficients).
    mu: Option<Vec<DVector<Complex64>>>,
    beta: Vec<DVector<Complex64>>,
    coeffs: Option<Vec<DVector<Complex64>>>,
    total_dim: usize,
}

fn assemble(grid: Arc<Grid>, path: SpectrumPath, raw: RawModes, trace_co: f64, tol_deg: f64) -> Result<SignedSpectrum> {
    let scale = raw.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::DegenerateObservable);
    }
    let mut pos: Vec<usize> = (0..raw.values.len()).filter(|&i| raw.values[i] > ZERO_TOL * scale).collect();
    let mut neg: Vec<usize> = (0..raw.values.len()).filter(|&i| raw.values[i] < -ZERO_TOL * scale).collect();
    pos.sort_by(|&i, &j| raw.values[j].total_cmp(&raw.values[i]));
    neg.sort_by(|&i, &j| raw.values[i].total_cmp(&raw.values[j]));
    if pos.is_empty() && neg.is_empty() {
        return Err(Error::DegenerateObservable);
    }
    let order: Vec<usize> = pos.iter().chain(&neg).cloned().collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&i| raw.values[i]).collect();
    let n_plus = pos.len();
    let (mut ids, g_plus) = cluster(&eigenvalues[..n_plus], tol_deg, 0);
    let next = ids.last().map_or(0, |i| i + 1);
    let (ids_neg, g_minus) = cluster(&eigenvalues[n_plus..], tol_deg, next);
    ids.extend(ids_neg);

    let dim = grid.len();
    let mut beta = DMatrix::zeros(dim, order.len());
    let mut mu = raw.mu.as_ref().map(|m| DMatrix::zeros(m[0].len(), order.len()));
    let mut coeffs = raw.coeffs.as_ref().map(|c| DMatrix::zeros(c[0].len(), order.len()));
    for (k, &i) in order.iter().enumerate() {
        // Phase convention on β̃, carried over to the other representations.
        let mut b = raw.beta[i].clone();
        let before = b.iter().cloned().fold(Complex64::new(0.0, 0.0), |acc, z| if z.norm() > acc.norm() { z } else { acc });
        fix_phase(&mut b);
        let after = b.iter().cloned().fold(Complex64::new(0.0, 0.0), |acc, z| if z.norm() > acc.norm() { z } else { acc });
        let rot = if before.norm() > 0.0 { after / before } else { Complex64::new(1.0, 0.0) };
        beta.set_column(k, &b);
        if let (Some(m), Some(src)) = (mu.as_mut(), raw.mu.as_ref()) {
            m.set_column(k, &(&src[i] * rot));
        }
        if let (Some(c), Some(src)) = (coeffs.as_mut(), raw.coeffs.as_ref()) {
            c.set_column(k, &(&src[i] * rot));
        }
    }
    Ok(SignedSpectrum {
        grid,
        path,
        n_plus,
        cluster_ids: ids,
        g_plus,
        g_minus,
        zero_dim: raw.total_dim - eigenvalues.len(),
        eigenvalues,
        mu_coords: mu,
        beta,
        functional_coeffs: coeffs,
        trace_co,
    })
}

fn check_grids(cov: &dyn Covariance, form: &QuadraticForm) -> Result<()> {
    if **cov.grid() != **form.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Spectrum of `M`, taking the low-rank route whenever the form is factored.
pub fn build_m_spectrum(cov: &dyn Covariance, form: &QuadraticForm, tol_deg: f64) -> Result<SignedSpectrum> {
    if form.is_factored() {
        return low_rank_spectrum(cov, form, tol_deg);
    }
    let dense = cov
        .decomposed()
        .ok_or_else(|| Error::InvalidArgument("a dense observable needs an eigendecomposed covariance".into()))?;
    dense_spectrum(dense, form, tol_deg)
}

/// Dense route: diagonalise `M_μ` explicitly.
pub fn dense_spectrum(cov: &CovarianceOperator, form: &QuadraticForm, tol_deg: f64) -> Result<SignedSpectrum> {
    check_grids(cov, form)?;
    let (re, im) = form.to_dense();
    let mu = cov.eigenvalues();
    let k = cov.kept_rank();
    let y = cov.eigenvectors() * DMatrix::from_diagonal(&mu.map(f64::sqrt));
    let m_re = y.transpose() * &re * &y;
    let m_im = im.as_ref().map(|b| y.transpose() * b * &y);
    let m_re = (&m_re + m_re.transpose()) * 0.5;
    let m_im = m_im.map(|b| (&b - b.transpose()) * 0.5);
    let trace_co = m_re.trace();
    let e = eigh_complex(&m_re, m_im.as_ref())?;
    let yc = y.map(|x| Complex64::new(x, 0.0));
    let mut mu_vecs = Vec::with_capacity(k);
    let mut betas = Vec::with_capacity(k);
    for n in 0..k {
        let a = e.vectors.column(n).into_owned();
        betas.push(&yc * &a);
        mu_vecs.push(a);
    }
    let raw = RawModes { values: e.values.iter().cloned().collect(), mu: Some(mu_vecs), beta: betas, coeffs: None, total_dim: k };
    assemble(cov.grid().clone(), SpectrumPath::Dense, raw, trace_co, tol_deg)
}

/// Low-rank route through the `r x r` functional Gram.
pub fn low_rank_spectrum(cov: &dyn Covariance, form: &QuadraticForm, tol_deg: f64) -> Result<SignedSpectrum> {
    check_grids(cov, form)?;
    let FormRepr::Factored { functionals, s_re, s_im } = form.repr() else {
        return Err(Error::InvalidArgument("low-rank spectrum needs a factored observable".into()));
    };
    let grid = cov.grid().clone();
    let r = functionals.len();
    if r >= grid.len() {
        if let Some(dense) = cov.decomposed() {
            return dense_spectrum(dense, form, tol_deg);
        }
    }
    let s_im = form.effective_im(s_im.as_ref());

    let g = cov.functional_gram(functionals);
    let trace_co = (s_re * &g).trace();
    let ge = eigh(&g)?;
    let gmax = ge.values[0];
    if !(gmax > 0.0) {
        return Err(Error::DegenerateObservable);
    }
    let keep: Vec<usize> = (0..r).filter(|&i| ge.values[i] > ZERO_TOL * gmax).collect();
    let rr = keep.len();
    // V diag(√g) and V diag(1/√g) restricted to the kept directions.
    let vs = DMatrix::from_fn(r, rr, |i, j| ge.vectors[(i, keep[j])] * ge.values[keep[j]].sqrt());
    let vinv = DMatrix::from_fn(r, rr, |i, j| ge.vectors[(i, keep[j])] / ge.values[keep[j]].sqrt());
    let h_re = vs.transpose() * s_re * &vs;
    let h_im = s_im.map(|b| vs.transpose() * b * &vs);
    let h_re = (&h_re + h_re.transpose()) * 0.5;
    let h_im = h_im.map(|b| (&b - b.transpose()) * 0.5);
    let he = eigh_complex(&h_re, h_im.as_ref())?;

    let vinv_c = vinv.map(|x| Complex64::new(x, 0.0));
    let b_mu = cov.decomposed().map(|d| d.functionals_in_mu_basis(functionals).map(|x| Complex64::new(x, 0.0)));
    let total_dim = cov.decomposed().map_or(grid.len(), |d| d.kept_rank());
    let mut coeffs = Vec::with_capacity(rr);
    let mut betas = Vec::with_capacity(rr);
    let mut mus = b_mu.as_ref().map(|_| Vec::with_capacity(rr));
    for n in 0..rr {
        let c = &vinv_c * he.vectors.column(n);
        let beta = cov.apply_functionals(functionals, c.as_slice());
        betas.push(DVector::from_vec(beta));
        if let (Some(b), Some(m)) = (b_mu.as_ref(), mus.as_mut()) {
            m.push(b * &c);
        }
        coeffs.push(c);
    }
    let raw = RawModes { values: he.values.iter().cloned().collect(), mu: mus, beta: betas, coeffs: Some(coeffs), total_dim };
    assemble(grid, SpectrumPath::LowRank, raw, trace_co, tol_deg)
}

/// An eigenpair of the restricted product `C O`.
#[derive(Debug, Clone)]
pub struct RestrictedPair {
    pub eigenvalue: f64,
    /// `β` as a field in function coordinates.
    pub vector: Field,
    /// `‖C̃Õβ̃ − λβ̃‖ / (|λ_1| ‖β̃‖)`.
    pub relative_residual: f64,
}

/// Largest relative residual `‖C̃Õβ̃ − λβ̃‖ / (|λ_1| ‖β̃‖)` over all modes.
pub fn equivalence_residuals(cov: &dyn Covariance, form: &QuadraticForm, spectrum: &SignedSpectrum) -> Result<Vec<f64>> {
    check_grids(cov, form)?;
    let lam1 = spectrum.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut out = Vec::with_capacity(spectrum.len());
    for n in 0..spectrum.len() {
        let b: Vec<Complex64> = spectrum.beta.column(n).iter().cloned().collect();
        let ob = form.apply_weighted(&b);
        let cob = match (cov.decomposed(), form.repr()) {
            (Some(d), _) => d.apply(&ob),
            (None, FormRepr::Factored { functionals, s_re, s_im }) => {
                let l: Vec<Complex64> = functionals.iter().map(|f| f.eval_weighted(cov.grid(), &b)).collect();
                let s_im = form.effective_im(s_im.as_ref());
                let r = functionals.len();
                let c: Vec<Complex64> = (0..r)
                    .map(|a| (0..r).map(|k| Complex64::new(s_re[(a, k)], s_im.map_or(0.0, |m| m[(a, k)])) * l[k]).sum())
                    .collect();
                cov.apply_functionals(functionals, &c)
            }
            (None, FormRepr::Dense { .. }) => {
                return Err(Error::InvalidArgument("a dense observable needs an eigendecomposed covariance".into()))
            }
        };
        let lam = spectrum.eigenvalues[n];
        let res: f64 = cob.iter().zip(&b).map(|(x, y)| (x - y * lam).norm_sqr()).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        out.push(res / (lam1 * nb));
    }
    Ok(out)
}

/// Nonzero eigenpairs of `C O` on the range of `C^{1/2}`, obtained from the
/// spectrum of `M` by `β = C^{1/2}|λ⟩` and verified against the product.
pub fn restricted_co_spectrum(cov: &dyn Covariance, form: &QuadraticForm) -> Result<Vec<RestrictedPair>> {
    let spectrum = build_m_spectrum(cov, form, TOL_DEG)?;
    let residuals = equivalence_residuals(cov, form, &spectrum)?;
    let mut out = Vec::with_capacity(spectrum.len());
    for (n, &res) in residuals.iter().enumerate() {
        if !(res <= 1e-8) {
            return Err(Error::EquivalenceResidual { residual: res, allowed: 1e-8 });
        }
        out.push(RestrictedPair { eigenvalue: spectrum.eigenvalues[n], vector: spectrum.beta_field(n)?, relative_residual: res });
    }
    Ok(out)
}

/// Images `β_n = C^{1/2}|λ_{±n}⟩` of the leading eigenspace of one branch.
#[derive(Debug, Clone)]
pub struct FundamentalBasis {
    sign: Sign,
    eigenvalue: f64,
    modes: Vec<usize>,
    vectors: Vec<Field>,
    gram: DMatrix<Complex64>,
}

impl FundamentalBasis {
    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn eigenvalue(&self) -> f64 {
        self.eigenvalue
    }

    pub fn degeneracy(&self) -> usize {
        self.modes.len()
    }

    /// Indices of the fundamental modes within the spectrum.
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn vectors(&self) -> &[Field] {
        &self.vectors
    }

    /// `⟨λ_i|C|λ_j⟩ = ⟨β_i|β_j⟩`.
    pub fn gram(&self) -> &DMatrix<Complex64> {
        &self.gram
    }
}

pub fn fundamental_basis(spectrum: &SignedSpectrum, sign: Sign) -> Result<FundamentalBasis> {
    let g = spectrum.degeneracy(sign);
    if g == 0 {
        return Err(Error::EmptyBranch(sign));
    }
    let start = spectrum.branch_range(sign).start;
    let modes: Vec<usize> = (start..start + g).collect();
    let vectors = modes.iter().map(|&n| spectrum.beta_field(n)).collect::<Result<Vec<_>>>()?;
    let cols = spectrum.beta.columns(start, g);
    let gram = cols.adjoint() * cols;
    Ok(FundamentalBasis { sign, eigenvalue: spectrum.eigenvalues[start], modes, vectors, gram })
}
