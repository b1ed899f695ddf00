//! The two closed-form case studies: the point intensity `|φ(0)|²` of a
//! scalar complex field and the local helicity `v(0)·curl v(0)` of an
//! isotropic flow.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::grid::{Field, Grid};
use crate::linalg::{eigh, principal_angles};
use crate::operators::{
    curl_at_origin, curl_functionals, Covariance, CovarianceOperator, CurlStencil, Functional, IsotropicFlowKernel,
    KernelCovariance, QuadraticForm, ScalarKernel,
};
use crate::spectral::{build_m_spectrum, fundamental_basis, SignedSpectrum, TOL_DEG};
use crate::{Error, FieldKind, Result, Sign};

/// Default point-exemplar grid: `[−3σ, 3σ]` with 61 nodes.
pub fn default_point_grid(sigma: f64) -> Result<Grid> {
    Grid::cube(1, 3.0 * sigma, 61, 1, FieldKind::Complex)
}

/// Default helicity grid: `[−2ℓ, 2ℓ]³` with 13 nodes per axis.
pub fn default_helicity_grid(taylor_scale: f64) -> Result<Grid> {
    Grid::cube(3, 2.0 * taylor_scale, 13, 3, FieldKind::Real)
}

/// Coarser helicity grid used for conditional ensembles, where the
/// covariance must be eigendecomposed: `[−1.5ℓ, 1.5ℓ]³` with 7 nodes.
pub fn ensemble_helicity_grid(taylor_scale: f64) -> Result<Grid> {
    Grid::cube(3, 1.5 * taylor_scale, 7, 3, FieldKind::Real)
}

#[derive(Debug, Clone)]
pub struct PointPrediction {
    /// `λ_1 = C(0)`.
    pub lambda1: f64,
    /// `C(x)/‖C‖₂` on the grid.
    pub profile: Field,
    pub degeneracy: usize,
}

/// Prediction for the point intensity: one fundamental mode with
/// eigenvalue `C(0)` and profile `C(x)`, up to a random phase.
pub fn point_prediction(kernel: &ScalarKernel, grid: Arc<Grid>) -> Result<PointPrediction> {
    kernel.validate()?;
    if grid.components() != 1 || grid.kind() != FieldKind::Complex {
        return Err(Error::InvalidArgument("point exemplar needs a scalar complex grid".into()));
    }
    let raw = Field::from_fn(grid, |x| vec![Complex64::new(kernel.eval(x), 0.0)])?;
    let norm = raw.l2_norm();
    Ok(PointPrediction { lambda1: kernel.at_zero(), profile: raw.scale(Complex64::new(1.0 / norm, 0.0))?, degeneracy: 1 })
}

/// `(λ_{+1}, λ_{−1}, degeneracy) = (√5E/3ℓ, −√5E/3ℓ, 3)`.
pub fn helicity_eigenvalues(energy: f64, taylor_scale: f64) -> Result<(f64, f64, usize)> {
    if !(energy > 0.0 && taylor_scale > 0.0) {
        return Err(Error::InvalidArgument("E and ℓ must be positive".into()));
    }
    let l = 5f64.sqrt() * energy / (3.0 * taylor_scale);
    Ok((l, -l, 3))
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Predicted conditional profile
/// `u_±(x) = f e_t + (x/2) f′ [e_t − (e_x·e_t) e_x] ± (ℓ/√5) [2f′ + (x/2) f″] (e_x × e_t)`.
pub fn helicity_prediction(kernel: &IsotropicFlowKernel, grid: Arc<Grid>, sign: Sign, e_t: [f64; 3]) -> Result<Field> {
    let n2: f64 = e_t.iter().map(|x| x * x).sum();
    if (n2 - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("e_t must be a unit vector, |e_t|² = {n2}")));
    }
    if grid.dim() != 3 || grid.components() != 3 {
        return Err(Error::InvalidArgument("helicity prediction needs a 3D three-component grid".into()));
    }
    let l = kernel.taylor_scale;
    let s = sign.factor();
    Field::from_fn(grid, |x| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        if r == 0.0 {
            return e_t.iter().map(|&c| Complex64::new(c, 0.0)).collect();
        }
        let (f, fp, fpp) = kernel.profile(r);
        let ex = [x[0] / r, x[1] / r, x[2] / r];
        let along: f64 = (0..3).map(|i| ex[i] * e_t[i]).sum();
        let cr = cross(ex, e_t);
        let twist = s * l / 5f64.sqrt() * (2.0 * fp + 0.5 * r * fpp);
        (0..3)
            .map(|i| Complex64::new(f * e_t[i] + 0.5 * r * fp * (e_t[i] - along * ex[i]) + twist * cr[i], 0.0))
            .collect()
    })
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Covariance of `(v(0), curl v(0))` from the small-`x` form of the kernel.
///
/// Uses `⟨v_μ v_ν⟩ = (2E/3) δ_μν`, vanishing field–gradient covariance and
/// `⟨∂_a v_μ ∂_b v_ν⟩ = (4E/3ℓ²) δ_ab δ_μν − (E/3ℓ²)(δ_aμ δ_bν + δ_aν δ_bμ)`,
/// contracted with the Levi-Civita symbol for the curl block.
pub fn analytic_helicity_gram(kernel: &IsotropicFlowKernel) -> DMatrix<f64> {
    let (e, l) = (kernel.energy, kernel.taylor_scale);
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let grad = |a: usize, mu: usize, b: usize, nu: usize| {
        4.0 * e / (3.0 * l * l) * d(a, b) * d(mu, nu) - e / (3.0 * l * l) * (d(a, mu) * d(b, nu) + d(a, nu) * d(b, mu))
    };
    let mut g = DMatrix::zeros(6, 6);
    for mu in 0..3 {
        g[(mu, mu)] = 2.0 * e / 3.0;
    }
    for a in 0..3 {
        for b in 0..3 {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for m in 0..3 {
                            s += levi_civita(a, i, j) * levi_civita(b, k, m) * grad(i, j, k, m);
                        }
                    }
                }
            }
            g[(3 + a, 3 + b)] = s;
        }
    }
    g
}

/// Eigenvalues of `G^{1/2} S G^{1/2}` for the analytic `6×6` Gram, in
/// descending order.
pub fn analytic_helicity_spectrum(kernel: &IsotropicFlowKernel) -> Result<Vec<f64>> {
    let g = analytic_helicity_gram(kernel);
    let ge = eigh(&g)?;
    let sqrt_g = &ge.vectors * DMatrix::from_diagonal(&ge.values.map(|x| x.max(0.0).sqrt())) * ge.vectors.transpose();
    let mut s = DMatrix::zeros(6, 6);
    for mu in 0..3 {
        s[(mu, mu + 3)] = 0.5;
        s[(mu + 3, mu)] = 0.5;
    }
    let h = &sqrt_g * s * &sqrt_g;
    Ok(eigh(&(0.5 * (&h + h.transpose())))?.values.iter().copied().collect())
}

/// Signed spectrum of the helicity observable on a grid, through the
/// matrix-free low-rank route.
pub fn helicity_grid_spectrum(kernel: &IsotropicFlowKernel, grid: Arc<Grid>, stencil: CurlStencil) -> Result<SignedSpectrum> {
    let cov = KernelCovariance::new(grid.clone(), (*kernel).into())?;
    let form = QuadraticForm::helicity_with(grid, stencil)?;
    build_m_spectrum(&cov, &form, TOL_DEG)
}

/// One row of the curl–curl convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurlCurlRow {
    pub h: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurlCurlReport {
    pub axis: usize,
    /// `10E/3ℓ²`.
    pub limit: f64,
    pub rows: Vec<CurlCurlRow>,
    /// `log(e_i/e_{i+1}) / log(h_i/h_{i+1})` for consecutive rows.
    pub orders: Vec<f64>,
}

/// Finite-difference evaluation of `Σ_μ ∂²C_μμ(x−y)/∂x_ν∂y_ν` at `y = x`,
/// i.e. `−Σ_μ ∂_ν² C_μμ(0)`, with the central stencil of step `2h`.
pub fn curl_curl_identity_check(kernel: &IsotropicFlowKernel, axis: usize, h_list: &[f64]) -> Result<CurlCurlReport> {
    if axis > 2 {
        return Err(Error::InvalidArgument(format!("axis must be 0, 1 or 2, got {axis}")));
    }
    if h_list.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidArgument("step sizes must be positive".into()));
    }
    let trace = |t: f64| {
        let mut r = [0.0; 3];
        r[axis] = t;
        let b = kernel.block(&r);
        b[0][0] + b[1][1] + b[2][2]
    };
    let limit = 10.0 * kernel.energy / (3.0 * kernel.taylor_scale.powi(2));
    let rows: Vec<CurlCurlRow> = h_list
        .iter()
        .map(|&h| {
            let value = -(trace(2.0 * h) - 2.0 * trace(0.0) + trace(-2.0 * h)) / (4.0 * h * h);
            CurlCurlRow { h, value, error: (value - limit).abs() }
        })
        .collect();
    let orders = rows.windows(2).map(|w| (w[0].error / w[1].error).ln() / (w[0].h / w[1].h).ln()).collect();
    Ok(CurlCurlReport { axis, limit, rows, orders })
}

/// Functionals `a_λ ± (ℓ/√5) b_λ` with `a_λ = v_λ(0)` and `b_λ = (curl v)_λ(0)`.
fn candidate_functionals(grid: &Grid, kernel: &IsotropicFlowKernel, sign: Sign, stencil: CurlStencil) -> Result<Vec<Functional>> {
    let curls = curl_functionals(grid, stencil)?;
    let k = sign.factor() * kernel.taylor_scale / 5f64.sqrt();
    let o = grid.origin();
    Ok((0..3)
        .map(|lam| {
            let mut terms = vec![(o, lam, 1.0)];
            terms.extend(curls[lam].terms().iter().map(|&(n, c, v)| (n, c, k * v)));
            Functional::new(terms)
        })
        .collect())
}

/// The three candidate eigenfields `α C(1 ± (ℓ/√5) curl)|0⟩_λ` on the grid.
pub fn helicity_candidates(
    cov: &dyn Covariance,
    kernel: &IsotropicFlowKernel,
    sign: Sign,
    stencil: CurlStencil,
    alpha: f64,
) -> Result<Vec<Field>> {
    let grid = cov.grid().clone();
    let fs = candidate_functionals(&grid, kernel, sign, stencil)?;
    (0..3)
        .map(|lam| {
            let mut c = vec![Complex64::new(0.0, 0.0); 3];
            c[lam] = Complex64::new(alpha, 0.0);
            Field::from_weighted(grid.clone(), &cov.apply_functionals(&fs, &c))
        })
        .collect()
}

/// Normalisation `α = √3/(2√E)` of the candidate eigenfields.
pub fn helicity_alpha(kernel: &IsotropicFlowKernel) -> f64 {
    3f64.sqrt() / (2.0 * kernel.energy.sqrt())
}

/// Gram of the candidate eigenstates from field and curl values at the
/// origin: entry `(γ, λ)` is `α [e_γ·v^λ(0) ± (ℓ/√5) e_γ·curl v^λ(0)]`.
///
/// With `α = 1` the result is `(4E/3) I`; with [`helicity_alpha`] it is the
/// identity.
pub fn gram_identity_check(
    cov: &dyn Covariance,
    kernel: &IsotropicFlowKernel,
    sign: Sign,
    stencil: CurlStencil,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    let fields = helicity_candidates(cov, kernel, sign, stencil, alpha)?;
    let k = sign.factor() * kernel.taylor_scale / 5f64.sqrt();
    let o = cov.grid().origin();
    let mut g = DMatrix::zeros(3, 3);
    for (lam, v) in fields.iter().enumerate() {
        let curl = curl_at_origin(v, stencil)?;
        for gam in 0..3 {
            g[(gam, lam)] = alpha * (v.value(o, gam).re + k * curl[gam].re);
        }
    }
    Ok(g)
}

/// Principal angles in degrees between two sets of fields on the same grid.
pub fn field_principal_angles(a: &[Field], b: &[Field]) -> Result<Vec<f64>> {
    let to_matrix = |fs: &[Field]| -> Result<DMatrix<Complex64>> {
        let first = fs.first().ok_or_else(|| Error::InvalidArgument("empty field set".into()))?;
        let n = first.grid().len();
        let mut m = DMatrix::zeros(n, fs.len());
        for (j, f) in fs.iter().enumerate() {
            if f.grid() != first.grid() {
                return Err(Error::GridMismatch);
            }
            for (i, v) in f.to_weighted().into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    };
    Ok(principal_angles(&to_matrix(a)?, &to_matrix(b)?)?.into_iter().map(f64::to_degrees).collect())
}

/// Principal angles (degrees) between the computed fundamental eigenspace
/// of `sign` and the span of `u_±(e_1), u_±(e_2), u_±(e_3)`.
pub fn helicity_subspace_angles(spectrum: &SignedSpectrum, kernel: &IsotropicFlowKernel, sign: Sign) -> Result<Vec<f64>> {
    let basis = fundamental_basis(spectrum, sign)?;
    let grid = spectrum.grid().clone();
    let predicted = (0..3)
        .map(|i| {
            let mut e = [0.0; 3];
            e[i] = 1.0;
            helicity_prediction(kernel, grid.clone(), sign, e)
        })
        .collect::<Result<Vec<_>>>()?;
    field_principal_angles(basis.vectors(), &predicted)
}

/// Point-intensity setup on a scalar complex grid.
pub fn point_setup(kernel: ScalarKernel, grid: Arc<Grid>) -> Result<(CovarianceOperator, QuadraticForm)> {
    let cov = CovarianceOperator::assemble_scalar(grid.clone(), kernel)?;
    let form = QuadraticForm::point_intensity(grid)?;
    Ok((cov, form))
}

/// Helicity setup with an eigendecomposed covariance.
pub fn helicity_setup(
    kernel: IsotropicFlowKernel,
    grid: Arc<Grid>,
    stencil: CurlStencil,
) -> Result<(CovarianceOperator, QuadraticForm)> {
    let cov = CovarianceOperator::assemble_flow(grid.clone(), kernel)?;
    let form = QuadraticForm::helicity_with(grid, stencil)?;
    Ok((cov, form))
}
