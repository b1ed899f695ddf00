//! Quadratic-form observables `⟨φ|Ô|φ⟩`, stored dense or as a low-rank
//! combination of point functionals.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::{Field, Grid};
use crate::{Error, FieldKind, Result};

/// Real linear functional `ℓ(v) = Σ c · v[node, component]` with sparse support.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    terms: Vec<(usize, usize, f64)>,
}

impl Functional {
    pub fn new(terms: Vec<(usize, usize, f64)>) -> Self {
        Functional { terms }
    }

    /// Point evaluation of one component.
    pub fn point(node: usize, component: usize) -> Self {
        Functional { terms: vec![(node, component, 1.0)] }
    }

    pub fn terms(&self) -> &[(usize, usize, f64)] {
        &self.terms
    }

    pub fn eval(&self, field: &Field) -> Complex64 {
        self.terms.iter().map(|&(node, comp, c)| c * field.value(node, comp)).sum()
    }

    pub fn eval_weighted(&self, grid: &Grid, v: &[Complex64]) -> Complex64 {
        let n = grid.components();
        self.terms
            .iter()
            .map(|&(node, comp, c)| c / grid.weights()[node].sqrt() * v[node * n + comp])
            .sum()
    }

    /// Weighted-coordinate vector `f̃` with `f̃ᵀ ṽ = ℓ(v)`.
    pub fn weighted_vector(&self, grid: &Grid) -> DVector<f64> {
        let n = grid.components();
        let mut f = DVector::zeros(grid.len());
        for &(node, comp, c) in &self.terms {
            f[node * n + comp] += c / grid.weights()[node].sqrt();
        }
        f
    }

    /// Function-space representer `f` with `⟨f|v⟩ = ℓ(v)` under the
    /// quadrature inner product.
    pub fn representer(&self, grid: Arc<Grid>) -> Result<Field> {
        let n = grid.components();
        let mut v = vec![Complex64::new(0.0, 0.0); grid.len()];
        for &(node, comp, c) in &self.terms {
            v[node * n + comp] += c / grid.weights()[node];
        }
        Field::from_complex_values(grid, v)
    }

    fn scaled_add(&mut self, other: &Functional, s: f64) {
        for &(node, comp, c) in &other.terms {
            self.terms.push((node, comp, s * c));
        }
    }
}

/// Finite-difference stencil for the curl at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurlStencil {
    /// Three-point central difference, needs one node of margin.
    SecondOrder,
    /// Five-point central difference, needs two nodes of margin.
    #[default]
    FourthOrder,
}

impl CurlStencil {
    pub fn reach(self) -> usize {
        match self {
            CurlStencil::SecondOrder => 1,
            CurlStencil::FourthOrder => 2,
        }
    }

    /// `(offset, weight)` pairs for `d/dx` with unit spacing.
    fn derivative_weights(self) -> &'static [(isize, f64)] {
        match self {
            CurlStencil::SecondOrder => &[(-1, -0.5), (1, 0.5)],
            CurlStencil::FourthOrder => &[(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)],
        }
    }
}

/// Functional `∂_axis v_component` at the origin.
pub fn derivative_functional(grid: &Grid, axis: usize, component: usize, stencil: CurlStencil) -> Result<Functional> {
    let o = grid.origin();
    let h = grid.spacing()[axis];
    let mut terms = Vec::new();
    for &(off, w) in stencil.derivative_weights() {
        let mut shift = vec![0isize; grid.dim()];
        shift[axis] = off;
        let node = grid
            .offset(o, &shift)
            .ok_or_else(|| Error::StencilOutOfDomain(format!("axis {axis} has no node at offset {off}")))?;
        terms.push((node, component, w / h));
    }
    Ok(Functional::new(terms))
}

/// The three functionals `(curl v)_mu(0)`.
pub fn curl_functionals(grid: &Grid, stencil: CurlStencil) -> Result<[Functional; 3]> {
    if grid.dim() != 3 || grid.components() != 3 {
        return Err(Error::InvalidArgument("curl needs a three-component field in three dimensions".into()));
    }
    if grid.origin_margin() < stencil.reach() {
        return Err(Error::StencilOutOfDomain(format!(
            "origin has {} node(s) of margin, stencil needs {}",
            grid.origin_margin(),
            stencil.reach()
        )));
    }
    let mut out: [Functional; 3] = Default::default();
    for (mu, f) in out.iter_mut().enumerate() {
        // (curl v)_mu = ∂_a v_b - ∂_b v_a with (mu, a, b) cyclic.
        let a = (mu + 1) % 3;
        let b = (mu + 2) % 3;
        f.scaled_add(&derivative_functional(grid, a, b, stencil)?, 1.0);
        f.scaled_add(&derivative_functional(grid, b, a, stencil)?, -1.0);
    }
    Ok(out)
}

impl Default for Functional {
    fn default() -> Self {
        Functional { terms: Vec::new() }
    }
}

/// Discrete curl of a field at the origin.
pub fn curl_at_origin(field: &Field, stencil: CurlStencil) -> Result<[Complex64; 3]> {
    let fs = curl_functionals(field.grid(), stencil)?;
    Ok([fs[0].eval(field), fs[1].eval(field), fs[2].eval(field)])
}

/// Storage of a [`QuadraticForm`].
#[derive(Debug, Clone)]
pub enum FormRepr {
    /// `Õ = re + i·im` in weighted coordinates.
    Dense { re: DMatrix<f64>, im: Option<DMatrix<f64>> },
    /// `Õ = Σ_ab S_ab f̃_a f̃_bᵀ` with `S = s_re + i·s_im` Hermitian.
    Factored { functionals: Vec<Functional>, s_re: DMatrix<f64>, s_im: Option<DMatrix<f64>> },
}

/// Hermitian observable `Ô` on a grid.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    grid: Arc<Grid>,
    repr: FormRepr,
}

fn hermitian_part(re: &DMatrix<f64>, im: Option<&DMatrix<f64>>) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let r = (re + re.transpose()) * 0.5;
    let i = im.map(|b| (b - b.transpose()) * 0.5).filter(|b| b.iter().any(|x| *x != 0.0));
    (r, i)
}

impl QuadraticForm {
    /// Low-rank form `Σ_ab S_ab conj(ℓ_a(v)) ℓ_b(v)`; `S` is replaced by its
    /// Hermitian part.
    pub fn factored(
        grid: Arc<Grid>,
        functionals: Vec<Functional>,
        s_re: DMatrix<f64>,
        s_im: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let r = functionals.len();
        if s_re.nrows() != r || s_re.ncols() != r || s_im.as_ref().is_some_and(|b| b.nrows() != r || b.ncols() != r) {
            return Err(Error::DimensionMismatch { expected: r, actual: s_re.nrows() });
        }
        for f in &functionals {
            for &(node, comp, _) in f.terms() {
                if node >= grid.node_count() || comp >= grid.components() {
                    return Err(Error::InvalidArgument(format!("functional term ({node}, {comp}) is off the grid")));
                }
            }
        }
        let (s_re, s_im) = hermitian_part(&s_re, s_im.as_ref());
        Ok(QuadraticForm { grid, repr: FormRepr::Factored { functionals, s_re, s_im } })
    }

    /// `(O + O†)/2` for a dense matrix in weighted coordinates.
    pub fn symmetrize(grid: Arc<Grid>, re: &DMatrix<f64>, im: Option<&DMatrix<f64>>) -> Result<Self> {
        let n = grid.len();
        if re.nrows() != n || re.ncols() != n || im.is_some_and(|b| b.nrows() != n || b.ncols() != n) {
            return Err(Error::DimensionMismatch { expected: n, actual: re.nrows() });
        }
        let (re, im) = hermitian_part(re, im);
        Ok(QuadraticForm { grid, repr: FormRepr::Dense { re, im } })
    }

    /// `⟨v|v⟩`, under which the spectrum of `M` is that of the covariance.
    pub fn identity(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        QuadraticForm { grid, repr: FormRepr::Dense { re: DMatrix::identity(n, n), im: None } }
    }

    /// `|v(0)|²` for a scalar field.
    pub fn point_intensity(grid: Arc<Grid>) -> Result<Self> {
        if grid.components() != 1 {
            return Err(Error::InvalidArgument("point intensity needs a one-component grid".into()));
        }
        let f = Functional::point(grid.origin(), 0);
        QuadraticForm::factored(grid, vec![f], DMatrix::from_element(1, 1, 1.0), None)
    }

    /// Local helicity `v(0) · curl v(0)` with the default fourth-order stencil.
    pub fn helicity(grid: Arc<Grid>) -> Result<Self> {
        QuadraticForm::helicity_with(grid, CurlStencil::default())
    }

    /// Local helicity with functionals `a_mu = v_mu(0)`, `b_mu = (curl v)_mu(0)`
    /// and `S = ½ [[0, I], [I, 0]]`.
    pub fn helicity_with(grid: Arc<Grid>, stencil: CurlStencil) -> Result<Self> {
        if grid.dim() != 3 || grid.components() != 3 || grid.kind() != FieldKind::Real {
            return Err(Error::InvalidArgument(
                "helicity needs a real three-component grid in three dimensions".into(),
            ));
        }
        let curls = curl_functionals(&grid, stencil)?;
        let o = grid.origin();
        let mut functionals: Vec<Functional> = (0..3).map(|mu| Functional::point(o, mu)).collect();
        functionals.extend(curls);
        let mut s = DMatrix::zeros(6, 6);
        for mu in 0..3 {
            s[(mu, mu + 3)] = 0.5;
            s[(mu + 3, mu)] = 0.5;
        }
        QuadraticForm::factored(grid, functionals, s, None)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn repr(&self) -> &FormRepr {
        &self.repr
    }

    pub fn is_factored(&self) -> bool {
        matches!(self.repr, FormRepr::Factored { .. })
    }

    /// Number of functionals of a factored form.
    pub fn rank(&self) -> Option<usize> {
        match &self.repr {
            FormRepr::Factored { functionals, .. } => Some(functionals.len()),
            FormRepr::Dense { .. } => None,
        }
    }

    /// Coefficient matrix as seen by fields of the grid's kind: real fields
    /// only see the real symmetric part.
    pub(crate) fn effective_im<'a>(&self, im: Option<&'a DMatrix<f64>>) -> Option<&'a DMatrix<f64>> {
        match self.grid.kind() {
            FieldKind::Real => None,
            FieldKind::Complex => im,
        }
    }

    /// `⟨v|Ô|v⟩` for weighted-coordinate values.
    pub fn evaluate_weighted(&self, v: &[Complex64]) -> f64 {
        match &self.repr {
            FormRepr::Dense { re, im } => {
                let n = v.len();
                let mut s = 0.0;
                for i in 0..n {
                    let mut row = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        let o = Complex64::new(re[(i, j)], self.effective_im(im.as_ref()).map_or(0.0, |b| b[(i, j)]));
                        row += o * v[j];
                    }
                    s += (v[i].conj() * row).re;
                }
                s
            }
            FormRepr::Factored { functionals, s_re, s_im } => {
                let l: Vec<Complex64> = functionals.iter().map(|f| f.eval_weighted(&self.grid, v)).collect();
                sesquilinear(&l, s_re, self.effective_im(s_im.as_ref()))
            }
        }
    }

    /// `⟨v|Ô|v⟩` for a field.
    pub fn evaluate(&self, field: &Field) -> Result<f64> {
        if **field.grid() != *self.grid {
            return Err(Error::GridMismatch);
        }
        match &self.repr {
            FormRepr::Factored { functionals, s_re, s_im } => {
                let l: Vec<Complex64> = functionals.iter().map(|f| f.eval(field)).collect();
                Ok(sesquilinear(&l, s_re, self.effective_im(s_im.as_ref())))
            }
            FormRepr::Dense { .. } => Ok(self.evaluate_weighted(&field.to_weighted())),
        }
    }

    /// Dense `Õ` in weighted coordinates (real and imaginary parts).
    pub fn to_dense(&self) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        match &self.repr {
            FormRepr::Dense { re, im } => (re.clone(), self.effective_im(im.as_ref()).cloned()),
            FormRepr::Factored { functionals, s_re, s_im } => {
                let n = self.grid.len();
                let mut f = DMatrix::zeros(n, functionals.len());
                for (a, fa) in functionals.iter().enumerate() {
                    f.set_column(a, &fa.weighted_vector(&self.grid));
                }
                let re = &f * s_re * f.transpose();
                let im = self.effective_im(s_im.as_ref()).map(|b| &f * b * f.transpose());
                (re, im)
            }
        }
    }

    /// `Õ v` in weighted coordinates.
    pub fn apply_weighted(&self, v: &[Complex64]) -> Vec<Complex64> {
        match &self.repr {
            FormRepr::Dense { re, im } => {
                let vr = DVector::from_iterator(v.len(), v.iter().map(|z| z.re));
                let vi = DVector::from_iterator(v.len(), v.iter().map(|z| z.im));
                let (mut r, mut i) = (re * &vr, re * &vi);
                if let Some(b) = self.effective_im(im.as_ref()) {
                    r -= b * &vi;
                    i += b * &vr;
                }
                r.iter().zip(i.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
            }
            FormRepr::Factored { functionals, s_re, s_im } => {
                let l: Vec<Complex64> = functionals.iter().map(|f| f.eval_weighted(&self.grid, v)).collect();
                let r = functionals.len();
                let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
                let s_im = self.effective_im(s_im.as_ref());
                for a in 0..r {
                    let mut c = Complex64::new(0.0, 0.0);
                    for b in 0..r {
                        c += Complex64::new(s_re[(a, b)], s_im.map_or(0.0, |m| m[(a, b)])) * l[b];
                    }
                    let fa = functionals[a].weighted_vector(&self.grid);
                    for (o, x) in out.iter_mut().zip(fa.iter()) {
                        *o += c * *x;
                    }
                }
                out
            }
        }
    }
}

fn sesquilinear(l: &[Complex64], s_re: &DMatrix<f64>, s_im: Option<&DMatrix<f64>>) -> f64 {
    let mut q = Complex64::new(0.0, 0.0);
    for a in 0..l.len() {
        for b in 0..l.len() {
            let s = Complex64::new(s_re[(a, b)], s_im.map_or(0.0, |m| m[(a, b)]));
            q += l[a].conj() * s * l[b];
        }
    }
    q.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use proptest::prelude::*;

    fn line(kind: FieldKind) -> Arc<Grid> {
        Arc::new(Grid::cube(1, 3.0, 61, 1, kind).unwrap())
    }

    fn cube(n: usize, l: f64) -> Arc<Grid> {
        Arc::new(Grid::cube(3, l, n, 3, FieldKind::Real).unwrap())
    }

    #[test]
    fn point_intensity_values() {
        let g = line(FieldKind::Complex);
        let o = QuadraticForm::point_intensity(g.clone()).unwrap();
        let one = Field::complex(g.clone(), vec![Complex64::new(1.0, 0.0); g.len()]).unwrap();
        assert_eq!(o.evaluate(&one).unwrap(), 1.0);
        let mut v = vec![Complex64::new(0.3, 1.0); g.len()];
        v[g.origin()] = Complex64::new(0.0, 0.0);
        assert_eq!(o.evaluate(&Field::complex(g.clone(), v).unwrap()).unwrap(), 0.0);
        // Kernel profile with C(0) = 1; oracle: direct node lookup.
        let prof = Field::from_fn(g.clone(), |x| vec![Complex64::new((-0.5 * x[0] * x[0]).exp(), 0.0)]).unwrap();
        let at0 = prof.value(g.origin(), 0).norm_sqr();
        assert_eq!(o.evaluate(&prof).unwrap(), at0);
        assert_eq!(at0, 1.0);
        assert_eq!(o.rank(), Some(1));
    }

    #[test]
    fn delta_representer_is_pointwise_evaluation() {
        let g = line(FieldKind::Real);
        let f = Functional::point(g.origin(), 0);
        let rep = f.representer(g.clone()).unwrap();
        assert_eq!(rep.value(g.origin(), 0).re, 1.0 / g.weights()[g.origin()]);
        let v = Field::from_fn(g.clone(), |x| vec![Complex64::new(x[0].cos() + 2.0, 0.0)]).unwrap();
        assert!((rep.inner_product(&v).unwrap() - v.value(g.origin(), 0)).norm() < 1e-12);
    }

    #[test]
    fn rigid_rotation_has_no_helicity() {
        let g = cube(5, 1.0);
        let o = QuadraticForm::helicity(g.clone()).unwrap();
        let rot = Field::from_fn(g.clone(), |x| {
            vec![Complex64::new(-x[1], 0.0), Complex64::new(x[0], 0.0), Complex64::new(0.0, 0.0)]
        })
        .unwrap();
        let c = curl_at_origin(&rot, CurlStencil::FourthOrder).unwrap();
        assert!((c[2].re - 2.0).abs() < 1e-12 && c[0].norm() < 1e-12 && c[1].norm() < 1e-12);
        assert_eq!(o.evaluate(&rot).unwrap(), 0.0);
        let shifted = Field::from_fn(g, |x| {
            vec![Complex64::new(1.0 - x[1], 0.0), Complex64::new(x[0], 0.0), Complex64::new(0.0, 0.0)]
        })
        .unwrap();
        assert!(o.evaluate(&shifted).unwrap().abs() < 1e-12);
    }

    // Smooth test field with analytic curl, used as the oracle for stencil order.
    fn trig_field(x: &[f64]) -> Vec<Complex64> {
        vec![
            Complex64::new(x[1].cos() + (x[2] + 0.3).sin(), 0.0),
            Complex64::new((0.7 * x[0] + 0.2).sin() * x[2].exp(), 0.0),
            Complex64::new((x[1] - 0.4).sin() + x[0] * x[0], 0.0),
        ]
    }

    fn trig_curl_at_zero() -> [f64; 3] {
        // curl = (∂y vz - ∂z vy, ∂z vx - ∂x vz, ∂x vy - ∂y vx) at 0.
        let dy_vz = (-0.4f64).cos();
        let dz_vy = (0.2f64).sin();
        let dz_vx = (0.3f64).cos();
        let dx_vz = 0.0;
        let dx_vy = 0.7 * (0.2f64).cos();
        let dy_vx = 0.0;
        [dy_vz - dz_vy, dz_vx - dx_vz, dx_vy - dy_vx]
    }

    fn curl_error(n: usize, l: f64, stencil: CurlStencil) -> f64 {
        let g = cube(n, l);
        let f = Field::from_fn(g, trig_field).unwrap();
        let c = curl_at_origin(&f, stencil).unwrap();
        let exact = trig_curl_at_zero();
        (0..3).map(|k| (c[k].re - exact[k]).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn discrete_curl_converges_at_design_order() {
        // Spacing 0.2, 0.1, 0.05 via (l, n) = (0.8, 9), (0.8, 17), (0.8, 33).
        for (stencil, min_ratio) in [(CurlStencil::SecondOrder, 3.5), (CurlStencil::FourthOrder, 12.0)] {
            let e: Vec<f64> = [9, 17, 33].iter().map(|&n| curl_error(n, 0.8, stencil)).collect();
            assert!(e[0] / e[1] >= min_ratio, "{stencil:?}: {e:?}");
            assert!(e[1] / e[2] >= min_ratio, "{stencil:?}: {e:?}");
        }
    }

    #[test]
    fn helicity_of_smooth_field_matches_analytic_value() {
        let g = cube(33, 0.8);
        let o = QuadraticForm::helicity(g.clone()).unwrap();
        let f = Field::from_fn(g, trig_field).unwrap();
        let v0 = trig_field(&[0.0, 0.0, 0.0]);
        let c = trig_curl_at_zero();
        let exact: f64 = (0..3).map(|k| v0[k].re * c[k]).sum();
        assert!((o.evaluate(&f).unwrap() - exact).abs() < 1e-6);
    }

    #[test]
    fn curl_stencil_needs_margin() {
        let g = cube(3, 1.0);
        assert!(matches!(QuadraticForm::helicity(g.clone()), Err(Error::StencilOutOfDomain(_))));
        assert!(QuadraticForm::helicity_with(g, CurlStencil::SecondOrder).is_ok());
    }

    #[test]
    fn symmetrize_examples() {
        let g = Arc::new(Grid::cube(1, 1.0, 3, 1, FieldKind::Real).unwrap());
        let g2 = Arc::new(Grid::new(&[1.0], &[3], 1, FieldKind::Real).unwrap());
        let sym = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 5.0, 6.0, 3.0, 6.0, 9.0]);
        let f = QuadraticForm::symmetrize(g.clone(), &sym, None).unwrap();
        assert_eq!(f.to_dense().0, sym);
        let anti = &sym - sym.transpose() + DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(max_abs(&QuadraticForm::symmetrize(g.clone(), &anti, None).unwrap().to_dense().0), 0.0);
        let mut o = DMatrix::zeros(3, 3);
        o[(0, 1)] = 1.0;
        let f = QuadraticForm::symmetrize(g2, &o, None).unwrap();
        let d = f.to_dense().0;
        assert_eq!((d[(0, 1)], d[(1, 0)], d[(0, 0)]), (0.5, 0.5, 0.0));
        assert!(QuadraticForm::symmetrize(g, &DMatrix::zeros(2, 2), None).is_err());
    }

    fn random_form(grid: &Arc<Grid>, seed: u64) -> QuadraticForm {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r = 3;
        let fs: Vec<Functional> = (0..r)
            .map(|_| {
                Functional::new(
                    (0..3)
                        .map(|_| (rng.random_range(0..grid.node_count()), 0, rng.random_range(-1.0..1.0)))
                        .collect(),
                )
            })
            .collect();
        let s_re = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
        let s_im = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
        QuadraticForm::factored(grid.clone(), fs, s_re, Some(s_im)).unwrap()
    }

    proptest! {
        #[test]
        fn factored_and_dense_agree(seed in 0u64..1000, vals in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 15)) {
            let g = Arc::new(Grid::cube(1, 1.0, 15, 1, FieldKind::Complex).unwrap());
            let form = random_form(&g, seed);
            let (re, im) = form.to_dense();
            let dense = QuadraticForm::symmetrize(g.clone(), &re, im.as_ref()).unwrap();
            let v: Vec<Complex64> = vals.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
            let f = Field::complex(g, v).unwrap();
            let a = form.evaluate(&f).unwrap();
            let b = dense.evaluate(&f).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            let w = f.to_weighted();
            let ov = form.apply_weighted(&w);
            let q: Complex64 = w.iter().zip(&ov).map(|(x, y)| x.conj() * y).sum();
            prop_assert!((q.re - a).abs() <= 1e-12 * (1.0 + a.abs()));
            prop_assert!(q.im.abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
