//! Python bindings: grids and fields, the two exemplar experiments, their
//! signed spectra, conditional sampling, concentration curves and the tail
//! law of `Q = Σ λ|t|²`.

use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qdgf_core::concentration::{self as conc, CurveConfig};
use qdgf_core::exemplars;
use qdgf_core::operators::{CurlStencil, IsotropicFlowKernel, ScalarKernel};
use qdgf_core::sampling::{reconstruct_field, sample_coefficients, quadratic_value, Method, RngStream};
use qdgf_core::spectral::fundamental_basis;
use qdgf_core::tails::{self, EigenvalueProfile};
use qdgf_core::{io, Error, FieldKind, Sign};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidGrid(_)
        | Error::InvalidCovariance(_)
        | Error::InvalidArgument(_)
        | Error::StencilOutOfDomain(_)
        | Error::KindMismatch(_)
        | Error::DimensionMismatch { .. }
        | Error::GridMismatch
        | Error::Format(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_kind(s: &str) -> PyResult<FieldKind> {
    match s {
        "real" => Ok(FieldKind::Real),
        "complex" => Ok(FieldKind::Complex),
        other => Err(PyValueError::new_err(format!("unknown field kind {other:?}"))),
    }
}

fn kind_name(k: FieldKind) -> &'static str {
    match k {
        FieldKind::Real => "real",
        FieldKind::Complex => "complex",
    }
}

fn parse_sign(s: &str) -> PyResult<Sign> {
    s.parse().map_err(to_py)
}

fn parse_method(s: Option<&str>) -> PyResult<Option<Method>> {
    match s {
        None | Some("auto") => Ok(None),
        Some("rejection") => Ok(Some(Method::Rejection)),
        Some("tilted") => Ok(Some(Method::Tilted)),
        Some(other) => Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    }
}

/// Box `[−L, L]^d` with an odd number of trapezoid nodes per axis.
#[pyclass(frozen, skip_from_py_object, module = "qdgf")]
#[derive(Clone)]
pub struct Grid {
    inner: Arc<qdgf_core::Grid>,
}

#[pymethods]
impl Grid {
    #[new]
    #[pyo3(signature = (dim, half_width, points, components = 1, kind = "complex"))]
    fn new(dim: usize, half_width: f64, points: usize, components: usize, kind: &str) -> PyResult<Self> {
        let g = qdgf_core::Grid::cube(dim, half_width, points, components, parse_kind(kind)?).map_err(to_py)?;
        Ok(Grid { inner: Arc::new(g) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn points_per_axis(&self) -> Vec<usize> {
        self.inner.points_per_axis().to_vec()
    }

    #[getter]
    fn half_widths(&self) -> Vec<f64> {
        self.inner.half_widths().to_vec()
    }

    #[getter]
    fn components(&self) -> usize {
        self.inner.components()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        kind_name(self.inner.kind())
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    /// Node index of the origin.
    #[getter]
    fn origin(&self) -> usize {
        self.inner.origin()
    }

    fn coords(&self, node: usize) -> PyResult<Vec<f64>> {
        if node >= self.inner.node_count() {
            return Err(PyValueError::new_err(format!("node {node} out of range")));
        }
        Ok(self.inner.coords(node))
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(dim={}, half_width={}, points={}, components={}, kind='{}')",
            self.inner.dim(),
            self.inner.half_widths()[0],
            self.inner.points_per_axis()[0],
            self.inner.components(),
            kind_name(self.inner.kind())
        )
    }
}

/// Real or complex field sampled on a [`Grid`]; values are node-major with
/// components innermost.
#[pyclass(frozen, skip_from_py_object, module = "qdgf")]
#[derive(Clone)]
pub struct Field {
    inner: qdgf_core::Field,
}

#[pymethods]
impl Field {
    #[new]
    fn new(grid: &Grid, values: Vec<Complex64>) -> PyResult<Self> {
        let f = match grid.inner.kind() {
            FieldKind::Complex => qdgf_core::Field::complex(grid.inner.clone(), values),
            FieldKind::Real => {
                if values.iter().any(|v| v.im != 0.0) {
                    return Err(PyValueError::new_err("real grid given complex values"));
                }
                qdgf_core::Field::real(grid.inner.clone(), values.iter().map(|v| v.re).collect())
            }
        };
        Ok(Field { inner: f.map_err(to_py)? })
    }

    #[getter]
    fn grid(&self) -> Grid {
        Grid { inner: self.inner.grid().clone() }
    }

    #[getter]
    fn kind(&self) -> &'static str {
        kind_name(self.inner.kind())
    }

    fn values(&self) -> Vec<Complex64> {
        self.inner.to_complex_vec()
    }

    fn value(&self, node: usize, component: usize) -> PyResult<Complex64> {
        let g = self.inner.grid();
        if node >= g.node_count() || component >= g.components() {
            return Err(PyValueError::new_err("node or component out of range"));
        }
        Ok(self.inner.value(node, component))
    }

    fn l2_norm(&self) -> f64 {
        self.inner.l2_norm()
    }

    /// Weighted inner product `⟨self|other⟩`.
    fn inner_product(&self, other: &Field) -> PyResult<Complex64> {
        self.inner.inner_product(&other.inner).map_err(to_py)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        io::save_field(path, &self.inner).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (path, kind = None))]
    fn load(path: std::path::PathBuf, kind: Option<&str>) -> PyResult<Self> {
        let expected = kind.map(parse_kind).transpose()?;
        Ok(Field { inner: io::load_field(path, expected).map_err(to_py)? })
    }

    fn __len__(&self) -> usize {
        self.inner.grid().len()
    }
}

/// Covariance, quadratic observable and the signed spectrum of
/// `M = C^{1/2} O C^{1/2}`.
#[pyclass(frozen, module = "qdgf")]
pub struct Experiment {
    inner: conc::Experiment,
}

impl Experiment {
    fn curve_config(&self, epsilon: f64, samples: usize, seed: u64, method: Option<&str>) -> PyResult<CurveConfig> {
        Ok(CurveConfig { epsilon, samples_per_u: samples, seed, method: parse_method(method)? })
    }
}

#[pymethods]
impl Experiment {
    /// Point intensity `|φ(0)|²` of a scalar field with a gaussian
    /// (`kernel="gaussian"`, width `scale`) or exponential (correlation
    /// length `scale`) covariance.
    #[staticmethod]
    #[pyo3(signature = (grid, kernel = "gaussian", scale = 1.0))]
    fn point(py: Python<'_>, grid: &Grid, kernel: &str, scale: f64) -> PyResult<Self> {
        let k = match kernel {
            "gaussian" => ScalarKernel::Gaussian { sigma: scale },
            "exponential" => ScalarKernel::Exponential { corr_length: scale },
            other => return Err(PyValueError::new_err(format!("unknown scalar kernel {other:?}"))),
        };
        let g = grid.inner.clone();
        let inner = py.detach(|| {
            let (c, o) = exemplars::point_setup(k, g)?;
            conc::Experiment::new(c, o)
        });
        Ok(Experiment { inner: inner.map_err(to_py)? })
    }

    /// Local helicity `v(0)·curl v(0)` of an isotropic incompressible flow
    /// with energy `E` and Taylor scale `ℓ`.
    #[staticmethod]
    #[pyo3(signature = (grid, energy = 3.0, taylor_scale = 1.0, stencil = "fourth_order"))]
    fn helicity(py: Python<'_>, grid: &Grid, energy: f64, taylor_scale: f64, stencil: &str) -> PyResult<Self> {
        let st = match stencil {
            "second_order" => CurlStencil::SecondOrder,
            "fourth_order" => CurlStencil::FourthOrder,
            other => return Err(PyValueError::new_err(format!("unknown stencil {other:?}"))),
        };
        let g = grid.inner.clone();
        let inner = py.detach(|| {
            let k = IsotropicFlowKernel::gaussian(energy, taylor_scale)?;
            let (c, o) = exemplars::helicity_setup(k, g, st)?;
            conc::Experiment::new(c, o)
        });
        Ok(Experiment { inner: inner.map_err(to_py)? })
    }

    #[getter]
    fn grid(&self) -> Grid {
        Grid { inner: self.inner.spectrum().grid().clone() }
    }

    /// Nonzero eigenvalues of `M`, positive branch first, each descending in
    /// magnitude.
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.spectrum().eigenvalues().to_vec()
    }

    fn leading(&self, sign: &str) -> PyResult<Option<f64>> {
        Ok(self.inner.spectrum().leading(parse_sign(sign)?))
    }

    fn degeneracy(&self, sign: &str) -> PyResult<usize> {
        Ok(self.inner.spectrum().degeneracy(parse_sign(sign)?))
    }

    /// Fundamental profiles `C^{1/2}|λ_{±1}⟩`, unnormalised; their Gram matrix
    /// is `⟨λ_i|C|λ_j⟩`.
    fn fundamental_basis(&self, sign: &str) -> PyResult<Vec<Field>> {
        let b = fundamental_basis(self.inner.spectrum(), parse_sign(sign)?).map_err(to_py)?;
        Ok(b.vectors().iter().map(|f| Field { inner: f.clone() }).collect())
    }

    /// `index,branch,eigenvalue,cluster_id` table.
    fn spectrum_csv(&self) -> String {
        io::spectrum_csv(self.inner.spectrum())
    }

    /// Default thresholds: quantiles 0.5, 0.9, 0.99 of `±Q` and two
    /// multiples of the 0.99 quantile.
    fn default_u_grid(&self, sign: &str) -> PyResult<Vec<f64>> {
        conc::default_u_grid(&self.inner, parse_sign(sign)?).map_err(to_py)
    }

    /// `count` unconditional realisations as `(Q, field)` pairs.
    #[pyo3(signature = (count, seed = 0, stream = 0))]
    fn sample(&self, py: Python<'_>, count: usize, seed: u64, stream: u64) -> PyResult<Vec<(f64, Field)>> {
        let exp = &self.inner;
        py.detach(|| {
            let mut rng = RngStream::new(seed, stream);
            sample_coefficients(&mut rng, exp.spectrum(), count)
                .iter()
                .map(|t| {
                    let f = reconstruct_field(t, exp.spectrum(), exp.cov())?;
                    Ok((quadratic_value(t, exp.spectrum()), Field { inner: f }))
                })
                .collect::<qdgf_core::Result<Vec<_>>>()
        })
        .map_err(to_py)
    }

    /// Conditional ensemble `{sign · Q > u}` with per-sample mismatch
    /// statistics. Returns a dict with the summary row and the lists `q`,
    /// `weight` and `distance`; `fields=True` adds the realisations.
    #[pyo3(signature = (u, sign = "plus", count = 1000, seed = 0, method = None, epsilon = 0.25, stream = 0, fields = false))]
    #[allow(clippy::too_many_arguments)]
    fn condition<'py>(
        &self,
        py: Python<'py>,
        u: f64,
        sign: &str,
        count: usize,
        seed: u64,
        method: Option<&str>,
        epsilon: f64,
        stream: u64,
        fields: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let s = parse_sign(sign)?;
        let cfg = self.curve_config(epsilon, count, seed, method)?;
        let exp = &self.inner;
        let (run, realised) = py
            .detach(|| {
                let basis = fundamental_basis(exp.spectrum(), s)?;
                let run = conc::conditioned_run(exp, &basis, s, u, &cfg, stream)?;
                let realised = if fields {
                    run.ensemble
                        .samples
                        .iter()
                        .map(|x| reconstruct_field(&x.coeffs, exp.spectrum(), exp.cov()))
                        .collect::<qdgf_core::Result<Vec<_>>>()?
                } else {
                    Vec::new()
                };
                Ok((run, realised))
            })
            .map_err(to_py)?;
        let d = point_dict(py, &run.point)?;
        d.set_item("q", run.ensemble.samples.iter().map(|x| x.q).collect::<Vec<_>>())?;
        d.set_item("weight", run.ensemble.weights())?;
        d.set_item("distance", run.reports.iter().map(|r| r.distance).collect::<Vec<_>>())?;
        if fields {
            d.set_item("fields", realised.into_iter().map(|f| Field { inner: f }).collect::<Vec<_>>())?;
        }
        Ok(d)
    }

    /// Mismatch probability `P_u(D > ε)` at each threshold, one dict per
    /// threshold. Thresholds default to [`Experiment.default_u_grid`].
    #[pyo3(signature = (u = None, sign = "plus", epsilon = 0.25, samples = 2000, seed = 0, method = None))]
    fn concentration_curve<'py>(
        &self,
        py: Python<'py>,
        u: Option<Vec<f64>>,
        sign: &str,
        epsilon: f64,
        samples: usize,
        seed: u64,
        method: Option<&str>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let s = parse_sign(sign)?;
        let cfg = self.curve_config(epsilon, samples, seed, method)?;
        let exp = &self.inner;
        let curve = py
            .detach(|| {
                let us = match u {
                    Some(us) => us,
                    None => conc::default_u_grid(exp, s)?,
                };
                conc::concentration_curve(exp, s, &us, &cfg)
            })
            .map_err(to_py)?;
        curve.points.iter().map(|p| point_dict(py, p)).collect()
    }
}

fn point_dict<'py>(py: Python<'py>, p: &conc::CurvePoint) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("u", p.u)?;
    d.set_item("method", p.method.to_string())?;
    d.set_item("theta", p.theta)?;
    d.set_item("acceptance_estimate", p.acceptance_estimate)?;
    d.set_item("p_exceed", p.p_exceed)?;
    d.set_item("p_err", p.p_err)?;
    d.set_item("ess", p.ess)?;
    d.set_item("median_d", p.median_d)?;
    d.set_item("frac_below_eps", p.frac_below_eps)?;
    d.set_item("mean_q", p.mean_q)?;
    d.set_item("draws", p.draws)?;
    d.set_item("unreliable", p.unreliable)?;
    Ok(d)
}

fn profile(eigenvalues: &[f64], kind: &str) -> PyResult<EigenvalueProfile> {
    EigenvalueProfile::from_values(parse_kind(kind)?, eigenvalues).map_err(to_py)
}

/// `P(Q > u)` for `Q = Σ λ_n |t_n|²` by characteristic-function inversion.
#[pyfunction]
#[pyo3(signature = (eigenvalues, u, kind = "complex"))]
fn tail_inversion(eigenvalues: Vec<f64>, u: f64, kind: &str) -> PyResult<f64> {
    tails::tail_inversion(&profile(&eigenvalues, kind)?, u).map_err(to_py)
}

/// Closed-form `P(Q > u)`; needs distinct eigenvalues.
#[pyfunction]
#[pyo3(signature = (eigenvalues, u, kind = "complex"))]
fn tail_closed_form(eigenvalues: Vec<f64>, u: f64, kind: &str) -> PyResult<f64> {
    tails::tail_closed_form(&profile(&eigenvalues, kind)?, u).map_err(to_py)
}

/// Monte Carlo `(P(Q > u), standard error)`.
#[pyfunction]
#[pyo3(signature = (eigenvalues, u, kind = "complex", draws = 1_000_000, seed = 0, stream = 0))]
fn tail_monte_carlo(eigenvalues: Vec<f64>, u: f64, kind: &str, draws: u64, seed: u64, stream: u64) -> PyResult<(f64, f64)> {
    let p = profile(&eigenvalues, kind)?;
    let mut rng = RngStream::new(seed, stream);
    let e = tails::tail_monte_carlo(&p, u, draws, &mut rng).map_err(to_py)?;
    Ok((e.probability, e.std_error))
}

/// Lower bound on `P(Q > u)` and its constant `C_1`.
#[pyfunction]
#[pyo3(signature = (eigenvalues, u, alpha = 0.5, kind = "complex"))]
fn tail_lower_bound(eigenvalues: Vec<f64>, u: f64, alpha: f64, kind: &str) -> PyResult<(f64, f64)> {
    tails::tail_lower_bound(&profile(&eigenvalues, kind)?, u, alpha).map_err(to_py)
}

/// Density of `Q` at `v`.
#[pyfunction]
#[pyo3(signature = (eigenvalues, v, kind = "complex"))]
fn pdf(eigenvalues: Vec<f64>, v: f64, kind: &str) -> PyResult<f64> {
    tails::pdf_inversion(&profile(&eigenvalues, kind)?, v).map_err(to_py)
}

/// `(λ_{+1}, λ_{−1}, degeneracy)` of the helicity in closed form.
#[pyfunction]
fn helicity_eigenvalues(energy: f64, taylor_scale: f64) -> PyResult<(f64, f64, usize)> {
    exemplars::helicity_eigenvalues(energy, taylor_scale).map_err(to_py)
}

/// Predicted point-intensity eigenvalue `C(0)` and normalised profile.
#[pyfunction]
#[pyo3(signature = (grid, kernel = "gaussian", scale = 1.0))]
fn point_prediction(grid: &Grid, kernel: &str, scale: f64) -> PyResult<(f64, Field)> {
    let k = match kernel {
        "gaussian" => ScalarKernel::Gaussian { sigma: scale },
        "exponential" => ScalarKernel::Exponential { corr_length: scale },
        other => return Err(PyValueError::new_err(format!("unknown scalar kernel {other:?}"))),
    };
    let p = exemplars::point_prediction(&k, grid.inner.clone()).map_err(to_py)?;
    Ok((p.lambda1, Field { inner: p.profile }))
}

#[pymodule]
fn qdgf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", qdgf_core::VERSION)?;
    m.add_class::<Grid>()?;
    m.add_class::<Field>()?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(tail_inversion, m)?)?;
    m.add_function(wrap_pyfunction!(tail_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(tail_monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(tail_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(pdf, m)?)?;
    m.add_function(wrap_pyfunction!(helicity_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(point_prediction, m)?)?;
    Ok(())
}
