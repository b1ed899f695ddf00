//! Uniform box grids with trapezoidal quadrature and the discrete L² inner
//! product.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Scalar type of field values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Real,
    Complex,
}

impl std::fmt::Display for FieldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FieldKind::Real => "real",
            FieldKind::Complex => "complex",
        })
    }
}

impl std::str::FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(FieldKind::Real),
            "complex" => Ok(FieldKind::Complex),
            other => Err(Error::InvalidArgument(format!("unknown field kind {other:?}"))),
        }
    }
}

/// Tensor grid on `[-L_1, L_1] x ... x [-L_d, L_d]`.
///
/// Nodes are numbered with the last axis varying fastest. Field values are
/// stored node-major with components interleaved: `index = node * N + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    half_widths: Vec<f64>,
    points: Vec<usize>,
    components: usize,
    kind: FieldKind,
    spacing: Vec<f64>,
    weights: Vec<f64>,
    origin: usize,
}

impl Grid {
    pub fn new(
        half_widths: &[f64],
        points_per_axis: &[usize],
        components: usize,
        kind: FieldKind,
    ) -> Result<Grid> {
        let d = half_widths.len();
        if d == 0 {
            return Err(Error::InvalidGrid("dimension must be at least 1".into()));
        }
        if points_per_axis.len() != d {
            return Err(Error::InvalidGrid(format!(
                "{} half-widths but {} point counts",
                d,
                points_per_axis.len()
            )));
        }
        if components == 0 {
            return Err(Error::InvalidGrid("component count must be positive".into()));
        }
        for (k, (&l, &n)) in half_widths.iter().zip(points_per_axis).enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("axis {k}: non-positive extent {l}")));
            }
            if n < 3 {
                return Err(Error::InvalidGrid(format!("axis {k}: need at least 3 points, got {n}")));
            }
            if n % 2 == 0 {
                return Err(Error::InvalidGrid(format!(
                    "axis {k}: even point count {n} leaves the origin off the grid"
                )));
            }
        }

        let spacing: Vec<f64> = half_widths
            .iter()
            .zip(points_per_axis)
            .map(|(&l, &n)| 2.0 * l / (n - 1) as f64)
            .collect();
        let axis_weights: Vec<Vec<f64>> = spacing
            .iter()
            .zip(points_per_axis)
            .map(|(&h, &n)| {
                (0..n)
                    .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                    .collect()
            })
            .collect();

        let count: usize = points_per_axis.iter().product();
        let mut weights = vec![1.0; count];
        let mut idx = vec![0usize; d];
        for w in weights.iter_mut() {
            for k in 0..d {
                *w *= axis_weights[k][idx[k]];
            }
            increment(&mut idx, points_per_axis);
        }

        let centre: Vec<usize> = points_per_axis.iter().map(|n| n / 2).collect();
        let origin = flat_index(&centre, points_per_axis);

        Ok(Grid {
            half_widths: half_widths.to_vec(),
            points: points_per_axis.to_vec(),
            components,
            kind,
            spacing,
            weights,
            origin,
        })
    }

    /// Convenience constructor with the same extent and resolution on every axis.
    pub fn cube(dim: usize, half_width: f64, points: usize, components: usize, kind: FieldKind) -> Result<Grid> {
        Grid::new(&vec![half_width; dim], &vec![points; dim], components, kind)
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }

    pub fn points_per_axis(&self) -> &[usize] {
        &self.points
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    /// Length of a field value array, `node_count * N`.
    pub fn len(&self) -> usize {
        self.node_count() * self.components
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn volume(&self) -> f64 {
        self.half_widths.iter().map(|l| 2.0 * l).product()
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut rest = node;
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = rest % self.points[k];
            rest /= self.points[k];
        }
        idx
    }

    pub fn node_at(&self, multi_index: &[usize]) -> Option<usize> {
        if multi_index.len() != self.dim() || multi_index.iter().zip(&self.points).any(|(i, n)| i >= n) {
            return None;
        }
        Some(flat_index(multi_index, &self.points))
    }

    /// Node reached from `node` by an integer offset, if it stays on the grid.
    pub fn offset(&self, node: usize, shift: &[isize]) -> Option<usize> {
        let mut idx = self.multi_index(node);
        for (k, s) in shift.iter().enumerate() {
            let j = idx[k] as isize + s;
            if j < 0 || j >= self.points[k] as isize {
                return None;
            }
            idx[k] = j as usize;
        }
        Some(flat_index(&idx, &self.points))
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .enumerate()
            .map(|(k, &i)| -self.half_widths[k] + i as f64 * self.spacing[k])
            .collect()
    }

    /// Coordinates of every node, flattened node-major.
    pub fn all_coords(&self) -> Vec<f64> {
        (0..self.node_count()).flat_map(|i| self.coords(i)).collect()
    }

    /// Fewest nodes between the origin and any face of the box.
    pub fn origin_margin(&self) -> usize {
        self.points.iter().map(|n| n / 2).min().unwrap_or(0)
    }
}

fn flat_index(idx: &[usize], points: &[usize]) -> usize {
    idx.iter().zip(points).fold(0, |acc, (&i, &n)| acc * n + i)
}

fn increment(idx: &mut [usize], points: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < points[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Value storage of a [`Field`].
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValues {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl FieldValues {
    pub fn len(&self) -> usize {
        match self {
            FieldValues::Real(v) => v.len(),
            FieldValues::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> FieldKind {
        match self {
            FieldValues::Real(_) => FieldKind::Real,
            FieldValues::Complex(_) => FieldKind::Complex,
        }
    }

    pub fn get(&self, i: usize) -> Complex64 {
        match self {
            FieldValues::Real(v) => Complex64::new(v[i], 0.0),
            FieldValues::Complex(v) => v[i],
        }
    }
}

/// A real or complex `N`-component function sampled on a [`Grid`].
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: FieldValues,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: FieldValues) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), actual: values.len() });
        }
        if values.kind() != grid.kind() {
            return Err(Error::KindMismatch(format!(
                "grid is {} but values are {}",
                grid.kind(),
                values.kind()
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn real(grid: Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        Field::new(grid, FieldValues::Real(values))
    }

    pub fn complex(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Field> {
        Field::new(grid, FieldValues::Complex(values))
    }

    pub fn zeros(grid: Arc<Grid>) -> Field {
        let values = match grid.kind() {
            FieldKind::Real => FieldValues::Real(vec![0.0; grid.len()]),
            FieldKind::Complex => FieldValues::Complex(vec![Complex64::new(0.0, 0.0); grid.len()]),
        };
        Field { grid, values }
    }

    /// Builds a field of the grid's kind from complex values, discarding
    /// imaginary parts on real grids.
    pub fn from_complex_values(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Field> {
        match grid.kind() {
            FieldKind::Complex => Field::complex(grid, values),
            FieldKind::Real => Field::real(grid, values.into_iter().map(|z| z.re).collect()),
        }
    }

    /// Samples `f(x) -> [value per component]` at every node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> Vec<Complex64>) -> Result<Field> {
        let n = grid.components();
        let mut values = Vec::with_capacity(grid.len());
        for node in 0..grid.node_count() {
            let v = f(&grid.coords(node));
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: v.len() });
            }
            values.extend(v);
        }
        Field::from_complex_values(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &FieldValues {
        &self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.values.kind()
    }

    pub fn value(&self, node: usize, component: usize) -> Complex64 {
        self.values.get(node * self.grid.components() + component)
    }

    pub fn to_complex_vec(&self) -> Vec<Complex64> {
        match &self.values {
            FieldValues::Real(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            FieldValues::Complex(v) => v.clone(),
        }
    }

    /// Values multiplied by `sqrt(w_i)`, so that the quadrature inner product
    /// becomes the Euclidean one.
    pub fn to_weighted(&self) -> Vec<Complex64> {
        let n = self.grid.components();
        let w = self.grid.weights();
        self.to_complex_vec()
            .into_iter()
            .enumerate()
            .map(|(i, z)| z * w[i / n].sqrt())
            .collect()
    }

    pub fn from_weighted(grid: Arc<Grid>, weighted: &[Complex64]) -> Result<Field> {
        let n = grid.components();
        let values = weighted
            .iter()
            .enumerate()
            .map(|(i, z)| z / grid.weights()[i / n].sqrt())
            .collect();
        Field::from_complex_values(grid, values)
    }

    pub fn scale(&self, c: Complex64) -> Result<Field> {
        Field::from_complex_values(self.grid.clone(), self.to_complex_vec().into_iter().map(|z| z * c).collect())
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        let v = self
            .to_complex_vec()
            .into_iter()
            .zip(other.to_complex_vec())
            .map(|(a, b)| a - b)
            .collect();
        Field::from_complex_values(self.grid.clone(), v)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        let v = self
            .to_complex_vec()
            .into_iter()
            .zip(other.to_complex_vec())
            .map(|(a, b)| a + b)
            .collect();
        Field::from_complex_values(self.grid.clone(), v)
    }

    fn check_grid(&self, other: &Field) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `⟨self|other⟩ = Σ_m Σ_i w_i conj(f_{m,i}) g_{m,i}`.
    pub fn inner_product(&self, other: &Field) -> Result<Complex64> {
        self.check_grid(other)?;
        let n = self.grid.components();
        let w = self.grid.weights();
        let mut acc = Complex64::new(0.0, 0.0);
        match (&self.values, &other.values) {
            (FieldValues::Real(a), FieldValues::Real(b)) => {
                let s: f64 = a.iter().zip(b).enumerate().map(|(i, (x, y))| w[i / n] * x * y).sum();
                acc.re = s;
            }
            _ => {
                for i in 0..self.values.len() {
                    acc += w[i / n] * self.values.get(i).conj() * other.values.get(i);
                }
            }
        }
        Ok(acc)
    }

    pub fn l2_norm(&self) -> f64 {
        let n = self.grid.components();
        let w = self.grid.weights();
        let s: f64 = match &self.values {
            FieldValues::Real(v) => v.iter().enumerate().map(|(i, x)| w[i / n] * x * x).sum(),
            FieldValues::Complex(v) => v.iter().enumerate().map(|(i, z)| w[i / n] * z.norm_sqr()).sum(),
        };
        s.sqrt()
    }
}

/// Field equality is value equality on the same grid.
impl PartialEq for Field {
    fn eq(&self, other: &Field) -> bool {
        *self.grid == *other.grid && self.values == other.values
    }
}
