//! Cyclic Jacobi rotations for dense real symmetric matrices.

use nalgebra::{DMatrix, DVector};

use super::{check_symmetric, sort_descending, SymmetricEigen};
use crate::{Error, Result};

pub const JACOBI_MAX_SWEEPS: usize = 30;

/// Full eigendecomposition of a symmetric matrix.
///
/// Sweeps until the off-diagonal Frobenius mass falls to `tol` times the
/// Frobenius norm of the input. Eigenvalues are returned in descending order;
/// each eigenvector has its largest-magnitude entry positive.
pub fn eigendecompose_symmetric(a: &DMatrix<f64>, tol: f64) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    let n = a.nrows();
    // Row-major working copy, symmetrised.
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let total: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = tol * total;
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut residual = off(&m);
    let mut sweep = 0;
    while residual > target {
        if sweep == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps: sweep, residual: residual / total.max(f64::MIN_POSITIVE) });
        }
        sweep += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        residual = off(&m);
    }

    let values = DVector::from_fn(n, |i, _| m[i * n + i]);
    let vectors = DMatrix::from_fn(n, n, |i, j| v[i * n + j]);
    Ok(sort_descending(values, vectors))
}
