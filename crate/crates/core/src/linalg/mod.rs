//! Dense Hermitian eigensolvers.
//!
//! Small problems use the cyclic Jacobi method in [`jacobi`]; larger real
//! symmetric problems go to nalgebra's implicit QR solver. Both return
//! eigenvalues in descending order with the sign convention of
//! [`fix_phase`].

pub mod jacobi;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub use jacobi::{eigendecompose_symmetric, JACOBI_MAX_SWEEPS};

/// Above this size real symmetric problems use nalgebra instead of Jacobi.
pub const JACOBI_MAX_DIM: usize = 160;

/// Eigenpairs of a real symmetric matrix, eigenvalues descending, vectors in
/// columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Eigenpairs of a complex Hermitian matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<Complex64>,
}

pub(crate) fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), actual: a.ncols() });
    }
    let scale = max_abs(a);
    let allowed = 1e-10 * scale;
    let n = a.nrows();
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if asym > allowed {
        return Err(Error::NotHermitian { asymmetry: asym, allowed });
    }
    Ok(())
}

/// Real symmetric eigendecomposition, choosing the backend by size.
pub fn eigh(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    if a.nrows() <= JACOBI_MAX_DIM {
        return eigendecompose_symmetric(a, 1e-15);
    }
    let sym = (a + a.transpose()) * 0.5;
    let e = nalgebra::SymmetricEigen::new(sym);
    Ok(sort_descending(e.eigenvalues, e.eigenvectors))
}

pub(crate) fn sort_descending(values: DVector<f64>, vectors: DMatrix<f64>) -> SymmetricEigen {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let n = vectors.nrows();
    let mut v = DMatrix::zeros(n, order.len());
    let mut lam = DVector::zeros(order.len());
    for (k, &i) in order.iter().enumerate() {
        lam[k] = values[i];
        let mut col = vectors.column(i).into_owned();
        fix_sign(&mut col);
        v.set_column(k, &col);
    }
    SymmetricEigen { values: lam, vectors: v }
}

/// Makes the largest-magnitude entry positive. Ties go to the lowest index.
pub(crate) fn fix_sign(col: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..col.len() {
        if col[i].abs() > col[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if col.len() > 0 && col[best] < 0.0 {
        col.neg_mut();
    }
}

/// Rotates a complex vector so its largest-magnitude entry is real-positive.
pub fn fix_phase(col: &mut DVector<Complex64>) {
    let mut best = 0;
    for i in 1..col.len() {
        if col[i].norm() > col[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if col.len() > 0 && col[best].norm() > 0.0 {
        let phase = col[best].conj() / col[best].norm();
        for z in col.iter_mut() {
            *z *= phase;
        }
    }
}

/// Hermitian eigendecomposition of `A + iB` through the real embedding
/// `[[A, -B], [B, A]]`.
///
/// Each eigenvalue of the embedding appears twice, with eigenvectors
/// `(x, y)` and `(-y, x)` both mapping to `x + iy` up to a factor of `i`.
/// Clusters of near-equal eigenvalues are halved by complex Gram–Schmidt on
/// the mapped vectors.
pub fn eigh_complex(re: &DMatrix<f64>, im: Option<&DMatrix<f64>>) -> Result<HermitianEigen> {
    let Some(im) = im.filter(|b| max_abs(b) > 0.0) else {
        let e = eigh(re)?;
        return Ok(HermitianEigen { values: e.values, vectors: e.vectors.map(|x| Complex64::new(x, 0.0)) });
    };
    check_symmetric(re)?;
    let n = re.nrows();
    if im.nrows() != n || im.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: im.nrows() });
    }
    let scale = max_abs(re).max(max_abs(im));
    let mut anti: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            anti = anti.max((im[(i, j)] + im[(j, i)]).abs());
        }
    }
    if anti > 1e-10 * scale {
        return Err(Error::NotHermitian { asymmetry: anti, allowed: 1e-10 * scale });
    }

    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(re);
    big.view_mut((n, n), (n, n)).copy_from(re);
    big.view_mut((0, n), (n, n)).copy_from(&(-im));
    big.view_mut((n, 0), (n, n)).copy_from(im);
    let e = eigh(&big)?;

    let tol = 1e-9 * e.values.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut values = Vec::with_capacity(n);
    let mut vectors: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    let mut start = 0;
    while start < 2 * n {
        let mut end = start + 1;
        while end < 2 * n && (e.values[end - 1] - e.values[end]).abs() <= tol {
            end += 1;
        }
        let want = (end - start) / 2;
        let mut basis: Vec<DVector<Complex64>> = Vec::with_capacity(want);
        let mut cands: Vec<DVector<Complex64>> = (start..end)
            .map(|k| {
                let c = e.vectors.column(k);
                DVector::from_fn(n, |i, _| Complex64::new(c[i], c[i + n]))
            })
            .collect();
        // Largest residual norm first keeps Gram–Schmidt well conditioned.
        while basis.len() < want && !cands.is_empty() {
            let mut best = (0, -1.0);
            for (k, v) in cands.iter().enumerate() {
                let mut r = v.clone();
                for b in &basis {
                    let p = b.dotc(&r);
                    r -= b * p;
                }
                let nr = r.norm();
                if nr > best.1 {
                    best = (k, nr);
                }
            }
            let mut r = cands.swap_remove(best.0);
            for _ in 0..2 {
                for b in &basis {
                    let p = b.dotc(&r);
                    r -= b * p;
                }
            }
            let nr = r.norm();
            if nr < 1e-6 {
                break;
            }
            r /= Complex64::new(nr, 0.0);
            basis.push(r);
        }
        let mean = e.values.rows(start, end - start).mean();
        for mut b in basis {
            fix_phase(&mut b);
            values.push(mean);
            vectors.push(b);
        }
        start = end;
    }
    if values.len() != n {
        return Err(Error::NoConvergence { sweeps: 0, residual: (values.len() as f64 - n as f64).abs() });
    }
    let mut v = DMatrix::zeros(n, n);
    for (k, col) in vectors.iter().enumerate() {
        v.set_column(k, col);
    }
    Ok(HermitianEigen { values: DVector::from_vec(values), vectors: v })
}

/// Principal angles in radians between the column spans of `a` and `b`,
/// ascending. Both inputs are orthonormalised first.
pub fn principal_angles(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), actual: b.nrows() });
    }
    if a.ncols() == 0 || b.ncols() == 0 {
        return Ok(Vec::new());
    }
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let overlap = qa.adjoint() * qb;
    let sv = overlap.singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|s| s.clamp(0.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    angles.truncate(a.ncols().min(b.ncols()));
    Ok(angles)
}
