//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Absolute symmetry tolerance for user-supplied matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative tolerance below zero still accepted as "non-negative".
pub const PSD_REL_TOL: f64 = 1e-10;

pub fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_square(m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn check_symmetric(m: &Matrix) -> Result<()> {
    check_square(m)?;
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL * (1.0 + spectral_norm_bound(m)) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Cheap upper bound on the spectral norm (max absolute row sum).
pub fn spectral_norm_bound(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn psd_tolerance(m: &Matrix) -> f64 {
    PSD_REL_TOL * (1.0 + spectral_norm_bound(m))
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}

/// Symmetric eigendecomposition with eigenvalues in `[-tol, 0)` clamped to zero.
///
/// Fails with `Indefinite` when an eigenvalue sits below the tolerance.
pub fn eigen_clamped(m: &Matrix) -> Result<(Vector, Matrix)> {
    let tol = psd_tolerance(m);
    let eig = SymmetricEigen::new(symmetrize(m));
    let min = eig.eigenvalues.min();
    if min < -tol {
        return Err(Error::Indefinite {
            min_eigenvalue: min,
        });
    }
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    Ok((vals, eig.eigenvectors))
}

/// Symmetric square root of a non-negative definite matrix.
pub fn sqrt_psd(m: &Matrix) -> Result<Matrix> {
    let (vals, vecs) = eigen_clamped(m)?;
    let root = DMatrix::from_diagonal(&vals.map(f64::sqrt));
    Ok(symmetrize(&(&vecs * root * vecs.transpose())))
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Quadratic form `<m xi, xi>`.
pub fn quad_form(m: &Matrix, xi: &[f64]) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * xi[j];
        }
        acc += xi[i] * row;
    }
    acc
}

/// Projection onto the first `p0` coordinates.
pub fn leading_projection(dim: usize, p0: usize) -> Matrix {
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..p0.min(dim) {
        m[(i, i)] = 1.0;
    }
    m
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidArgument("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let s = sqrt_psd(&m).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((s[(1, 1)] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn indefinite_rejected() {
        let m = from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(eigen_clamped(&m), Err(Error::Indefinite { .. })));
    }

    #[test]
    fn quad_form_matches_matrix_product() {
        let m = from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let xi = [0.5, -1.5];
        let v = DVector::from_row_slice(&xi);
        assert!((quad_form(&m, &xi) - v.dot(&(&m * &v))).abs() < 1e-14);
    }
}
