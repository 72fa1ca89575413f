//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Build a matrix from row-major nested rows. Ragged input is rejected.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::InvalidParameter("matrix literal has no rows".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::InvalidParameter("matrix literal has an empty row".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::InvalidParameter(format!(
            "ragged matrix literal: row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

pub fn max_sym_eigenvalue(m: &Matrix) -> f64 {
    *sym_eigenvalues(m).last().expect("non-empty matrix")
}

pub fn min_sym_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Induced 2-norm.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m)[0]
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn rank(m: &Matrix, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&0.0) => 0,
        Some(&smax) => s.iter().filter(|&&v| v > rel_tol * smax).count(),
    }
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(m: &Matrix) -> f64 {
    let s = singular_values(m);
    let smin = *s.last().unwrap_or(&0.0);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        s[0] / smin
    }
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn is_symmetric(m: &Matrix, rel_tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.transpose())) <= rel_tol * spectral_norm(m).max(f64::MIN_POSITIVE)
}

/// Inverse of a square matrix, refusing matrices whose smallest singular
/// value is below `rel_tol * sigma_max`.
pub fn inverse(m: &Matrix, rel_tol: f64, what: &str) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::InvalidParameter(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    let s = singular_values(m);
    let smax = s[0];
    let smin = *s.last().unwrap();
    if smax == 0.0 || smin <= rel_tol * smax {
        return Err(Error::Singular(format!("{what} (sigma_min = {smin:e}, sigma_max = {smax:e})")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_literal_is_rejected() {
        assert!(from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(from_rows(&[]).is_err());
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![-3.0, 2.0]));
        assert!((spectral_norm(&m) - 3.0).abs() < 1e-14);
        assert_eq!(rank(&m, 1e-10), 2);
    }

    #[test]
    fn inverse_refuses_singular() {
        let m = from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(inverse(&m, 1e-12, "m"), Err(Error::Singular(_))));
    }
}
