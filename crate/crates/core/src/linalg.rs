//! Small dense symmetric helpers.

use nalgebra::{DMatrix, DVector};

/// Default ceiling on the spectral condition number for a design matrix to
/// count as invertible.
pub const DEFAULT_RIDGE_GUARD: f64 = 1e12;

/// True when the symmetric matrix has a strictly positive smallest eigenvalue
/// and a condition number no larger than `guard`.
pub fn is_numerically_pd(m: &DMatrix<f64>, guard: f64) -> bool {
    if m.nrows() == 0 {
        return false;
    }
    if m.nrows() == 1 {
        return m[(0, 0)] > 0.0 && m[(0, 0)].is_finite();
    }
    let eig = m.clone().symmetric_eigenvalues();
    let lo = eig.min();
    let hi = eig.max();
    lo > 0.0 && hi.is_finite() && hi / lo <= guard
}

/// Solve `m x = b` with a Cholesky factorization; `None` if `m` is not
/// positive definite.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    m.clone().cholesky().map(|c| c.solve(b))
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pd_checks() {
        assert!(!is_numerically_pd(&DMatrix::zeros(2, 2), 1e12));
        assert!(is_numerically_pd(&DMatrix::identity(3, 3), 1e12));
        // rank one
        let v = DVector::from_vec(vec![1.0, 0.3]);
        assert!(!is_numerically_pd(&(&v * v.transpose()), 1e12));
        let ill = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        assert!(!is_numerically_pd(&ill, 1e12));
        assert!(is_numerically_pd(&ill, 1e14));
        assert!(!is_numerically_pd(&DMatrix::from_element(1, 1, 0.0), 1e12));
    }

    #[test]
    fn solve_matches_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = spd_solve(&m, &b).unwrap();
        let y = spd_inverse(&m).unwrap() * &b;
        assert!((x - y).norm() < 1e-15);
        assert!(spd_solve(&DMatrix::zeros(2, 2), &b).is_none());
    }
}
