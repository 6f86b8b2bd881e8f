//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{KblError, Result};

/// Number of power-of-ten escalation steps tried before giving up on a
/// jittered factorization.
pub const MAX_JITTER_STEPS: i32 = 20;

/// Cholesky factor of `a + jitter * I` together with the jitter actually used.
#[derive(Clone, Debug)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(b)
    }

    /// Lower-triangular factor `L` with `L Lᵀ = a + jitter I`.
    pub fn l(&self) -> DMatrix<f64> {
        self.factor.l()
    }
}

/// Symmetric part `(a + aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Cholesky with escalating diagonal jitter.
///
/// Tries the plain factorization first. On failure, adds
/// `10^k * eps * max(trace, 1e-300)` for k = 0, 1, ... until it succeeds.
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<JitteredCholesky> {
    if !a.is_square() {
        return Err(KblError::Dimension(format!(
            "cholesky of non-square {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(KblError::Numerical("non-finite matrix entry".into()));
    }
    if let Some(factor) = Cholesky::new(a.clone()) {
        return Ok(JitteredCholesky { factor, jitter: 0.0 });
    }
    let base = f64::EPSILON * a.trace().abs().max(1e-300);
    for k in 0..MAX_JITTER_STEPS {
        let jitter = base * 10f64.powi(k);
        let mut shifted = a.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(factor) = Cholesky::new(shifted) {
            return Ok(JitteredCholesky { factor, jitter });
        }
    }
    Err(KblError::Numerical(format!(
        "factorization failed after {MAX_JITTER_STEPS} jitter escalations"
    )))
}

/// Eigen-decomposition of the symmetric part of `a`.
pub fn sym_eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    SymmetricEigen::new(symmetrize(a))
}

/// (min, max) eigenvalue of the symmetric part of `a`.
pub fn eigen_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = sym_eigen(a);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// True if the minimum eigenvalue is at least `-rel_tol * max(|max eigenvalue|, tiny)`.
pub fn is_psd(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    let (min, max) = eigen_extremes(a);
    min >= -rel_tol * max.abs().max(f64::MIN_POSITIVE)
}

/// Matrix square root and inverse square root of a symmetric PD matrix,
/// computed from one eigen-decomposition.
pub fn sqrt_and_inv_sqrt(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = sym_eigen(a);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(KblError::Numerical(
            "matrix square root requires a positive definite matrix".into(),
        ));
    }
    let v = &eig.eigenvectors;
    let sqrt = v * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * v.transpose();
    let inv_sqrt =
        v * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * v.transpose();
    Ok((sqrt, inv_sqrt))
}

pub fn frobenius_sq(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive. The
/// endpoints are returned exactly.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    _ if i == n - 1 => hi,
                    _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_is_zero_for_pd() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let ch = cholesky_with_jitter(&a).unwrap();
        assert_eq!(ch.jitter, 0.0);
    }

    #[test]
    fn jitter_rescues_rank_deficient() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        let ch = cholesky_with_jitter(&a).unwrap();
        assert!(ch.jitter > 0.0);
        assert!(ch.jitter < 1e-6 * a.trace());
    }

    #[test]
    fn sqrt_roundtrip() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (s, is) = sqrt_and_inv_sqrt(&a).unwrap();
        assert!((&s * &s - &a).norm() < 1e-12);
        assert!((&s * &is - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn logspace_endpoints() {
        let g = logspace(1e-4, 1e2, 20);
        assert_eq!(g.len(), 20);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[19] - 1e2).abs() < 1e-10);
    }
}
