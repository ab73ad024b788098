//! Small dense solvers shared by the ridge, NNLS and block updates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Result of solving a symmetric positive semi-definite system.
#[derive(Debug, Clone)]
pub(crate) struct PsdSolution {
    pub x: DVector<f64>,
    /// The matrix was singular and `x` is the minimum-norm solution.
    pub singular: bool,
}

/// Solves `a x = b` for symmetric PSD `a`.
///
/// Cholesky with one step of iterative refinement when `a` is positive
/// definite; otherwise the eigen-decomposition pseudo-inverse, which yields the
/// minimum-norm solution when `b` lies in the range of `a`.
pub(crate) fn solve_psd(a: &DMatrix<f64>, b: &DVector<f64>) -> PsdSolution {
    if let Some(chol) = a.clone().cholesky() {
        let mut x = chol.solve(b);
        let resid = b - a * &x;
        x += chol.solve(&resid);
        if x.iter().all(|v| v.is_finite()) && !ill_conditioned(&chol) {
            return PsdSolution { x, singular: false };
        }
    }
    PsdSolution {
        x: pinv_solve_sym(a, b),
        singular: true,
    }
}

// Cholesky happily factors matrices that are singular up to rounding; a tiny
// pivot relative to the largest means the "solution" is noise.
fn ill_conditioned(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    max == 0.0 || min / max < 1e-7
}

pub(crate) fn pinv_solve_sym(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().cloned().fold(0.0, |m: f64, v| m.max(v.abs()));
    let cutoff = max * 1e-12 * n.max(1) as f64;
    let proj = eig.eigenvectors.transpose() * b;
    let mut scaled = DVector::zeros(n);
    for i in 0..n {
        let ev = eig.eigenvalues[i];
        if ev > cutoff {
            scaled[i] = proj[i] / ev;
        }
    }
    &eig.eigenvectors * scaled
}

/// Minimum-norm least-squares solution of `x beta = y` via SVD.
pub(crate) fn lstsq_min_norm(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let svd = x.clone().svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = max * 1e-12 * x.nrows().max(x.ncols()) as f64;
    svd.solve(y, eps)
        .unwrap_or_else(|_| DVector::zeros(x.ncols()))
}

/// Numerical rank of `x` using the same cutoff as [`lstsq_min_norm`].
pub(crate) fn numerical_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let eps = max * 1e-10 * x.nrows().max(x.ncols()) as f64;
    sv.iter().filter(|&&s| s > eps).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_solve_regular_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let sol = solve_psd(&a, &b);
        assert!(!sol.singular);
        assert!((&a * &sol.x - &b).amax() < 1e-14);
    }

    #[test]
    fn psd_solve_singular_gives_min_norm() {
        // rank one: [1 1; 1 1] x = [2 2] has min-norm solution [1 1]
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let sol = solve_psd(&a, &b);
        assert!(sol.singular);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_of_duplicated_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert_eq!(numerical_rank(&x), 1);
    }
}
