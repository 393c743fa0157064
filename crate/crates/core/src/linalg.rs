//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `a * x = b` for a general square matrix via LU, factoring once for
/// all right-hand-side columns.
pub(crate) fn solve_lu(a: DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let lu = a.lu();
    lu.solve(b)
        .ok_or_else(|| Error::Singular(context.to_string()))
}

/// Solves a symmetric positive definite system via Cholesky. Returns `None`
/// when the factorization fails (matrix not PD to working precision).
pub(crate) fn solve_cholesky(a: DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = a.cholesky()?;
    Some(chol.solve(b))
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn smallest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Moore-Penrose pseudoinverse of a symmetric matrix by eigendecomposition.
/// Eigenvalues below `rel_tol * lambda_max` (in magnitude) are treated as zero.
pub(crate) fn symmetric_pseudoinverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let lambda_max = eig
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .fold(0.0_f64, f64::max);
    let cutoff = rel_tol * lambda_max;
    let inv_vals: DVector<f64> = eig
        .eigenvalues
        .map(|v| if v.abs() <= cutoff { 0.0 } else { 1.0 / v });
    let scaled = eig.eigenvectors.clone() * DMatrix::from_diagonal(&inv_vals);
    scaled * eig.eigenvectors.transpose()
}

/// Index of the row maximum, ties broken by the lowest column index.
pub(crate) fn argmax_slice(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (j, v) in values.enumerate() {
        if v > best_val {
            best_val = v;
            best = j;
        }
    }
    best
}

/// Per-row argmax of a score matrix (lowest class index wins ties).
pub(crate) fn row_argmax(scores: &DMatrix<f64>) -> Vec<usize> {
    (0..scores.nrows())
        .map(|i| argmax_slice(scores.row(i).iter().cloned()))
        .collect()
}

/// Largest absolute entry of `a - b`.
pub(crate) fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Infinity norm (maximum absolute row sum).
pub(crate) fn inf_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
}

/// Gaussian Gram matrix of the row-point set (unit diagonal).
pub(crate) fn gaussian_gram(points: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let n = points.nrows();
    let denom = 2.0 * sigma * sigma;
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        gram[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let d2 = (points.row(i) - points.row(j)).norm_squared();
            let w = (-d2 / denom).exp();
            gram[(i, j)] = w;
            gram[(j, i)] = w;
        }
    }
    gram
}

/// Gaussian kernel evaluations of a query against the row-point set.
pub(crate) fn gaussian_vector(points: &DMatrix<f64>, x: &DVector<f64>, sigma: f64) -> DVector<f64> {
    let denom = 2.0 * sigma * sigma;
    DVector::from_iterator(
        points.nrows(),
        (0..points.nrows()).map(|i| {
            let d2 = (points.row(i).transpose() - x).norm_squared();
            (-d2 / denom).exp()
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pseudoinverse_recovers_inverse_on_full_rank() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let pinv = symmetric_pseudoinverse(&a, 1e-10);
        let identity = &a * &pinv;
        assert_relative_eq!(identity[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(identity[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pseudoinverse_annihilates_nullspace() {
        // Laplacian of a 2-node graph: nullspace is the constant vector.
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let pinv = symmetric_pseudoinverse(&l, 1e-10);
        let ones = DVector::from_element(2, 1.0);
        assert!((&pinv * &ones).norm() < 1e-12);
        // L+ L L+ = L+
        let back = &pinv * &l * &pinv;
        assert_relative_eq!(max_abs_diff(&back, &pinv), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        let m = DMatrix::from_row_slice(1, 3, &[0.5, 0.5, 0.1]);
        assert_eq!(row_argmax(&m), vec![0]);
    }
}
