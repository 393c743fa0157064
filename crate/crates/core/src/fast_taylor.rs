//! Near-linear label propagation for the Gaussian kernel: factor the kernel,
//! expand the inner-product term to first order, and invert the resulting
//! diagonal-plus-low-rank operator with the Woodbury identity. No n-by-n
//! matrix is ever materialized; the cost is O(n d^2) plus an O(d^3) solve.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Dataset, LabelMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::propagation::PropagationResult;

/// Low-rank factorization of the Gaussian kernel
/// `exp(-|xi - xj|^2 / 2 sigma^2) = a_i a_j exp(xi . xj / sigma^2)` with the
/// last factor linearized, so the approximate kernel is `G M^T`.
#[derive(Debug, Clone)]
pub struct KernelFactorization {
    /// Per-sample magnitudes `a_i = exp(-|x_i|^2 / 2 sigma^2)`, in (0, 1].
    pub a: DVector<f64>,
    /// n x (d+1) left factor, row i equal to `a_i [1, x_i^T / sigma]`.
    pub g: DMatrix<f64>,
    /// n x (d+1) right factor; equals `g` by default, or `K^{-1} g` after
    /// [`KernelFactorization::with_random_walk_normalization`].
    pub m: DMatrix<f64>,
    /// Diagonal of approximate degrees `K = diag(G (M^T 1))`.
    pub k: DVector<f64>,
    sigma: f64,
}

impl KernelFactorization {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Entry (i, j) of the approximate kernel `G M^T`.
    pub fn approx_weight(&self, i: usize, j: usize) -> f64 {
        self.g.row(i).dot(&self.m.row(j))
    }

    /// Dense copy of the approximate kernel; testing helper, O(n^2).
    pub fn approx_kernel_dense(&self) -> DMatrix<f64> {
        &self.g * self.m.transpose()
    }

    /// Column-normalizes the right factor: `M = K^{-1} G`, the random-walk
    /// variant of the split.
    pub fn with_random_walk_normalization(mut self) -> Self {
        let n = self.g.nrows();
        for i in 0..n {
            let scale = 1.0 / self.k[i];
            for c in 0..self.g.ncols() {
                self.m[(i, c)] = self.g[(i, c)] * scale;
            }
        }
        self.k = degree_vector(&self.g, &self.m);
        self
    }
}

fn degree_vector(g: &DMatrix<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    // K = diag(G (M^T 1)); M^T 1 is the column-sum vector of M.
    g * m.row_sum_tr()
}

/// Subtracts the per-column mean from the features.
pub(crate) fn center_features(data: &Dataset) -> Result<Dataset> {
    let n = data.n();
    let mut features = data.features().clone();
    for c in 0..features.ncols() {
        let mean = features.column(c).sum() / n as f64;
        for i in 0..n {
            features[(i, c)] -= mean;
        }
    }
    Dataset::new(features, data.labels().to_vec(), data.num_classes())
}

/// Factors the Gaussian kernel on `data` with bandwidth `sigma`, linearizing
/// `exp(xi . xj / sigma^2)` to `1 + xi . xj / sigma^2`. Errors when the
/// linearization drives an approximate degree nonpositive.
pub fn factorize_kernel(data: &Dataset, sigma: f64) -> Result<KernelFactorization> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let n = data.n();
    let d = data.dim();
    let x = data.features();
    let mut a = DVector::zeros(n);
    let mut g = DMatrix::zeros(n, d + 1);
    let two_sigma_sq = 2.0 * sigma * sigma;
    for i in 0..n {
        let norm_sq = x.row(i).norm_squared();
        let ai = (-norm_sq / two_sigma_sq).exp();
        a[i] = ai;
        g[(i, 0)] = ai;
        for c in 0..d {
            g[(i, c + 1)] = ai * x[(i, c)] / sigma;
        }
    }
    let m = g.clone();
    let k = degree_vector(&g, &m);
    if let Some(i) = (0..n).find(|&i| k[i] <= 0.0) {
        return Err(Error::ApproximationBreakdown(format!(
            "approximate degree of sample {i} is {:.3e}; increase sigma",
            k[i]
        )));
    }
    Ok(KernelFactorization { a, g, m, k, sigma })
}

/// Applies `(A A^T + D)^{-1}` to `B` through the Woodbury identity
/// `D^{-1}B - D^{-1}A (I + A^T D^{-1} A)^{-1} A^T D^{-1} B`. This is an exact
/// rewrite, not an approximation; only an r x r system is inverted.
pub fn woodbury_apply(
    diag: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    woodbury_solve(diag, a, b, false)
}

/// Shared kernel of [`woodbury_apply`]: solves `(D + s A A^T) X = B` with
/// `s = +1` (`subtract = false`) or `s = -1` (`subtract = true`).
fn woodbury_solve(
    diag: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    subtract: bool,
) -> Result<DMatrix<f64>> {
    let n = diag.len();
    if a.nrows() != n || b.nrows() != n {
        return Err(Error::InvalidParameter(format!(
            "woodbury shapes disagree: diag {n}, A {}x{}, B {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if diag.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "woodbury diagonal entries must be nonzero and finite".into(),
        ));
    }
    let sign = if subtract { -1.0 } else { 1.0 };
    let scale_rows = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for i in 0..n {
            let inv = 1.0 / diag[i];
            for c in 0..out.ncols() {
                out[(i, c)] *= inv;
            }
        }
        out
    };
    let dinv_b = scale_rows(b);
    if a.ncols() == 0 {
        return Ok(dinv_b);
    }
    let dinv_a = scale_rows(a);
    let r = a.ncols();
    let inner = DMatrix::identity(r, r) + a.transpose() * &dinv_a * sign;
    let rhs = a.transpose() * &dinv_b;
    let solved = linalg::solve_lu(inner, &rhs, "woodbury inner system")?;
    Ok(&dinv_b - dinv_a * solved * sign)
}

/// Label propagation with the factored kernel: semantics identical to
/// [`crate::propagation::lgc_closed`] run on the dense graph whose weights
/// are the approximate kernel `G G^T` with the diagonal removed, i.e.
/// `F = (1 - alpha)(I - alpha K^{-1/2} W~ K^{-1/2})^{-1} Y`,
/// but evaluated through the Woodbury split without forming `W~`.
///
/// The Gaussian kernel is translation invariant, so the features are
/// centered first; this expands the kernel around the data mean, where the
/// linearization is tightest.
pub fn fast_lgc(
    data: &Dataset,
    seeds: &LabelMatrix,
    alpha: f64,
    sigma: f64,
) -> Result<PropagationResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie strictly in (0, 1), got {alpha}"
        )));
    }
    if seeds.nrows() != data.n() {
        return Err(Error::InvalidParameter(format!(
            "seed matrix has {} rows but the dataset has {} samples",
            seeds.nrows(),
            data.n()
        )));
    }
    let data = &center_features(data)?;
    let fac = factorize_kernel(data, sigma)?;
    let n = data.n();

    // Self-weights and zero-diagonal degrees of the approximate kernel.
    let self_weight: DVector<f64> = DVector::from_iterator(n, (0..n).map(|i| fac.g.row(i).norm_squared()));
    let mut degrees = DVector::zeros(n);
    for i in 0..n {
        degrees[i] = fac.k[i] - self_weight[i];
        if degrees[i] <= 0.0 {
            return Err(Error::ApproximationBreakdown(format!(
                "off-diagonal approximate degree of sample {i} is {:.3e}; increase sigma",
                degrees[i]
            )));
        }
    }

    // H = D^{-1/2} G so the smoother is H H^T minus its own diagonal;
    // the diagonal correction folds into the Woodbury diagonal term.
    let mut h = fac.g.clone();
    for i in 0..n {
        let scale = 1.0 / degrees[i].sqrt();
        for c in 0..h.ncols() {
            h[(i, c)] *= scale;
        }
    }
    let woodbury_diag =
        DVector::from_iterator(n, (0..n).map(|i| 1.0 + alpha * self_weight[i] / degrees[i]));
    let scaled_h = &h * alpha.sqrt();
    let solved = woodbury_solve(&woodbury_diag, &scaled_h, seeds, true).map_err(|e| match e {
        Error::Singular(_) => Error::ApproximationBreakdown(
            "inner Woodbury system is singular; increase sigma".into(),
        ),
        other => other,
    })?;
    Ok(PropagationResult::closed_form(solved * (1.0 - alpha)))
}
