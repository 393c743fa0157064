//! Deformed-Laplacian semi-supervised learning: the usual smoothness term
//! `f' L f` is paired with a degree-weighted confidence penalty
//! `f' (I - D/nu) f`, so well-connected samples may carry larger scores than
//! boundary or bridge samples. A reproducing-kernel variant yields an
//! inductive model for out-of-sample queries.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg;
use crate::model_io::{matrix_rows, KernelModelRecord};
use crate::propagation::PropagationResult;

/// Regularization weights for the deformed objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformedConfig {
    /// Weight of the global smoothness term `f' L f`.
    pub beta: f64,
    /// Weight of the local confidence penalty `f' (I - D/nu) f`.
    pub gamma: f64,
    /// Kernel-norm weight of the inductive variant.
    pub alpha_rkhs: f64,
    /// Gaussian kernel bandwidth of the inductive variant.
    pub sigma: f64,
}

impl Default for DeformedConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            gamma: 0.1,
            alpha_rkhs: 1e-6,
            sigma: 1.0,
        }
    }
}

impl DeformedConfig {
    fn validate(&self) -> Result<()> {
        if self.beta < 0.0 || self.gamma < 0.0 || !self.beta.is_finite() || !self.gamma.is_finite()
        {
            return Err(Error::InvalidParameter(
                "beta and gamma must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Penalty coefficient of one node: vanishes when the node absorbs the whole
/// volume and approaches 1 for weakly connected nodes.
pub(crate) fn confidence_weight(degree: f64, volume: f64) -> f64 {
    1.0 - degree / volume
}

/// The local confidence penalty `f' (I - D/nu) f = sum_i (1 - D_ii/nu) f_i^2`.
pub fn deformed_penalty(g: &Graph, f: &DVector<f64>) -> f64 {
    assert_eq!(f.len(), g.n(), "score vector length mismatch");
    (0..g.n())
        .map(|i| confidence_weight(g.degree(i), g.volume()) * f[i] * f[i])
        .sum()
}

/// `J + beta L + gamma (I - D/nu)` with `J` the labeled-selector diagonal.
fn system_matrix(g: &Graph, labeled: &[usize], beta: f64, gamma: f64) -> DMatrix<f64> {
    let n = g.n();
    let mut sys = if beta > 0.0 {
        g.laplacian() * beta
    } else {
        DMatrix::zeros(n, n)
    };
    for i in 0..n {
        sys[(i, i)] += gamma * confidence_weight(g.degree(i), g.volume());
    }
    for &i in labeled {
        sys[(i, i)] += 1.0;
    }
    sys
}

/// Value of the deformed objective at `f` for one class column.
pub fn deformed_objective(
    g: &Graph,
    labeled: &[usize],
    y: &DVector<f64>,
    f: &DVector<f64>,
    beta: f64,
    gamma: f64,
) -> f64 {
    let fit: f64 = labeled.iter().map(|&i| (f[i] - y[i]).powi(2)).sum();
    let smooth = (f.transpose() * g.laplacian() * f)[(0, 0)];
    fit + beta * smooth + gamma * deformed_penalty(g, f)
}

fn solve_spd_checked(
    sys: DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let not_pd = || {
        let smallest = linalg::smallest_eigenvalue(&sys);
        Error::NotPositiveDefinite {
            smallest_eigenvalue: smallest,
        }
    };
    match linalg::solve_cholesky(sys.clone(), rhs) {
        Some(solution) => {
            // A near-singular matrix can slip past the factorization; verify
            // the solve before trusting it.
            let residual = linalg::inf_norm(&(&sys * &solution - rhs));
            if residual <= 1e-6 * (1.0 + linalg::inf_norm(rhs)) {
                Ok(solution)
            } else {
                Err(not_pd())
            }
        }
        None => Err(not_pd()),
    }
}

/// Transductive closed form: per class column of the signed seeds,
/// `f* = (J + beta L + gamma (I - D/nu))^{-1} J y`. With `beta = gamma = 0`
/// the problem decouples and the minimum-norm solution (seeds on labeled,
/// zero elsewhere) is returned.
pub fn deformed_transductive(
    g: &Graph,
    data: &Dataset,
    cfg: &DeformedConfig,
) -> Result<PropagationResult> {
    cfg.validate()?;
    data.require_labels()?;
    if g.n() != data.n() {
        return Err(Error::InvalidParameter(
            "graph and dataset sizes disagree".into(),
        ));
    }
    let seeds = data.signed_seed_matrix();
    if cfg.beta == 0.0 && cfg.gamma == 0.0 {
        return Ok(PropagationResult::closed_form(seeds));
    }
    let labeled = data.labeled_indices();
    let sys = system_matrix(g, &labeled, cfg.beta, cfg.gamma);
    // J y: signed seeds already vanish on unlabeled rows.
    let scores = solve_spd_checked(sys, &seeds)?;
    Ok(PropagationResult::closed_form(scores))
}

/// Inductive kernel-expansion model fit to the deformed objective; bias-free.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformedModel {
    support_points: DMatrix<f64>,
    coefficients: DMatrix<f64>,
    sigma: f64,
}

impl DeformedModel {
    pub fn num_classes(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// Per-class scores of a query point via the kernel expansion.
    pub fn predict(&self, x: &DVector<f64>) -> DVector<f64> {
        let kappa = linalg::gaussian_vector(&self.support_points, x, self.sigma);
        self.coefficients.transpose() * kappa
    }

    pub fn predict_class(&self, x: &DVector<f64>) -> usize {
        linalg::argmax_slice(self.predict(x).iter().cloned())
    }

    /// Scores at all training points, `Omega * A`.
    pub fn in_sample_scores(&self) -> DMatrix<f64> {
        let gram = linalg::gaussian_gram(&self.support_points, self.sigma);
        gram * &self.coefficients
    }

    pub fn save_json<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        KernelModelRecord {
            support_points: matrix_rows(&self.support_points),
            coefficients: matrix_rows(&self.coefficients),
            bias: None,
            sigma: self.sigma,
            gamma: None,
        }
        .save(path)
    }

    pub fn load_json<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let record = KernelModelRecord::load(path)?;
        if record.bias.is_some() {
            return Err(Error::InvalidParameter(
                "deformed models are bias-free, but the file carries a bias".into(),
            ));
        }
        Ok(Self {
            support_points: record.support_matrix(),
            coefficients: record.coefficient_matrix(),
            sigma: record.sigma,
        })
    }
}

/// Fits the inductive variant: by the generalized representer theorem the
/// minimizer is a kernel expansion over the samples, whose coefficients
/// solve `(alpha I + (J + beta L + gamma (I - D/nu)) Omega) a = J y` per
/// class.
pub fn deformed_inductive(
    data: &Dataset,
    g: &Graph,
    cfg: &DeformedConfig,
) -> Result<DeformedModel> {
    cfg.validate()?;
    if !(cfg.alpha_rkhs > 0.0 && cfg.sigma > 0.0) {
        return Err(Error::InvalidParameter(
            "alpha_rkhs and sigma must be positive".into(),
        ));
    }
    data.require_labels()?;
    if g.n() != data.n() {
        return Err(Error::InvalidParameter(
            "graph and dataset sizes disagree".into(),
        ));
    }
    let n = data.n();
    let labeled = data.labeled_indices();
    let gram = linalg::gaussian_gram(data.features(), cfg.sigma);
    let mut sys = system_matrix(g, &labeled, cfg.beta, cfg.gamma) * &gram;
    for i in 0..n {
        sys[(i, i)] += cfg.alpha_rkhs;
    }
    let seeds = data.signed_seed_matrix();
    let coefficients = linalg::solve_lu(sys, &seeds, "deformed inductive system")?;
    Ok(DeformedModel {
        support_points: data.features().clone(),
        coefficients,
        sigma: cfg.sigma,
    })
}
