//! Posterior distribution learning: estimate per-sample class posteriors by
//! constrained propagation on the learning set, then fit an inductive
//! vector-valued kernel regressor to those estimates with a robust,
//! error-weighted least-squares system.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Dataset, LabelMatrix};
use crate::error::{Error, Result};
use crate::graph::{knn_edge_map, GraphConstraints, Sigma};
use crate::linalg;
use crate::model_io::{matrix_rows, KernelModelRecord};

/// Hampel thresholds of the robust reweighting, in units of the robust scale.
const HAMPEL_C1: f64 = 2.5;
const HAMPEL_C2: f64 = 3.0;
/// Weight assigned beyond the outer threshold.
const OUTLIER_WEIGHT: f64 = 1e-4;

/// The diagonal local-propagation matrix of the posterior estimator. The
/// uniform variant reproduces plain constrained propagation with a single
/// retention coefficient.
#[derive(Debug, Clone)]
pub enum LocalPropagation {
    Uniform(f64),
    /// Per-sample retention coefficients, each in (0, 1).
    Diagonal(DVector<f64>),
}

impl LocalPropagation {
    fn as_vector(&self, n: usize) -> Result<DVector<f64>> {
        let v = match self {
            LocalPropagation::Uniform(alpha) => DVector::from_element(n, *alpha),
            LocalPropagation::Diagonal(d) => {
                if d.len() != n {
                    return Err(Error::InvalidParameter(format!(
                        "local propagation diagonal has {} entries for {n} samples",
                        d.len()
                    )));
                }
                d.clone()
            }
        };
        if v.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::InvalidParameter(
                "local propagation coefficients must lie strictly in (0, 1)".into(),
            ));
        }
        Ok(v)
    }
}

/// Row-stochastic per-sample class posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEstimate {
    posteriors: LabelMatrix,
}

impl PosteriorEstimate {
    pub fn posteriors(&self) -> &LabelMatrix {
        &self.posteriors
    }

    pub fn into_inner(self) -> LabelMatrix {
        self.posteriors
    }

    pub fn predicted(&self) -> Vec<usize> {
        linalg::row_argmax(&self.posteriors)
    }
}

/// Estimates posteriors by propagation on the constraint-augmented graph:
/// labeled same-class pairs are wired to weight 1, cross-class pairs cut,
/// and `F <- Lambda S F + (I - Lambda) Y` is solved in closed form. Negative
/// scores are clamped and rows normalized; a row with no mass becomes
/// uniform. Nodes isolated by the constraint cuts simply keep their injected
/// seeds (their smoother row is zero).
pub fn estimate_posteriors(
    data: &Dataset,
    k: usize,
    sigma: Sigma,
    local: &LocalPropagation,
) -> Result<PosteriorEstimate> {
    data.require_all_classes()?;
    let n = data.n();
    let lambda = local.as_vector(n)?;
    let constraints = GraphConstraints::from_labels(data);
    let (edges, _) = knn_edge_map(data, k, sigma, Some(&constraints))?;

    let mut weights = DMatrix::zeros(n, n);
    for (&(i, j), &w) in &edges {
        weights[(i, j)] = w;
        weights[(j, i)] = w;
    }
    let degrees: Vec<f64> = (0..n).map(|i| weights.row(i).sum()).collect();
    let mut smoother = DMatrix::zeros(n, n);
    for i in 0..n {
        if degrees[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if weights[(i, j)] != 0.0 && degrees[j] != 0.0 {
                smoother[(i, j)] = weights[(i, j)] / (degrees[i] * degrees[j]).sqrt();
            }
        }
    }

    let seeds = data.seed_matrix();
    let mut system = -DMatrix::from_diagonal(&lambda) * smoother;
    let mut injected = seeds;
    for i in 0..n {
        system[(i, i)] += 1.0;
        for c in 0..data.num_classes() {
            injected[(i, c)] *= 1.0 - lambda[i];
        }
    }
    let scores = linalg::solve_lu(system, &injected, "posterior propagation")?;
    let posteriors = normalize_rows(scores);

    for &i in &data.labeled_indices() {
        let predicted = linalg::argmax_slice(posteriors.row(i).iter().cloned());
        if Some(predicted) != data.label_of(i) {
            log::warn!(
                "posterior of labeled sample {i} peaks at class {predicted}, not its label"
            );
        }
    }
    Ok(PosteriorEstimate { posteriors })
}

/// Clamps negatives to zero and renormalizes each row to sum 1; rows with no
/// remaining mass become uniform.
fn normalize_rows(mut scores: DMatrix<f64>) -> DMatrix<f64> {
    let c = scores.ncols();
    for mut row in scores.row_iter_mut() {
        let mut sum = 0.0;
        for v in row.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
            sum += *v;
        }
        if sum > 0.0 {
            for v in row.iter_mut() {
                *v /= sum;
            }
        } else {
            for v in row.iter_mut() {
                *v = 1.0 / c as f64;
            }
        }
    }
    scores
}

/// Inductive posterior regressor: kernel expansion plus bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct PdlModel {
    support_points: DMatrix<f64>,
    coefficients: DMatrix<f64>,
    bias: DVector<f64>,
    sigma: f64,
    gamma: f64,
}

impl PdlModel {
    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Unclamped model output `A^T kappa(x) + b`.
    pub fn raw_output(&self, x: &DVector<f64>) -> DVector<f64> {
        let kappa = linalg::gaussian_vector(&self.support_points, x, self.sigma);
        self.coefficients.transpose() * kappa + &self.bias
    }

    /// Posterior prediction: raw output clamped to [0, 1] and renormalized
    /// to sum 1 (uniform when everything clamps away).
    pub fn predict_posterior(&self, x: &DVector<f64>) -> DVector<f64> {
        let raw = self.raw_output(x);
        let c = raw.len();
        let mut clamped = raw.map(|v| v.clamp(0.0, 1.0));
        let sum = clamped.sum();
        if sum > 0.0 {
            clamped /= sum;
        } else {
            clamped.fill(1.0 / c as f64);
        }
        clamped
    }

    pub fn predict_class(&self, x: &DVector<f64>) -> usize {
        linalg::argmax_slice(self.predict_posterior(x).iter().cloned())
    }

    /// Raw in-sample outputs at all support points, `Omega A + 1 b^T`.
    pub fn in_sample_raw(&self) -> DMatrix<f64> {
        let gram = linalg::gaussian_gram(&self.support_points, self.sigma);
        let mut out = gram * &self.coefficients;
        for mut row in out.row_iter_mut() {
            row += self.bias.transpose();
        }
        out
    }

    pub fn save_json<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        KernelModelRecord {
            support_points: matrix_rows(&self.support_points),
            coefficients: matrix_rows(&self.coefficients),
            bias: Some(self.bias.iter().cloned().collect()),
            sigma: self.sigma,
            gamma: Some(self.gamma),
        }
        .save(path)
    }

    pub fn load_json<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let record = KernelModelRecord::load(path)?;
        let bias = record
            .bias_vector()
            .ok_or_else(|| Error::InvalidParameter("posterior models carry a bias".into()))?;
        let gamma = record.gamma.ok_or_else(|| {
            Error::InvalidParameter("posterior models record their fit gamma".into())
        })?;
        Ok(Self {
            support_points: record.support_matrix(),
            coefficients: record.coefficient_matrix(),
            bias,
            sigma: record.sigma,
            gamma,
        })
    }
}

/// Solves the weighted vector-output least-squares kernel system: per class,
/// `[[Omega + V^{-1}/gamma, 1], [1^T, 0]] [a_c; b_c] = [targets_c; 0]` with
/// `Omega` the Gaussian Gram matrix and `V = diag(weights)`. The matrix is
/// factored once for all classes.
pub fn fit_posterior_regressor(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    sigma: f64,
    gamma: f64,
    weights: &DVector<f64>,
) -> Result<PdlModel> {
    let m = features.nrows();
    if m == 0 || targets.nrows() != m || weights.len() != m {
        return Err(Error::InvalidParameter(format!(
            "fit shapes disagree: {m} points, {} target rows, {} weights",
            targets.nrows(),
            weights.len()
        )));
    }
    if !(sigma > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidParameter(
            "sigma and gamma must be positive".into(),
        ));
    }
    if weights.iter().any(|&v| v <= 0.0 || v.is_nan()) {
        return Err(Error::InvalidParameter(
            "error weights must be positive".into(),
        ));
    }
    let c = targets.ncols();
    let mut system = DMatrix::zeros(m + 1, m + 1);
    let gram = linalg::gaussian_gram(features, sigma);
    system.view_mut((0, 0), (m, m)).copy_from(&gram);
    for j in 0..m {
        system[(j, j)] += 1.0 / (gamma * weights[j]);
        system[(j, m)] = 1.0;
        system[(m, j)] = 1.0;
    }
    let mut rhs = DMatrix::zeros(m + 1, c);
    rhs.view_mut((0, 0), (m, c)).copy_from(targets);
    let solution = linalg::solve_lu(system, &rhs, "posterior fit (try a smaller gamma)")?;
    Ok(PdlModel {
        support_points: features.clone(),
        coefficients: solution.view((0, 0), (m, c)).into_owned(),
        bias: solution.row(m).transpose(),
        sigma,
        gamma,
    })
}

/// Hampel-style robust error weights from residual norms: 1 inside the inner
/// threshold, linearly decaying between the thresholds, and a small floor
/// beyond. The scale is `1.483 * MAD`; a zero MAD (all residuals equal)
/// leaves every weight at 1.
pub fn robust_weights(residual_norms: &[f64]) -> Vec<f64> {
    let scale = 1.483 * median_absolute_deviation(residual_norms);
    if scale == 0.0 {
        return vec![1.0; residual_norms.len()];
    }
    residual_norms
        .iter()
        .map(|&r| {
            let z = r / scale;
            if z <= HAMPEL_C1 {
                1.0
            } else if z <= HAMPEL_C2 {
                (HAMPEL_C2 - z) / (HAMPEL_C2 - HAMPEL_C1)
            } else {
                OUTLIER_WEIGHT
            }
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn median_absolute_deviation(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    let med = median(&mut v);
    let mut deviations: Vec<f64> = values.iter().map(|&r| (r - med).abs()).collect();
    median(&mut deviations)
}

/// End-to-end posterior distribution learning: estimate posteriors on the
/// constrained graph, fit with unit weights, reweight once from the residual
/// norms, and refit. The graph bandwidth is reused for the fit kernel.
pub fn train_pdl(
    data: &Dataset,
    k: usize,
    sigma: Sigma,
    alpha: f64,
    gamma: f64,
) -> Result<PdlModel> {
    let estimate = estimate_posteriors(data, k, sigma, &LocalPropagation::Uniform(alpha))?;
    let kernel_sigma = match sigma {
        Sigma::Fixed(s) => s,
        Sigma::Auto => crate::graph::auto_sigma(data, k)?,
    };
    let targets = estimate.posteriors();
    let unit = DVector::from_element(data.n(), 1.0);
    let first = fit_posterior_regressor(data.features(), targets, kernel_sigma, gamma, &unit)?;
    let residuals = &first.in_sample_raw() - targets;
    let norms: Vec<f64> = (0..data.n()).map(|j| residuals.row(j).norm()).collect();
    let weights = DVector::from_vec(robust_weights(&norms));
    fit_posterior_regressor(data.features(), targets, kernel_sigma, gamma, &weights)
}
