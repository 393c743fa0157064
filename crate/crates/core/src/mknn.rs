//! Manifold k-nearest-neighbor classification: a fatigued random walk turns
//! local edges into a global similarity, weighted k-NN votes on it, and a
//! two-step reconstruction answers online queries without touching the
//! n-by-n inverse again.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, Graph, GraphConstraints, Sigma};
use crate::linalg;
use crate::propagation::PropagationResult;

/// Accumulated visit matrix `(I - alpha P)^{-1}` of the geometrically damped
/// walk; entry (i, j) is the manifold similarity between samples i and j.
#[derive(Debug, Clone)]
pub struct ManifoldSimilarity {
    matrix: DMatrix<f64>,
    alpha: f64,
}

impl ManifoldSimilarity {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }
}

/// The label-constrained graph of this method: same-class labeled pairs get
/// similarity 1, cross-class pairs 0, all other edges keep Gaussian weights.
pub fn constrained_knn_graph(data: &Dataset, k: usize, sigma: Sigma) -> Result<Graph> {
    let constraints = GraphConstraints::from_labels(data);
    build_knn_graph(data, k, sigma, Some(&constraints))
}

/// Inverts `I - alpha P` for the single-step walk `P` of `g`, i.e. sums the
/// damped walk series. The residual is verified to 1e-10, with one step of
/// iterative refinement before giving up.
pub fn fatigue_similarity(g: &Graph, alpha: f64) -> Result<ManifoldSimilarity> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie strictly in (0, 1), got {alpha}"
        )));
    }
    let n = g.n();
    let system = DMatrix::identity(n, n) - g.random_walk_matrix() * alpha;
    let identity = DMatrix::identity(n, n);
    let lu = system.clone().lu();
    let mut inverse = lu
        .solve(&identity)
        .ok_or_else(|| Error::Singular("fatigued walk system".into()))?;
    let residual = |inv: &DMatrix<f64>| linalg::inf_norm(&(&system * inv - &identity));
    if residual(&inverse) > 1e-10 {
        let correction = lu
            .solve(&(&identity - &system * &inverse))
            .ok_or_else(|| Error::Singular("fatigued walk refinement".into()))?;
        inverse += correction;
        let r = residual(&inverse);
        if r > 1e-10 {
            return Err(Error::Singular(format!(
                "iterative refinement stalled at residual {r:.3e}"
            )));
        }
    }
    // The series has nonnegative terms; solver noise may leave tiny negative
    // entries, which we zero.
    inverse.iter_mut().for_each(|v| {
        if *v < 0.0 {
            debug_assert!(*v > -1e-10);
            *v = 0.0;
        }
    });
    Ok(ManifoldSimilarity {
        matrix: inverse,
        alpha,
    })
}

/// The k labeled samples most similar to `i`, descending by similarity with
/// index tie-break.
fn top_labeled(
    sim_row: impl Fn(usize) -> f64,
    labeled: &[usize],
    k: usize,
) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = labeled.iter().map(|&j| (j, sim_row(j))).collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

fn vote(
    ranked: &[(usize, f64)],
    data: &Dataset,
) -> DVector<f64> {
    let mut scores = DVector::zeros(data.num_classes());
    for &(j, s) in ranked {
        if let Some(c) = data.label_of(j) {
            scores[c] += s;
        }
    }
    scores
}

/// Weighted k-NN over manifold similarities: each unlabeled sample sums the
/// similarities of its k most-similar labeled samples per class and takes
/// the argmax. Labeled rows keep their one-hot seeds.
pub fn mknn_classify(
    sim: &ManifoldSimilarity,
    data: &Dataset,
    k: usize,
) -> Result<PropagationResult> {
    if sim.n() != data.n() {
        return Err(Error::InvalidParameter(format!(
            "similarity is {}x{} but the dataset has {} samples",
            sim.n(),
            sim.n(),
            data.n()
        )));
    }
    data.require_labels()?;
    let labeled = data.labeled_indices();
    let k_eff = if k > labeled.len() {
        log::warn!(
            "k={k} exceeds the {} labeled samples; voting over all of them",
            labeled.len()
        );
        labeled.len()
    } else {
        k
    };
    if k_eff == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut scores = data.seed_matrix();
    for i in data.unlabeled_indices() {
        let ranked = top_labeled(|j| sim.value(i, j), &labeled, k_eff);
        let class_scores = vote(&ranked, data);
        for c in 0..data.num_classes() {
            scores[(i, c)] = class_scores[c];
        }
    }
    Ok(PropagationResult::closed_form(scores))
}

/// Simplex-constrained least squares: minimizes `|x - X_k^T z|^2` subject to
/// `z >= 0`, `sum z = 1`, where the rows of `neighbors` are the k reference
/// points. Solved by an active-set method with deterministic pivoting.
pub fn reconstruct_weights(x: &DVector<f64>, neighbors: &DMatrix<f64>) -> DVector<f64> {
    let k = neighbors.nrows();
    assert!(k >= 1, "need at least one neighbor");
    assert_eq!(neighbors.ncols(), x.len(), "neighbor dimension mismatch");
    if k == 1 {
        return DVector::from_element(1, 1.0);
    }
    // Quadratic form: f(z) = z^T Q z - 2 c^T z + const.
    let q = neighbors * neighbors.transpose();
    let c = neighbors * x;

    // Feasible start: all mass on the closest neighbor.
    let start = linalg::argmax_slice((0..k).map(|j| -(neighbors.row(j).transpose() - x).norm()));
    let mut z = DVector::zeros(k);
    z[start] = 1.0;
    let mut support: Vec<usize> = vec![start];

    let tol = 1e-10;
    for _ in 0..(100 * k + 100) {
        let target = solve_equality_subproblem(&q, &c, &support);
        let negative: Vec<usize> = support
            .iter()
            .enumerate()
            .filter(|&(pos, _)| target[pos] < -tol)
            .map(|(pos, _)| pos)
            .collect();
        if negative.is_empty() {
            for (pos, &j) in support.iter().enumerate() {
                z[j] = target[pos].max(0.0);
            }
            for j in 0..k {
                if !support.contains(&j) {
                    z[j] = 0.0;
                }
            }
            // KKT check: off-support multipliers must be nonnegative.
            let grad = &q * &z - &c; // half-gradient
            let mu = support
                .iter()
                .map(|&j| grad[j])
                .sum::<f64>()
                / support.len() as f64;
            let mut worst = f64::INFINITY;
            let mut entering = None;
            for j in 0..k {
                if support.contains(&j) {
                    continue;
                }
                let lambda = grad[j] - mu;
                if lambda < worst {
                    worst = lambda;
                    entering = Some(j);
                }
            }
            match entering {
                Some(j) if worst < -tol => {
                    support.push(j);
                    support.sort_unstable();
                }
                _ => return z,
            }
        } else {
            // Step toward the subproblem optimum until the first coordinate
            // hits zero; drop that coordinate (lowest index on ties).
            let mut best_t = f64::INFINITY;
            let mut leaving = support[negative[0]];
            for &pos in &negative {
                let j = support[pos];
                let denom = z[j] - target[pos];
                let t = if denom > 0.0 { z[j] / denom } else { 0.0 };
                if t < best_t - 1e-15 {
                    best_t = t;
                    leaving = j;
                }
            }
            let best_t = best_t.clamp(0.0, 1.0);
            for (pos, &j) in support.iter().enumerate() {
                z[j] = (z[j] + best_t * (target[pos] - z[j])).max(0.0);
            }
            z[leaving] = 0.0;
            support.retain(|&j| j != leaving);
            if support.is_empty() {
                // numerically cornered; restart from the best single point
                z.fill(0.0);
                z[start] = 1.0;
                support.push(start);
            }
        }
    }
    z
}

/// Minimizes the quadratic over the support under `sum z = 1` only, via the
/// bordered KKT system; a tiny ridge handles duplicate neighbors.
fn solve_equality_subproblem(q: &DMatrix<f64>, c: &DVector<f64>, support: &[usize]) -> DVector<f64> {
    let s = support.len();
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    let mut rhs = DVector::zeros(s + 1);
    for (r, &i) in support.iter().enumerate() {
        for (col, &j) in support.iter().enumerate() {
            kkt[(r, col)] = 2.0 * q[(i, j)];
        }
        kkt[(r, s)] = 1.0;
        kkt[(s, r)] = 1.0;
        rhs[r] = 2.0 * c[i];
    }
    rhs[s] = 1.0;
    let solved = kkt.clone().lu().solve(&rhs).unwrap_or_else(|| {
        let mut ridged = kkt;
        for r in 0..s {
            ridged[(r, r)] += 1e-12;
        }
        ridged.lu().solve(&rhs).expect("ridged KKT system is nonsingular")
    });
    solved.rows(0, s).into_owned()
}

/// Reconstructs a query's manifold similarity row from its neighbors' rows:
/// the nonnegativity-constrained least squares is separable, so the optimum
/// is the elementwise clamp `max(W_k^T z, 0)`.
pub fn online_similarity(z: &DVector<f64>, neighbor_rows: &DMatrix<f64>) -> DVector<f64> {
    assert_eq!(z.len(), neighbor_rows.nrows(), "weight/row count mismatch");
    let mut w = neighbor_rows.transpose() * z;
    w.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0;
        }
    });
    w
}

/// Classifies an out-of-sample query: reconstruct its similarity row from the
/// `k_nn` Euclidean-nearest stored samples, then run the weighted vote of
/// [`mknn_classify`] over `k_vote` labeled samples.
pub fn online_classify(
    sim: &ManifoldSimilarity,
    data: &Dataset,
    x: &DVector<f64>,
    k_nn: usize,
    k_vote: usize,
) -> Result<usize> {
    if sim.n() != data.n() {
        return Err(Error::InvalidParameter(
            "similarity and dataset sizes disagree".into(),
        ));
    }
    if x.len() != data.dim() {
        return Err(Error::InvalidParameter(format!(
            "query has dimension {} but the data has {}",
            x.len(),
            data.dim()
        )));
    }
    if k_nn == 0 || k_nn > data.n() {
        return Err(Error::InvalidParameter(format!(
            "k_nn must satisfy 1 <= k_nn <= n, got {k_nn}"
        )));
    }
    data.require_labels()?;

    let mut ranked: Vec<(usize, f64)> = (0..data.n())
        .map(|j| (j, (data.sample(j) - x).norm()))
        .collect();
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(k_nn);
    let neighbor_ids: Vec<usize> = ranked.iter().map(|&(j, _)| j).collect();

    let mut neighbors = DMatrix::zeros(k_nn, data.dim());
    let mut rows = DMatrix::zeros(k_nn, data.n());
    for (r, &j) in neighbor_ids.iter().enumerate() {
        neighbors.set_row(r, &data.features().row(j));
        rows.set_row(r, &sim.matrix().row(j));
    }
    let z = reconstruct_weights(x, &neighbors);
    let w = online_similarity(&z, &rows);

    let labeled = data.labeled_indices();
    let k_eff = k_vote.min(labeled.len()).max(1);
    let ranked = top_labeled(|j| w[j], &labeled, k_eff);
    let scores = vote(&ranked, data);
    Ok(linalg::argmax_slice(scores.iter().cloned()))
}
