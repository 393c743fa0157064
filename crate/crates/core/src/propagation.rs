//! Transductive label propagation: the harmonic-function and
//! local-and-global-consistency baselines, plus diffusion driven by Fick's
//! first law. Each solver comes in a closed form and a fixed-point iteration
//! that must agree.

use nalgebra::DMatrix;

use crate::dataset::{Dataset, LabelMatrix};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg;

/// Distances below this are clamped when forming Fick conductances, so
/// duplicate points do not divide by zero.
const MIN_DISTANCE: f64 = 1e-12;

/// Fixed-point iteration parameters shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    /// Retention weight of propagated mass, in (0, 1). The complement
    /// `1 - alpha` re-injects the seed labels each step.
    pub alpha: f64,
    /// Stop once the max-abs update falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.99,
            tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

impl PropagationConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie strictly in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Soft scores plus hardened predictions from a propagation run.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    /// Final score matrix, one column per class.
    pub scores: LabelMatrix,
    /// Per-row argmax of `scores`, ties broken by the lowest class index.
    pub predicted: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl PropagationResult {
    pub(crate) fn closed_form(scores: LabelMatrix) -> Self {
        let predicted = linalg::row_argmax(&scores);
        Self {
            scores,
            predicted,
            iterations: 0,
            converged: true,
        }
    }

    pub(crate) fn iterated(scores: LabelMatrix, iterations: usize, converged: bool) -> Self {
        let predicted = linalg::row_argmax(&scores);
        Self {
            scores,
            predicted,
            iterations,
            converged,
        }
    }
}

/// Closed-form local-and-global consistency:
/// `F* = (1 - alpha) (I - alpha S)^{-1} Y` with `S` the normalized smoother.
pub fn lgc_closed(g: &Graph, seeds: &LabelMatrix, alpha: f64) -> Result<PropagationResult> {
    check_alpha(alpha)?;
    check_seed_shape(g, seeds)?;
    let scores = damped_resolvent_solve(&g.normalized_smoother(), seeds, alpha, "lgc")?;
    Ok(PropagationResult::closed_form(scores))
}

/// Iterative local-and-global consistency: `F <- alpha S F + (1 - alpha) Y`
/// until the max-abs update drops below `cfg.tolerance`. Exceeding
/// `max_iterations` yields `converged = false`, not an error.
pub fn lgc_iterate(g: &Graph, seeds: &LabelMatrix, cfg: &PropagationConfig) -> Result<PropagationResult> {
    check_alpha(cfg.alpha)?;
    check_seed_shape(g, seeds)?;
    let (scores, iterations, converged) =
        damped_fixed_point(&g.normalized_smoother(), seeds, cfg);
    Ok(PropagationResult::iterated(scores, iterations, converged))
}

/// Gaussian-field harmonic transduction: labeled rows are clamped to their
/// one-hot seeds and unlabeled rows absorb
/// `f_U = (I - P_UU)^{-1} P_UL f_L` under the single-step walk `P`.
pub fn gfhf(g: &Graph, data: &Dataset) -> Result<PropagationResult> {
    data.require_labels()?;
    check_graph_matches(g, data)?;
    let labeled = data.labeled_indices();
    let unlabeled = data.unlabeled_indices();
    check_unlabeled_attachment(g, &labeled, &unlabeled)?;

    let seeds = data.seed_matrix();
    let mut scores = seeds.clone();
    if !unlabeled.is_empty() {
        let p = g.random_walk_matrix();
        let u = unlabeled.len();
        let mut p_uu = DMatrix::zeros(u, u);
        for (r, &i) in unlabeled.iter().enumerate() {
            for (c, &j) in unlabeled.iter().enumerate() {
                p_uu[(r, c)] = p[(i, j)];
            }
        }
        let mut rhs = DMatrix::zeros(u, data.num_classes());
        for (r, &i) in unlabeled.iter().enumerate() {
            for &j in &labeled {
                let w = p[(i, j)];
                if w != 0.0 {
                    for c in 0..data.num_classes() {
                        rhs[(r, c)] += w * seeds[(j, c)];
                    }
                }
            }
        }
        let system = DMatrix::identity(u, u) - p_uu;
        let f_u = linalg::solve_lu(system, &rhs, "harmonic absorption system")?;
        for (r, &i) in unlabeled.iter().enumerate() {
            for c in 0..data.num_classes() {
                scores[(i, c)] = f_u[(r, c)];
            }
        }
    }
    Ok(PropagationResult::closed_form(scores))
}

/// Row-stochastic diffusion matrix derived from Fick's first law: per-edge
/// conductance `gamma * w_ij / r_ij` with `r_ij` the Euclidean distance
/// (clamped below), normalized per row. Zero off the graph's edge set; the
/// normalization makes the result independent of `gamma`.
pub fn fick_diffusion_matrix(data: &Dataset, g: &Graph, gamma: f64) -> Result<DMatrix<f64>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    check_graph_matches(g, data)?;
    let n = g.n();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut row_sum = 0.0;
        for &(j, w) in g.neighbors(i) {
            let r = data.distance(i, j).max(MIN_DISTANCE);
            let conductance = gamma * w / r;
            p[(i, j)] = conductance;
            row_sum += conductance;
        }
        for &(j, _) in g.neighbors(i) {
            p[(i, j)] /= row_sum;
        }
    }
    Ok(p)
}

/// Fick's-law assisted propagation, iterative form: per class column,
/// `f <- alpha P f + (1 - alpha) y` over the Fick diffusion matrix.
/// Multi-class problems stack the seed columns.
pub fn flap(
    g: &Graph,
    data: &Dataset,
    cfg: &PropagationConfig,
    gamma: f64,
) -> Result<PropagationResult> {
    check_alpha(cfg.alpha)?;
    data.require_labels()?;
    let p = fick_diffusion_matrix(data, g, gamma)?;
    let seeds = data.seed_matrix();
    let (scores, iterations, converged) = damped_fixed_point(&p, &seeds, cfg);
    Ok(PropagationResult::iterated(scores, iterations, converged))
}

/// Fick's-law assisted propagation, closed form:
/// `f* = (1 - alpha) (I - alpha P)^{-1} y`.
pub fn flap_closed(g: &Graph, data: &Dataset, alpha: f64, gamma: f64) -> Result<PropagationResult> {
    check_alpha(alpha)?;
    data.require_labels()?;
    let p = fick_diffusion_matrix(data, g, gamma)?;
    let seeds = data.seed_matrix();
    let scores = damped_resolvent_solve(&p, &seeds, alpha, "fick propagation")?;
    Ok(PropagationResult::closed_form(scores))
}

/// `(1 - alpha) (I - alpha M)^{-1} Y` solved as a linear system, factoring
/// once for all class columns.
pub(crate) fn damped_resolvent_solve(
    operator: &DMatrix<f64>,
    seeds: &LabelMatrix,
    alpha: f64,
    context: &str,
) -> Result<LabelMatrix> {
    let n = operator.nrows();
    let system = DMatrix::identity(n, n) - operator * alpha;
    let solved = linalg::solve_lu(system, seeds, context)?;
    Ok(solved * (1.0 - alpha))
}

/// Runs `F <- alpha M F + (1 - alpha) Y` from `F = Y`, returning the final
/// scores, the iteration count, and whether the tolerance was reached.
pub(crate) fn damped_fixed_point(
    operator: &DMatrix<f64>,
    seeds: &LabelMatrix,
    cfg: &PropagationConfig,
) -> (LabelMatrix, usize, bool) {
    let injected = seeds * (1.0 - cfg.alpha);
    let mut scores = seeds.clone();
    for iteration in 1..=cfg.max_iterations {
        let next = operator * &scores * cfg.alpha + &injected;
        let update = linalg::max_abs_diff(&next, &scores);
        scores = next;
        if update < cfg.tolerance {
            return (scores, iteration, true);
        }
    }
    (scores, cfg.max_iterations, false)
}

fn check_seed_shape(g: &Graph, seeds: &LabelMatrix) -> Result<()> {
    if seeds.nrows() != g.n() {
        return Err(Error::InvalidParameter(format!(
            "seed matrix has {} rows but the graph has {} nodes",
            seeds.nrows(),
            g.n()
        )));
    }
    Ok(())
}

fn check_graph_matches(g: &Graph, data: &Dataset) -> Result<()> {
    if g.n() != data.n() {
        return Err(Error::InvalidParameter(format!(
            "graph has {} nodes but the dataset has {} samples",
            g.n(),
            data.n()
        )));
    }
    Ok(())
}

/// Every unlabeled node must reach a labeled node through unlabeled ones;
/// otherwise the absorption system has no solution and the stranded
/// component is reported.
fn check_unlabeled_attachment(g: &Graph, labeled: &[usize], unlabeled: &[usize]) -> Result<()> {
    let is_labeled: Vec<bool> = {
        let mut v = vec![false; g.n()];
        for &i in labeled {
            v[i] = true;
        }
        v
    };
    let mut reached = vec![false; g.n()];
    let mut queue: std::collections::VecDeque<usize> = labeled.iter().copied().collect();
    for &i in labeled {
        reached[i] = true;
    }
    while let Some(u) = queue.pop_front() {
        for &(v, _) in g.neighbors(u) {
            if !reached[v] && !is_labeled[v] {
                reached[v] = true;
                queue.push_back(v);
            }
        }
    }
    let stranded: Vec<usize> = unlabeled.iter().copied().filter(|&i| !reached[i]).collect();
    if stranded.is_empty() {
        Ok(())
    } else {
        Err(Error::Disconnected(format!(
            "unlabeled component {{{}}} has no path to any labeled node",
            stranded
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn edge_graph() -> Graph {
        Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn path3_data(labels: Vec<Option<usize>>) -> (Graph, Dataset) {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let features = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let data = Dataset::new(features, labels, 2).unwrap();
        (g, data)
    }

    fn random_connected(n: usize, rng: &mut ChaCha8Rng) -> Graph {
        loop {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.4 {
                        edges.push((i, j, rng.random_range(0.2..2.0)));
                    }
                }
            }
            if let Ok(g) = Graph::from_edges(n, &edges) {
                if g.num_components() == 1 {
                    return g;
                }
            }
        }
    }

    #[test]
    fn lgc_closed_two_node_value() {
        let g = edge_graph();
        let seeds = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let result = lgc_closed(&g, &seeds, 0.5).unwrap();
        assert_relative_eq!(result.scores[(0, 0)], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(result.scores[(1, 0)], 1.0 / 3.0, epsilon = 1e-12);
        assert!(result.converged);
        assert_eq!(result.iterations, 0);
    }

    #[test]
    fn lgc_zero_seeds_give_zero_scores() {
        let g = edge_graph();
        let seeds = DMatrix::zeros(2, 2);
        let result = lgc_closed(&g, &seeds, 0.7).unwrap();
        assert_eq!(result.scores, DMatrix::zeros(2, 2));
    }

    #[test]
    fn lgc_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = random_connected(6, &mut rng);
        let mut seeds = DMatrix::zeros(6, 2);
        seeds[(0, 0)] = 1.0;
        seeds[(3, 1)] = 1.0;
        let base = lgc_closed(&g, &seeds, 0.6).unwrap();

        // Reverse the node order and compare rows.
        let perm: Vec<usize> = (0..6).rev().collect();
        let w = g.weights_dense();
        let mut wp = DMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                wp[(i, j)] = w[(perm[i], perm[j])];
            }
        }
        let gp = Graph::from_weights(&wp).unwrap();
        let mut seeds_p = DMatrix::zeros(6, 2);
        for i in 0..6 {
            for c in 0..2 {
                seeds_p[(i, c)] = seeds[(perm[i], c)];
            }
        }
        let permuted = lgc_closed(&gp, &seeds_p, 0.6).unwrap();
        for i in 0..6 {
            for c in 0..2 {
                assert_relative_eq!(
                    permuted.scores[(i, c)],
                    base.scores[(perm[i], c)],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn lgc_iterate_matches_closed_form() {
        let g = edge_graph();
        let seeds = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let cfg = PropagationConfig {
            alpha: 0.5,
            tolerance: 1e-10,
            max_iterations: 10_000,
        };
        let iterated = lgc_iterate(&g, &seeds, &cfg).unwrap();
        assert!(iterated.converged);
        assert_relative_eq!(iterated.scores[(0, 0)], 2.0 / 3.0, epsilon = 1e-9);
        assert_relative_eq!(iterated.scores[(1, 0)], 1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn lgc_iterate_degenerates_to_seeds_for_tiny_alpha() {
        let g = edge_graph();
        let seeds = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let cfg = PropagationConfig {
            alpha: 1e-9,
            tolerance: 1e-12,
            max_iterations: 100,
        };
        let result = lgc_iterate(&g, &seeds, &cfg).unwrap();
        assert!(linalg::max_abs_diff(&result.scores, &seeds) < 1e-8);
    }

    #[test]
    fn lgc_iterate_update_norm_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_connected(8, &mut rng);
        let mut seeds = DMatrix::zeros(8, 2);
        seeds[(0, 0)] = 1.0;
        seeds[(5, 1)] = 1.0;
        // Track update norms manually through the same recurrence.
        let s = g.normalized_smoother();
        let alpha = 0.8;
        let injected = &seeds * (1.0 - alpha);
        let mut f = seeds.clone();
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let next = &s * &f * alpha + &injected;
            let update = linalg::max_abs_diff(&next, &f);
            assert!(update <= last + 1e-15, "updates must contract");
            last = update;
            f = next;
        }
    }

    #[test]
    fn lgc_iterate_reports_nonconvergence() {
        let g = edge_graph();
        let seeds = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let cfg = PropagationConfig {
            alpha: 0.9,
            tolerance: 1e-14,
            max_iterations: 3,
        };
        let result = lgc_iterate(&g, &seeds, &cfg).unwrap();
        assert!(!result.converged);
        assert_eq!(result.iterations, 3);
    }

    #[test]
    fn gfhf_single_source_copies_label() {
        let g = edge_graph();
        let features = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let data = Dataset::new(features, vec![Some(0), None], 2).unwrap();
        let result = gfhf(&g, &data).unwrap();
        assert_relative_eq!(result.scores[(1, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(result.scores[(1, 1)], 0.0, epsilon = 1e-12);
        assert_eq!(result.predicted, vec![0, 0]);
    }

    #[test]
    fn gfhf_path_middle_splits_evenly() {
        let (g, data) = path3_data(vec![Some(0), None, Some(1)]);
        let result = gfhf(&g, &data).unwrap();
        assert_relative_eq!(result.scores[(1, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(result.scores[(1, 1)], 0.5, epsilon = 1e-12);
    }

    /// Monte-Carlo absorption oracle: walk from each unlabeled node until a
    /// labeled node is hit and tally the hit class.
    fn simulate_absorption(
        g: &Graph,
        data: &Dataset,
        start: usize,
        walks: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let mut hits = vec![0usize; data.num_classes()];
        for _ in 0..walks {
            let mut node = start;
            loop {
                if let Some(c) = data.label_of(node) {
                    hits[c] += 1;
                    break;
                }
                let neighbors = g.neighbors(node);
                let total: f64 = neighbors.iter().map(|&(_, w)| w).sum();
                let mut draw = rng.random::<f64>() * total;
                let mut chosen = neighbors[neighbors.len() - 1].0;
                for &(j, w) in neighbors {
                    if draw < w {
                        chosen = j;
                        break;
                    }
                    draw -= w;
                }
                node = chosen;
            }
        }
        hits.iter().map(|&h| h as f64 / walks as f64).collect()
    }

    #[test]
    fn gfhf_matches_random_walk_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = random_connected(5, &mut rng);
        let features = DMatrix::from_row_slice(5, 1, &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let data =
            Dataset::new(features, vec![Some(0), None, None, Some(1), None], 2).unwrap();
        let result = gfhf(&g, &data).unwrap();
        for &i in &[1usize, 2, 4] {
            let probs = simulate_absorption(&g, &data, i, 200_000, &mut rng);
            for c in 0..2 {
                assert!(
                    (result.scores[(i, c)] - probs[c]).abs() < 0.01,
                    "node {i} class {c}: solved {} vs simulated {}",
                    result.scores[(i, c)],
                    probs[c]
                );
            }
        }
    }

    #[test]
    fn gfhf_scores_stay_in_seed_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..5 {
            let g = random_connected(9, &mut rng);
            let features = DMatrix::from_row_slice(9, 1, &(0..9).map(|v| v as f64).collect::<Vec<_>>());
            let mut labels = vec![None; 9];
            labels[0] = Some(0);
            labels[4] = Some(1);
            let data = Dataset::new(features, labels, 2).unwrap();
            let result = gfhf(&g, &data).unwrap();
            for i in 0..9 {
                let mut row_sum = 0.0;
                for c in 0..2 {
                    let v = result.scores[(i, c)];
                    assert!((-1e-10..=1.0 + 1e-10).contains(&v));
                    row_sum += v;
                }
                assert_relative_eq!(row_sum, 1.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn gfhf_stranded_component_errors() {
        let g = Graph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let features = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let data = Dataset::new(features, vec![Some(0), None, None, None], 2).unwrap();
        let err = gfhf(&g, &data).unwrap_err();
        match err {
            Error::Disconnected(msg) => {
                assert!(msg.contains('2') && msg.contains('3'), "message was {msg}")
            }
            other => panic!("expected Disconnected, got {other}"),
        }
    }

    #[test]
    fn fick_matrix_two_nodes_is_swap() {
        let g = edge_graph();
        let features = DMatrix::from_row_slice(2, 1, &[0.0, 3.0]);
        let data = Dataset::new(features, vec![Some(0), None], 2).unwrap();
        for gamma in [0.1, 1.0, 250.0] {
            let p = fick_diffusion_matrix(&data, &g, gamma).unwrap();
            assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        }
    }

    #[test]
    fn fick_matrix_weights_by_inverse_distance() {
        let (g, _) = path3_data(vec![Some(0), None, Some(1)]);
        // Distances 1 and 2 from the middle node, equal edge weights.
        let features = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        let data = Dataset::new(features, vec![Some(0), None, Some(1)], 2).unwrap();
        let p = fick_diffusion_matrix(&data, &g, 1.0).unwrap();
        assert_relative_eq!(p[(1, 0)], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(p[(1, 2)], 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(p[(1, 1)], 0.0);
    }

    #[test]
    fn flap_two_node_fixpoint() {
        let g = edge_graph();
        let features = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let data = Dataset::new(features, vec![Some(0), None], 2).unwrap();
        let cfg = PropagationConfig {
            alpha: 0.5,
            tolerance: 1e-12,
            max_iterations: 10_000,
        };
        let result = flap(&g, &data, &cfg, 1.0).unwrap();
        assert_relative_eq!(result.scores[(0, 0)], 2.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(result.scores[(1, 0)], 1.0 / 3.0, epsilon = 1e-10);

        let closed = flap_closed(&g, &data, 0.5, 1.0).unwrap();
        assert!(linalg::max_abs_diff(&closed.scores, &result.scores) < 1e-10);
    }

    #[test]
    fn flap_closed_nonnegative_when_all_labeled_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let g = random_connected(7, &mut rng);
        let features = DMatrix::from_row_slice(7, 1, &(0..7).map(|v| v as f64).collect::<Vec<_>>());
        let data = Dataset::new(features, vec![Some(0); 7], 2).unwrap();
        let result = flap_closed(&g, &data, 0.8, 1.0).unwrap();
        for i in 0..7 {
            assert!(result.scores[(i, 0)] > 0.0);
        }
    }

    #[test]
    fn argmax_is_invariant_to_common_seed_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let g = random_connected(10, &mut rng);
        let mut seeds = DMatrix::zeros(10, 3);
        seeds[(0, 0)] = 1.0;
        seeds[(4, 1)] = 1.0;
        seeds[(7, 2)] = 1.0;
        let base = lgc_closed(&g, &seeds, 0.9).unwrap();
        let scaled = lgc_closed(&g, &(&seeds * 17.5), 0.9).unwrap();
        assert_eq!(base.predicted, scaled.predicted);
    }
}
