//! Similarity graphs over feature data and the derived matrices every
//! propagation algorithm consumes: Laplacian, normalized smoother,
//! single-step random walk, and commute times.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

/// Relative eigenvalue cutoff when pseudoinverting the Laplacian.
const PINV_REL_TOL: f64 = 1e-10;

/// Bandwidth of the Gaussian edge kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    /// Mean distance from each point to its k-th nearest neighbor.
    Auto,
    Fixed(f64),
}

/// Pairwise supervision folded into graph construction: same-class pairs are
/// forced to maximum similarity, cross-class pairs are disconnected.
#[derive(Debug, Clone, Default)]
pub struct GraphConstraints {
    pub must_link: Vec<(usize, usize)>,
    pub cannot_link: Vec<(usize, usize)>,
}

impl GraphConstraints {
    /// Derives the full constraint set from a dataset's revealed labels:
    /// every labeled same-class pair must link, every labeled cross-class
    /// pair cannot link.
    pub fn from_labels(data: &Dataset) -> Self {
        let labeled = data.labeled_indices();
        let mut must_link = Vec::new();
        let mut cannot_link = Vec::new();
        for (a, &i) in labeled.iter().enumerate() {
            for &j in &labeled[a + 1..] {
                if data.label_of(i) == data.label_of(j) {
                    must_link.push((i, j));
                } else {
                    cannot_link.push((i, j));
                }
            }
        }
        Self {
            must_link,
            cannot_link,
        }
    }

    fn validate(&self, data: &Dataset) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (kind, pairs) in [("must_link", &self.must_link), ("cannot_link", &self.cannot_link)]
        {
            for &(i, j) in pairs.iter() {
                if i == j || i >= data.n() || j >= data.n() {
                    return Err(Error::InvalidParameter(format!(
                        "{kind} pair ({i}, {j}) out of range"
                    )));
                }
                let (li, lj) = (data.label_of(i), data.label_of(j));
                if li.is_none() || lj.is_none() {
                    return Err(Error::InvalidParameter(format!(
                        "{kind} pair ({i}, {j}) involves an unlabeled sample"
                    )));
                }
                if kind == "must_link" && li != lj {
                    return Err(Error::InvalidParameter(format!(
                        "must_link pair ({i}, {j}) spans two classes"
                    )));
                }
                if kind == "cannot_link" && li == lj {
                    return Err(Error::InvalidParameter(format!(
                        "cannot_link pair ({i}, {j}) is within one class"
                    )));
                }
                if !seen.insert(ordered(i, j)) {
                    return Err(Error::InvalidParameter(format!(
                        "pair ({i}, {j}) appears in both constraint sets or twice"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// An immutable, symmetric, nonnegative-weight similarity graph with zero
/// diagonal. Isolated nodes are rejected at construction, so every node has
/// positive degree.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    adj: Vec<Vec<(usize, f64)>>,
    degrees: DVector<f64>,
    volume: f64,
    component: Vec<usize>,
    num_components: usize,
    laplacian_pinv: OnceLock<DMatrix<f64>>,
}

impl Graph {
    /// Builds a graph from an explicit edge list `(i, j, w)`. Edges are
    /// mirrored; duplicate pairs keep the last weight given.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop on node {i}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) has invalid weight {w}"
                )));
            }
            if w > 0.0 {
                map.insert(ordered(i, j), w);
            } else {
                map.remove(&ordered(i, j));
            }
        }
        Self::from_edge_map(n, map)
    }

    /// Builds a graph from a dense symmetric weight matrix. Symmetry must be
    /// exact (`w[(i,j)] == w[(j,i)]` bitwise) and the diagonal zero.
    pub fn from_weights(w: &DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        if w.ncols() != n {
            return Err(Error::InvalidParameter("weight matrix must be square".into()));
        }
        let mut map = BTreeMap::new();
        for i in 0..n {
            if w[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "nonzero diagonal at node {i}"
                )));
            }
            for j in (i + 1)..n {
                let wij = w[(i, j)];
                if wij != w[(j, i)] {
                    return Err(Error::InvalidParameter(format!(
                        "weight matrix is not symmetric at ({i}, {j})"
                    )));
                }
                if !(wij.is_finite() && wij >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "invalid weight {wij} at ({i}, {j})"
                    )));
                }
                if wij > 0.0 {
                    map.insert((i, j), wij);
                }
            }
        }
        Self::from_edge_map(n, map)
    }

    fn from_edge_map(n: usize, map: BTreeMap<(usize, usize), f64>) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(i, j), &w) in &map {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
        }
        let degrees = DVector::from_iterator(
            n,
            adj.iter().map(|list| list.iter().map(|&(_, w)| w).sum::<f64>()),
        );
        if let Some(node) = (0..n).find(|&i| degrees[i] <= 0.0) {
            return Err(Error::IsolatedNode(node));
        }
        let volume = degrees.sum();
        let (component, num_components) = components(n, &adj);
        Ok(Self {
            n,
            adj,
            degrees,
            volume,
            component,
            num_components,
            laplacian_pinv: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    /// Graph volume: the sum of all node degrees.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Neighbors of `i` with edge weights, ascending by node index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    /// Edge weight between `i` and `j` (0 when no edge).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.adj[i].binary_search_by_key(&j, |&(k, _)| k) {
            Ok(pos) => self.adj[i][pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn component_of(&self, i: usize) -> usize {
        self.component[i]
    }

    pub fn same_component(&self, i: usize, j: usize) -> bool {
        self.component[i] == self.component[j]
    }

    /// Dense copy of the weight matrix.
    pub fn weights_dense(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for (i, list) in self.adj.iter().enumerate() {
            for &(j, wij) in list {
                w[(i, j)] = wij;
            }
        }
        w
    }

    /// Graph Laplacian `L = D - W`: symmetric positive semidefinite with zero
    /// row sums.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.weights_dense();
        for i in 0..self.n {
            l[(i, i)] = self.degrees[i];
        }
        l
    }

    /// Symmetrically normalized smoother `S = D^{-1/2} W D^{-1/2}`, the
    /// propagation operator of local-and-global-consistency. Its spectrum
    /// lies in `[-1, 1]`.
    pub fn normalized_smoother(&self) -> DMatrix<f64> {
        let inv_sqrt: Vec<f64> = (0..self.n).map(|i| 1.0 / self.degrees[i].sqrt()).collect();
        let mut s = DMatrix::zeros(self.n, self.n);
        for (i, list) in self.adj.iter().enumerate() {
            for &(j, wij) in list {
                s[(i, j)] = wij * inv_sqrt[i] * inv_sqrt[j];
            }
        }
        s
    }

    /// Row-stochastic single-step random-walk matrix `P = D^{-1} W`.
    pub fn random_walk_matrix(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n, self.n);
        for (i, list) in self.adj.iter().enumerate() {
            let inv_deg = 1.0 / self.degrees[i];
            for &(j, wij) in list {
                p[(i, j)] = wij * inv_deg;
            }
        }
        p
    }

    fn laplacian_pinv(&self) -> &DMatrix<f64> {
        self.laplacian_pinv
            .get_or_init(|| linalg::symmetric_pseudoinverse(&self.laplacian(), PINV_REL_TOL))
    }

    /// Expected number of steps for the natural random walk to travel from
    /// `i` to `j` and back, computed as `volume * (L+_ii + L+_jj - 2 L+_ij)`
    /// from the Laplacian pseudoinverse.
    pub fn commute_time(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.n || j >= self.n {
            return Err(Error::InvalidParameter(format!(
                "node pair ({i}, {j}) out of range"
            )));
        }
        if i == j {
            return Ok(0.0);
        }
        if !self.same_component(i, j) {
            return Err(Error::Disconnected(format!(
                "nodes {i} and {j} lie in different components; commute time is infinite"
            )));
        }
        let lp = self.laplacian_pinv();
        Ok(self.volume * (lp[(i, i)] + lp[(j, j)] - 2.0 * lp[(i, j)]))
    }

    /// Mean commute time from `i` to the nodes of `set`.
    pub fn commute_time_to_set(&self, i: usize, set: &[usize]) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::InvalidParameter(
                "commute_time_to_set needs a nonempty target set".into(),
            ));
        }
        let mut total = 0.0;
        for &b in set {
            total += self.commute_time(i, b)?;
        }
        Ok(total / set.len() as f64)
    }
}

fn components(n: usize, adj: &[Vec<(usize, f64)>]) -> (Vec<usize>, usize) {
    let mut component = vec![usize::MAX; n];
    let mut count = 0;
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        component[start] = count;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if component[v] == usize::MAX {
                    component[v] = count;
                    queue.push_back(v);
                }
            }
        }
        count += 1;
    }
    (component, count)
}

/// Mean distance from each point to its k-th nearest neighbor; the default
/// local-scale bandwidth. Falls back to 1.0 when all distances vanish.
pub fn auto_sigma(data: &Dataset, k: usize) -> Result<f64> {
    let rows = knn_rows(data, k)?;
    let mean: f64 =
        rows.iter().map(|r| r.last().map_or(0.0, |&(_, d)| d)).sum::<f64>() / data.n() as f64;
    Ok(if mean > 0.0 { mean } else { 1.0 })
}

fn resolve_sigma(data: &Dataset, k: usize, sigma: Sigma) -> Result<f64> {
    match sigma {
        Sigma::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
        Sigma::Fixed(s) => Err(Error::InvalidParameter(format!(
            "sigma must be positive and finite, got {s}"
        ))),
        Sigma::Auto => auto_sigma(data, k),
    }
}

/// Per-node list of the k nearest other points as `(index, distance)`,
/// ascending by distance with index tie-break.
fn knn_rows(data: &Dataset, k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = data.n();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k must satisfy 1 <= k < n, got k={k} with n={n}"
        )));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut dists: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, data.distance(i, j)))
                .collect();
            dists.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            dists.truncate(k);
            dists
        })
        .collect())
}

/// Edge map of the union-symmetrized k-NN graph with Gaussian weights,
/// optionally rewired by constraints. Shared by [`build_knn_graph`] and the
/// constraint-tolerant posterior estimator, which must allow isolated nodes.
pub(crate) type EdgeMap = BTreeMap<(usize, usize), f64>;

pub(crate) fn knn_edge_map(
    data: &Dataset,
    k: usize,
    sigma: Sigma,
    constraints: Option<&GraphConstraints>,
) -> Result<(EdgeMap, f64)> {
    let rows = knn_rows(data, k)?;
    let sigma = resolve_sigma(data, k, sigma)?;
    let denom = 2.0 * sigma * sigma;
    let mut map = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        for &(j, d) in row {
            map.insert(ordered(i, j), (-d * d / denom).exp());
        }
    }
    if let Some(cons) = constraints {
        cons.validate(data)?;
        // Applied after k-NN thresholding: must-link edges are added even
        // between non-neighbors so constraints are never silently dropped.
        for &(i, j) in &cons.must_link {
            map.insert(ordered(i, j), 1.0);
        }
        for &(i, j) in &cons.cannot_link {
            map.remove(&ordered(i, j));
        }
    }
    Ok((map, sigma))
}

/// Builds the union-symmetrized k-nearest-neighbor graph: an edge is present
/// iff either endpoint ranks the other among its k closest points, weighted
/// `exp(-d^2 / 2 sigma^2)`. Must-link pairs are forced to weight 1 and
/// cannot-link pairs removed. A node left with no edges is a construction
/// error naming the node.
pub fn build_knn_graph(
    data: &Dataset,
    k: usize,
    sigma: Sigma,
    constraints: Option<&GraphConstraints>,
) -> Result<Graph> {
    let (map, _) = knn_edge_map(data, k, sigma, constraints)?;
    Graph::from_edge_map(data.n(), map)
}
