#![allow(dead_code)] // each integration target uses a subset

//! Shared oracles for the integration suites. Everything here is
//! deliberately independent of the library's solver paths: hitting times
//! come from first-step linear systems, inverses from partial sums, and
//! datasets from seeded draws.

use gssl::{Dataset, Graph};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Random connected weighted graph on `n` nodes.
pub fn random_connected_graph(n: usize, rng: &mut ChaCha8Rng) -> Graph {
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

/// A dataset whose features are random but fixed by the seed; labels place
/// one seed per class on the first two nodes.
pub fn random_dataset(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let features = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let mut labels = vec![None; n];
    labels[0] = Some(0);
    labels[1] = Some(1);
    Dataset::new(features, labels, 2).unwrap()
}

/// Expected hitting time to `target` from every node, by solving the
/// first-step equations `h_i = 1 + sum_j P_ij h_j` over the non-target
/// nodes.
pub fn brute_hitting_times(g: &Graph, target: usize) -> Vec<f64> {
    let n = g.n();
    let p = g.random_walk_matrix();
    let others: Vec<usize> = (0..n).filter(|&i| i != target).collect();
    let m = others.len();
    let mut a = DMatrix::zeros(m, m);
    let b = DVector::from_element(m, 1.0);
    for (r, &i) in others.iter().enumerate() {
        for (c, &j) in others.iter().enumerate() {
            a[(r, c)] = if r == c { 1.0 - p[(i, j)] } else { -p[(i, j)] };
        }
    }
    let h = a.lu().solve(&b).expect("hitting-time system solves");
    let mut out = vec![0.0; n];
    for (r, &i) in others.iter().enumerate() {
        out[i] = h[(r, 0)];
    }
    out
}

/// Round-trip expected steps i -> j -> i from the hitting-time oracle.
pub fn brute_commute_time(g: &Graph, i: usize, j: usize) -> f64 {
    brute_hitting_times(g, j)[i] + brute_hitting_times(g, i)[j]
}

/// Horner-evaluated partial sum `sum_{k=0}^{terms} (alpha P)^k`.
pub fn damped_walk_partial_sum(g: &Graph, alpha: f64, terms: usize) -> DMatrix<f64> {
    let p = g.random_walk_matrix() * alpha;
    let n = g.n();
    let identity = DMatrix::identity(n, n);
    let mut acc = identity.clone();
    for _ in 0..terms {
        acc = &identity + &p * acc;
    }
    acc
}

/// Maximum absolute row sum.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
