//! Graph-based semi-supervised learning.
//!
//! The library builds similarity graphs over partially labeled data and
//! classifies the unlabeled samples by spreading label information along the
//! graph. It ships the two classic transductive baselines (harmonic Gaussian
//! fields and local-and-global consistency) together with six extensions:
//!
//! - [`fast_lgc`]: near-linear propagation through a Taylor-factored kernel
//!   and the Woodbury identity,
//! - [`train_pdl`]: posterior estimation plus a robust inductive kernel
//!   regressor,
//! - [`mknn_classify`] / [`online_classify`]: weighted k-NN over fatigued
//!   random-walk similarities, with a two-step online extension,
//! - [`deformed_transductive`] / [`deformed_inductive`]: a degree-weighted
//!   confidence penalty on top of the usual Laplacian smoothness term,
//! - [`flap`]: diffusion whose conductances follow Fick's first law,
//! - [`tllt_run`]: curriculum propagation where a teacher selects easy
//!   batches by reliability and commute-time margins.
//!
//! Synthetic benchmarks, CSV interchange and a deterministic experiment
//! harness live in [`datasets`] and [`experiment`]; the `gssl` binary wraps
//! them on the command line.

pub use nalgebra;

pub mod dataset;
pub mod datasets;
pub mod deformed;
pub mod error;
pub mod experiment;
pub mod fast_taylor;
pub mod graph;
mod linalg;
pub mod mknn;
pub mod model_io;
pub mod pdl;
pub mod propagation;
pub mod tllt;

pub use dataset::{Dataset, LabelMatrix};
pub use datasets::{blobs, load_csv, save_csv, two_moons, GeneratedDataset};
pub use deformed::{
    deformed_inductive, deformed_objective, deformed_penalty, deformed_transductive,
    DeformedConfig, DeformedModel,
};
pub use error::{Error, Result};
pub use experiment::{
    accuracy, run_experiment, AlgorithmSpec, DataSource, ExperimentConfig, ExperimentReport,
    GraphParams,
};
pub use fast_taylor::{factorize_kernel, fast_lgc, woodbury_apply, KernelFactorization};
pub use graph::{auto_sigma, build_knn_graph, Graph, GraphConstraints, Sigma};
pub use mknn::{
    constrained_knn_graph, fatigue_similarity, mknn_classify, online_classify, online_similarity,
    reconstruct_weights, ManifoldSimilarity,
};
pub use pdl::{
    estimate_posteriors, fit_posterior_regressor, robust_weights, train_pdl, LocalPropagation,
    PdlModel, PosteriorEstimate,
};
pub use propagation::{
    fick_diffusion_matrix, flap, flap_closed, gfhf, lgc_closed, lgc_iterate, PropagationConfig,
    PropagationResult,
};
pub use tllt::{
    discriminability, feedback, history_json_lines, learner_step, reliability, select_batch,
    tllt_run, CurriculumOutcome, CurriculumRound, CurriculumState, TeacherConfig,
};

/// The guide's chapters compile as doctests, so every code block in the
/// book runs against the current API (`cargo test --doc`).
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(datasets_and_graphs, "../../../book/src/datasets-and-graphs.md");
    chapter!(label_propagation, "../../../book/src/label-propagation.md");
    chapter!(ficks_law, "../../../book/src/ficks-law.md");
    chapter!(fast_taylor, "../../../book/src/fast-taylor.md");
    chapter!(posterior_learning, "../../../book/src/posterior-learning.md");
    chapter!(manifold_knn, "../../../book/src/manifold-knn.md");
    chapter!(deformed_laplacian, "../../../book/src/deformed-laplacian.md");
    chapter!(curriculum, "../../../book/src/curriculum.md");
    chapter!(benchmark_cli, "../../../book/src/benchmark-cli.md");
}
