//! Experiment orchestration: declarative configs, one shared graph, timing,
//! scoring against held-out truth, and JSON/CSV report emission. Report
//! contents (minus wall-clock fields) are a pure function of the config.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::datasets;
use crate::deformed::{deformed_transductive, DeformedConfig};
use crate::error::{Error, Result};
use crate::fast_taylor::fast_lgc;
use crate::graph::{auto_sigma, build_knn_graph, Graph, Sigma};
use crate::mknn::{constrained_knn_graph, fatigue_similarity, mknn_classify};
use crate::pdl::train_pdl;
use crate::propagation::{flap, gfhf, lgc_closed, lgc_iterate, PropagationConfig};
use crate::tllt::{tllt_run, TeacherConfig};

/// Where the samples come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    TwoMoons {
        n: usize,
        noise: f64,
        labels_per_class: usize,
    },
    Blobs {
        n: usize,
        centers: Vec<Vec<f64>>,
        stddev: f64,
        labels_per_class: usize,
    },
    Csv {
        path: PathBuf,
    },
}

/// Shared-graph parameters; `sigma: None` selects the local-scale heuristic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphParams {
    pub k: usize,
    #[serde(default)]
    pub sigma: Option<f64>,
}

fn default_alpha() -> f64 {
    0.99
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_iterations() -> usize {
    10_000
}

fn default_flap_gamma() -> f64 {
    1.0
}

fn default_k_vote() -> usize {
    3
}

fn default_beta() -> f64 {
    1.0
}

fn default_deformed_gamma() -> f64 {
    0.1
}

fn default_pdl_gamma() -> f64 {
    1e3
}

fn default_fb_gamma() -> f64 {
    1.0
}

fn default_gmrf_epsilon() -> f64 {
    1e-6
}

fn default_s_initial() -> usize {
    1
}

fn default_sigma_scale() -> f64 {
    4.0
}

/// One algorithm to run, with its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum AlgorithmSpec {
    Gfhf,
    Lgc {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        iterative: bool,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default = "default_max_iterations")]
        max_iterations: usize,
    },
    FastLgc {
        #[serde(default = "default_alpha")]
        alpha: f64,
        /// Kernel bandwidth as a multiple of the full-connectivity local
        /// scale (the factorization approximates the complete kernel, so its
        /// bandwidth heuristic uses k = n - 1, not the sparse graph's k).
        #[serde(default = "default_sigma_scale")]
        sigma_scale: f64,
    },
    Flap {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_flap_gamma")]
        gamma: f64,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default = "default_max_iterations")]
        max_iterations: usize,
    },
    Mknn {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_k_vote")]
        k_vote: usize,
    },
    Deformed {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_deformed_gamma")]
        gamma: f64,
    },
    Pdl {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_pdl_gamma")]
        gamma: f64,
    },
    Tllt {
        #[serde(default = "default_fb_gamma")]
        gamma_fb: f64,
        #[serde(default = "default_gmrf_epsilon")]
        epsilon: f64,
        #[serde(default = "default_s_initial")]
        s_initial: usize,
    },
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::Gfhf => "gfhf",
            AlgorithmSpec::Lgc { .. } => "lgc",
            AlgorithmSpec::FastLgc { .. } => "fast-lgc",
            AlgorithmSpec::Flap { .. } => "flap",
            AlgorithmSpec::Mknn { .. } => "mknn",
            AlgorithmSpec::Deformed { .. } => "deformed",
            AlgorithmSpec::Pdl { .. } => "pdl",
            AlgorithmSpec::Tllt { .. } => "tllt",
        }
    }
}

/// Full experiment description; the seed determines everything.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub graph: GraphParams,
    pub algorithms: Vec<AlgorithmSpec>,
    pub seed: u64,
    /// Optional per-point prediction dump (`x,y,true,predicted,algorithm`).
    #[serde(default)]
    pub predictions_csv: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Per-algorithm outcome; `error` is set (and the rest defaulted) when the
/// algorithm failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgorithmReport {
    pub algorithm: String,
    pub accuracy: Option<f64>,
    pub wall_clock_ms: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentInfo {
    pub library_version: String,
    pub os: String,
    pub rng: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub graph_k: usize,
    pub graph_sigma: f64,
    pub algorithms: Vec<AlgorithmReport>,
    pub environment: EnvironmentInfo,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// True when any algorithm recorded a failure.
    pub fn has_failures(&self) -> bool {
        self.algorithms.iter().any(|a| a.error.is_some())
    }
}

/// Fraction of `predicted[i] == truth[i]` over the masked indices.
pub fn accuracy(predicted: &[usize], truth: &[usize], mask: &[bool]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    assert_eq!(predicted.len(), mask.len());
    let mut correct = 0usize;
    let mut total = 0usize;
    for i in 0..predicted.len() {
        if mask[i] {
            total += 1;
            if predicted[i] == truth[i] {
                correct += 1;
            }
        }
    }
    correct as f64 / total as f64
}

struct LoadedData {
    data: Dataset,
    truth: Option<Vec<usize>>,
}

fn load_source(source: &DataSource, seed: u64) -> Result<LoadedData> {
    match source {
        DataSource::TwoMoons {
            n,
            noise,
            labels_per_class,
        } => {
            let generated = datasets::two_moons(*n, *noise, *labels_per_class, seed)?;
            Ok(LoadedData {
                data: generated.dataset,
                truth: Some(generated.truth),
            })
        }
        DataSource::Blobs {
            n,
            centers,
            stddev,
            labels_per_class,
        } => {
            let generated = datasets::blobs(*n, centers, *stddev, *labels_per_class, seed)?;
            Ok(LoadedData {
                data: generated.dataset,
                truth: Some(generated.truth),
            })
        }
        DataSource::Csv { path } => Ok(LoadedData {
            data: datasets::load_csv(path)?,
            truth: None,
        }),
    }
}

fn run_algorithm(
    spec: &AlgorithmSpec,
    data: &Dataset,
    graph: &Graph,
    sigma: f64,
    k: usize,
) -> Result<(Vec<usize>, usize, bool)> {
    match spec {
        AlgorithmSpec::Gfhf => {
            let r = gfhf(graph, data)?;
            Ok((r.predicted, r.iterations, r.converged))
        }
        AlgorithmSpec::Lgc {
            alpha,
            iterative,
            tolerance,
            max_iterations,
        } => {
            let seeds = data.seed_matrix();
            let r = if *iterative {
                let cfg = PropagationConfig {
                    alpha: *alpha,
                    tolerance: *tolerance,
                    max_iterations: *max_iterations,
                };
                lgc_iterate(graph, &seeds, &cfg)?
            } else {
                lgc_closed(graph, &seeds, *alpha)?
            };
            Ok((r.predicted, r.iterations, r.converged))
        }
        AlgorithmSpec::FastLgc { alpha, sigma_scale } => {
            let seeds = data.seed_matrix();
            let full_scale = auto_sigma(data, data.n() - 1)?;
            let r = fast_lgc(data, &seeds, *alpha, full_scale * sigma_scale)?;
            Ok((r.predicted, r.iterations, r.converged))
        }
        AlgorithmSpec::Flap {
            alpha,
            gamma,
            tolerance,
            max_iterations,
        } => {
            let cfg = PropagationConfig {
                alpha: *alpha,
                tolerance: *tolerance,
                max_iterations: *max_iterations,
            };
            let r = flap(graph, data, &cfg, *gamma)?;
            Ok((r.predicted, r.iterations, r.converged))
        }
        AlgorithmSpec::Mknn { alpha, k_vote } => {
            // The manifold similarity runs on the label-constrained variant
            // of the shared graph.
            let constrained = constrained_knn_graph(data, k, Sigma::Fixed(sigma))?;
            let sim = fatigue_similarity(&constrained, *alpha)?;
            let r = mknn_classify(&sim, data, *k_vote)?;
            Ok((r.predicted, r.iterations, r.converged))
        }
        AlgorithmSpec::Deformed { beta, gamma } => {
            let cfg = DeformedConfig {
                beta: *beta,
                gamma: *gamma,
                ..Default::default()
            };
            let r = deformed_transductive(graph, data, &cfg)?;
            Ok((r.predicted, r.iterations, r.converged))
        }
        AlgorithmSpec::Pdl { alpha, gamma } => {
            let model = train_pdl(data, k, Sigma::Fixed(sigma), *alpha, *gamma)?;
            let predicted: Vec<usize> = (0..data.n())
                .map(|i| model.predict_class(&data.sample(i)))
                .collect();
            Ok((predicted, 0, true))
        }
        AlgorithmSpec::Tllt {
            gamma_fb,
            epsilon,
            s_initial,
        } => {
            let cfg = TeacherConfig {
                gamma_fb: *gamma_fb,
                epsilon_gmrf: *epsilon,
                s_initial: *s_initial,
            };
            let outcome = tllt_run(data, graph, &cfg)?;
            Ok((
                outcome.result.predicted,
                outcome.result.iterations,
                outcome.result.converged,
            ))
        }
    }
}

/// Runs every configured algorithm against one shared k-NN graph, scoring on
/// the samples that were unlabeled at training time. Algorithm failures are
/// recorded per algorithm and the run continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let loaded = load_source(&cfg.source, cfg.seed)?;
    let data = &loaded.data;
    if cfg.graph.k == 0 || cfg.graph.k >= data.n() {
        return Err(Error::InvalidParameter(format!(
            "graph k={} is invalid for {} samples",
            cfg.graph.k,
            data.n()
        )));
    }
    let sigma = match cfg.graph.sigma {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => {
            return Err(Error::InvalidParameter(format!(
                "graph sigma must be positive, got {s}"
            )))
        }
        None => auto_sigma(data, cfg.graph.k)?,
    };
    let graph = build_knn_graph(data, cfg.graph.k, Sigma::Fixed(sigma), None)?;
    let mask: Vec<bool> = (0..data.n()).map(|i| data.label_of(i).is_none()).collect();

    let mut reports = Vec::with_capacity(cfg.algorithms.len());
    let mut prediction_rows: Vec<(String, Vec<usize>)> = Vec::new();
    for spec in &cfg.algorithms {
        let start = Instant::now();
        let outcome = run_algorithm(spec, data, &graph, sigma, cfg.graph.k);
        let wall_clock_ms = start.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok((predicted, iterations, converged)) => {
                let acc = loaded
                    .truth
                    .as_ref()
                    .map(|truth| accuracy(&predicted, truth, &mask));
                reports.push(AlgorithmReport {
                    algorithm: spec.name().to_string(),
                    accuracy: acc,
                    wall_clock_ms,
                    iterations,
                    converged,
                    error: None,
                });
                prediction_rows.push((spec.name().to_string(), predicted));
            }
            Err(err) => reports.push(AlgorithmReport {
                algorithm: spec.name().to_string(),
                accuracy: None,
                wall_clock_ms,
                iterations: 0,
                converged: false,
                error: Some(err.to_string()),
            }),
        }
    }

    if let Some(path) = &cfg.predictions_csv {
        write_predictions_csv(path, data, loaded.truth.as_deref(), &prediction_rows)?;
    }

    Ok(ExperimentReport {
        seed: cfg.seed,
        n: data.n(),
        dim: data.dim(),
        num_classes: data.num_classes(),
        graph_k: cfg.graph.k,
        graph_sigma: sigma,
        algorithms: reports,
        environment: EnvironmentInfo {
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            rng: "chacha8".to_string(),
        },
    })
}

/// One row per (sample, algorithm): first two feature coordinates, the truth
/// when known, and the predicted class.
fn write_predictions_csv(
    path: &Path,
    data: &Dataset,
    truth: Option<&[usize]>,
    rows: &[(String, Vec<usize>)],
) -> Result<()> {
    let file = File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "x,y,true,predicted,algorithm")?;
    for (name, predicted) in rows {
        for i in 0..data.n() {
            let x = data.features()[(i, 0)];
            let y = if data.dim() > 1 {
                data.features()[(i, 1)]
            } else {
                0.0
            };
            let truth_field = truth.map(|t| t[i].to_string()).unwrap_or_default();
            writeln!(out, "{x},{y},{truth_field},{},{name}", predicted[i])?;
        }
    }
    out.flush()?;
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;

    fn moon_config(algorithms: Vec<AlgorithmSpec>) -> ExperimentConfig {
        ExperimentConfig {
            source: DataSource::TwoMoons {
                n: 60,
                noise: 0.05,
                labels_per_class: 2,
            },
            graph: GraphParams { k: 6, sigma: None },
            algorithms,
            seed: 5,
            predictions_csv: None,
        }
    }

    #[test]
    fn empty_algorithm_list_yields_empty_report() {
        let report = run_experiment(&moon_config(vec![])).unwrap();
        assert!(report.algorithms.is_empty());
        assert!(!report.has_failures());
        assert_eq!(report.n, 60);
    }

    #[test]
    fn accuracy_trivial_values() {
        let mask = vec![true, true, true, true];
        assert_eq!(accuracy(&[0, 1, 0, 1], &[0, 1, 0, 1], &mask), 1.0);
        assert_eq!(accuracy(&[1, 0, 1, 0], &[0, 1, 0, 1], &mask), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 1], &mask), 0.5);
        assert_eq!(
            accuracy(&[0, 9, 9, 1], &[0, 1, 0, 1], &[true, false, false, true]),
            1.0
        );
    }

    #[test]
    fn failures_are_recorded_and_the_run_continues() {
        // A FLAP gamma of zero is rejected as an invalid parameter.
        let cfg = moon_config(vec![
            AlgorithmSpec::Flap {
                alpha: 0.9,
                gamma: 0.0,
                tolerance: 1e-8,
                max_iterations: 100,
            },
            AlgorithmSpec::Gfhf,
        ]);
        let report = run_experiment(&cfg).unwrap();
        assert!(report.algorithms[0].error.is_some());
        assert!(report.algorithms[1].error.is_none());
        assert!(report.has_failures());
    }

    #[test]
    fn same_seed_reports_match_up_to_timing() {
        let cfg = moon_config(vec![
            AlgorithmSpec::Lgc {
                alpha: 0.95,
                iterative: false,
                tolerance: 1e-8,
                max_iterations: 1000,
            },
            AlgorithmSpec::Gfhf,
        ]);
        let mut a = run_experiment(&cfg).unwrap();
        let mut b = run_experiment(&cfg).unwrap();
        for r in a.algorithms.iter_mut().chain(b.algorithms.iter_mut()) {
            r.wall_clock_ms = 0.0;
        }
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = moon_config(vec![AlgorithmSpec::Mknn {
            alpha: 0.9,
            k_vote: 3,
        }]);
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.algorithms.len(), 1);
        assert_eq!(back.algorithms[0].name(), "mknn");
    }

    #[test]
    fn sparse_config_uses_defaults() {
        let text = r#"{
            "source": {"kind": "two-moons", "n": 40, "noise": 0.05, "labels_per_class": 1},
            "graph": {"k": 5},
            "algorithms": [{"name": "lgc"}, {"name": "tllt"}],
            "seed": 1
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        match &cfg.algorithms[0] {
            AlgorithmSpec::Lgc { alpha, .. } => assert_eq!(*alpha, 0.99),
            _ => panic!("expected lgc"),
        }
        let report = run_experiment(&cfg).unwrap();
        assert!(!report.has_failures(), "{}", report.to_json());
    }
}
