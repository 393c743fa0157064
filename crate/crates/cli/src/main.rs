//! Benchmark CLI: generate synthetic datasets, run experiment configs, and
//! turn prediction dumps into scatter plots.
//!
//! Exit codes: 0 on success, 1 on configuration or I/O errors, 2 when an
//! algorithm failed during a run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod plot;

#[derive(Parser)]
#[command(name = "gssl", version, about = "Graph-based semi-supervised learning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as CSV.
    Gen(GenArgs),
    /// Run an experiment config and write a JSON report.
    Run(RunArgs),
    /// Render a predictions CSV as an SVG scatter (or regrouped CSV).
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    shape: GenShape,
}

#[derive(Subcommand)]
enum GenShape {
    /// Two interleaved half-circles with Gaussian noise.
    TwoMoons {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        labels_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Isotropic Gaussian blobs around explicit centers.
    Blobs {
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Centers as `x1,y1,...;x2,y2,...` (semicolon-separated points).
        #[arg(long, default_value = "0,0;4,4")]
        centers: String,
        #[arg(long, default_value_t = 0.5)]
        stddev: f64,
        #[arg(long, default_value_t = 1)]
        labels_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Report destination; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Predictions CSV produced by `run` (`x,y,true,predicted,algorithm`).
    #[arg(long)]
    predictions: PathBuf,
    /// Output path; `.svg` renders markers, `.csv` regroups per algorithm
    /// with comment headers for external plotting tools.
    #[arg(short, long)]
    output: PathBuf,
}

fn parse_centers(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.split(';')
        .map(|point| {
            point
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad center `{v}`: {e}")))
                .collect()
        })
        .collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(code) = configure_threads() {
        return code;
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

/// `SSL_THREADS` caps the rayon pool used for graph and kernel rows.
fn configure_threads() -> Result<(), ExitCode> {
    if let Ok(text) = std::env::var("SSL_THREADS") {
        let threads: usize = match text.parse() {
            Ok(v) if v > 0 => v,
            _ => {
                eprintln!("error: SSL_THREADS must be a positive integer, got `{text}`");
                return Err(ExitCode::from(1));
            }
        };
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("rayon pool is configured once, before any use");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Gen(args) => {
            let (dataset, output) = match args.shape {
                GenShape::TwoMoons {
                    n,
                    noise,
                    labels_per_class,
                    seed,
                    output,
                } => (
                    gssl::two_moons(n, noise, labels_per_class, seed)
                        .map_err(|e| e.to_string())?,
                    output,
                ),
                GenShape::Blobs {
                    n,
                    centers,
                    stddev,
                    labels_per_class,
                    seed,
                    output,
                } => {
                    let centers = parse_centers(&centers)?;
                    (
                        gssl::blobs(n, &centers, stddev, labels_per_class, seed)
                            .map_err(|e| e.to_string())?,
                        output,
                    )
                }
            };
            gssl::save_csv(&dataset.dataset, &output).map_err(|e| e.to_string())?;
            eprintln!(
                "wrote {} samples ({} labeled) to {}",
                dataset.dataset.n(),
                dataset.dataset.labeled_indices().len(),
                output.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => {
            let config =
                gssl::ExperimentConfig::load(&args.config).map_err(|e| e.to_string())?;
            let report = gssl::run_experiment(&config).map_err(|e| e.to_string())?;
            let text = report.to_json();
            match &args.output {
                Some(path) => std::fs::write(path, text + "\n").map_err(|e| e.to_string())?,
                None => println!("{text}"),
            }
            if report.has_failures() {
                for a in report.algorithms.iter().filter(|a| a.error.is_some()) {
                    eprintln!(
                        "algorithm {} failed: {}",
                        a.algorithm,
                        a.error.as_deref().unwrap_or("unknown")
                    );
                }
                Ok(ExitCode::from(2))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Plot(args) => {
            plot::plot(&args.predictions, &args.output)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
