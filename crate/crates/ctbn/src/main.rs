//! Command-line interface: model validation, posterior trajectory
//! sampling, the exact small-network oracle, and the experiment
//! harness.
//!
//! Exit codes: 0 success, 2 validation failure (model, evidence or
//! config), 3 zero-probability evidence, 1 any other error.

use clap::{Parser, Subcommand};
use ctbn::exact::{self, ExactError};
use ctbn::experiments::{ExperimentConfig, ExperimentError, ExperimentKind};
use ctbn::model::ModelError;
use ctbn::sampler::SamplerError;
use ctbn::stats;
use ctbn::trajectory::TrajectoryError;
use ctbn::{CtbnModel, Evidence, GibbsOptions, SweepOrder};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ctbn", version, about = "Gibbs sampling and exact inference for continuous-time Bayesian networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and report every violation.
    Validate {
        /// Model JSON file.
        model: PathBuf,
    },
    /// Run Gibbs chains and write sampled trajectories plus mean
    /// sufficient statistics.
    Sample {
        model: PathBuf,
        evidence: PathBuf,
        /// Trajectory horizon T.
        #[arg(long = "t", default_value_t = 3.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        chains: usize,
        #[arg(long, default_value_t = 100)]
        burnin: usize,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        thin: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact expected sufficient statistics for endpoint evidence on a
    /// small network.
    Exact {
        model: PathBuf,
        evidence: PathBuf,
        #[arg(long = "t", default_value_t = 3.0)]
        horizon: f64,
        /// Integration grid resolution.
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment family from a JSON config.
    Experiment {
        /// One of: error-vs-samples, error-vs-burnin, sharpness,
        /// scaling, timescale.
        kind: String,
        #[arg(long)]
        config: PathBuf,
    },
}

enum CliError {
    Validation(String),
    ZeroProbability(String),
    Other(String),
}

impl CliError {
    fn report(&self) -> (&str, u8) {
        match self {
            CliError::Validation(msg) => (msg, 2),
            CliError::ZeroProbability(msg) => (msg, 3),
            CliError::Other(msg) => (msg, 1),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Invalid(_) | ModelError::Shape(_) | ModelError::Parse(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::ZeroProbabilityEvidence { .. } => {
                CliError::ZeroProbability(e.to_string())
            }
            SamplerError::InconsistentEvidence { .. } => CliError::Validation(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        match e {
            ExactError::ZeroProbabilityEvidence => CliError::ZeroProbability(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Sampler(inner) => inner.into(),
            ExperimentError::Exact(inner) => inner.into(),
            ExperimentError::Model(inner) => inner.into(),
            ExperimentError::BadConfig(_)
            | ExperimentError::WrongNetworkShape(_)
            | ExperimentError::ZeroRateAtZeroAlpha
            | ExperimentError::Parse(_) => CliError::Validation(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (msg, code) = e.report();
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { model } => validate(model),
        Command::Sample { model, evidence, horizon, chains, burnin, samples, thin, seed, out } => {
            sample(model, evidence, horizon, chains, burnin, samples, thin, seed, out)
        }
        Command::Exact { model, evidence, horizon, grid, out } => {
            exact_cmd(model, evidence, horizon, grid, out)
        }
        Command::Experiment { kind, config } => experiment(&kind, config),
    }
}

fn validate(path: PathBuf) -> Result<(), CliError> {
    match CtbnModel::load(&path) {
        Ok(_) => {
            println!("ok");
            Ok(())
        }
        Err(ModelError::Invalid(violations)) => {
            for v in &violations {
                println!("violation: {v}");
            }
            Err(CliError::Validation(format!("{} violation(s)", violations.len())))
        }
        Err(other) => Err(other.into()),
    }
}

#[allow(clippy::too_many_arguments)]
fn sample(
    model_path: PathBuf,
    evidence_path: PathBuf,
    horizon: f64,
    chains: usize,
    burnin: usize,
    samples: usize,
    thin: usize,
    seed: u64,
    out: PathBuf,
) -> Result<(), CliError> {
    if !(horizon > 0.0) {
        return Err(CliError::Validation("horizon must be positive".into()));
    }
    let model = CtbnModel::load(&model_path)?;
    let evidence = Evidence::load(&evidence_path)?;
    evidence.validate(&model, horizon)?;
    std::fs::create_dir_all(&out)?;
    let opts = GibbsOptions {
        burn_in: burnin,
        n_samples: samples,
        thinning: thin,
        order: SweepOrder::Systematic,
    };
    let per_chain: Vec<Vec<ctbn::trajectory::JointTrajectory>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            ctbn::sampler::run_chain(&model, &evidence, horizon, &opts, &mut rng)
        })
        .collect::<Result<_, _>>()?;

    let mut all_stats = Vec::new();
    for (c, chain) in per_chain.iter().enumerate() {
        for (s, joint) in chain.iter().enumerate() {
            let path = out.join(format!("chain{c:03}_sample{s:04}.csv"));
            let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
            joint.write_csv(&mut w, seed)?;
            all_stats.push(stats::accumulate_stats(&model, joint));
        }
    }
    if !all_stats.is_empty() {
        let mean = stats::mean_stats(&all_stats)
            .map_err(|e| CliError::Other(e.to_string()))?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("mean_stats.csv"))?);
        mean.write_csv(&mut w)?;
    }
    Ok(())
}

fn exact_cmd(
    model_path: PathBuf,
    evidence_path: PathBuf,
    horizon: f64,
    grid: usize,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    if !(horizon > 0.0) {
        return Err(CliError::Validation("horizon must be positive".into()));
    }
    let model = CtbnModel::load(&model_path)?;
    let evidence = Evidence::load(&evidence_path)?;
    evidence.validate(&model, horizon)?;
    let (start, end) = endpoint_evidence(&evidence, horizon)?;
    let result = match end {
        Some(end) => exact::exact_sufficient_stats(&model, &start, &end, horizon, grid)?,
        None => exact::exact_sufficient_stats_start_pinned(&model, &start, horizon, grid)?,
    };
    match out {
        Some(path) => {
            let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
            result.write_csv(&mut w)?;
        }
        None => result.write_csv(&mut std::io::stdout().lock())?,
    }
    Ok(())
}

/// The exact oracle supports evidence pinning the full joint state at
/// t = 0 and optionally at t = T.
fn endpoint_evidence(
    evidence: &Evidence,
    horizon: f64,
) -> Result<(Vec<usize>, Option<Vec<usize>>), CliError> {
    let unsupported = || {
        CliError::Validation(
            "the exact oracle needs point evidence on every component at t = 0 \
             and optionally at t = T, with no other observations"
                .into(),
        )
    };
    let mut start = Vec::new();
    let mut end = Vec::new();
    for ce in &evidence.components {
        if !ce.intervals.is_empty() {
            return Err(unsupported());
        }
        let s = ce.points.iter().find(|&&(t, _)| t == 0.0).ok_or_else(unsupported)?;
        start.push(s.1);
        match ce.points.len() {
            1 => {}
            2 => {
                let e = ce
                    .points
                    .iter()
                    .find(|&&(t, _)| t == horizon)
                    .ok_or_else(unsupported)?;
                end.push(e.1);
            }
            _ => return Err(unsupported()),
        }
    }
    if end.is_empty() {
        Ok((start, None))
    } else if end.len() == evidence.components.len() {
        Ok((start, Some(end)))
    } else {
        Err(unsupported())
    }
}

fn experiment(kind: &str, config_path: PathBuf) -> Result<(), CliError> {
    let kind: ExperimentKind = kind.parse().map_err(CliError::Validation)?;
    let config = ExperimentConfig::load(&config_path)?;
    ctbn::experiments::run_experiment(kind, &config)?;
    Ok(())
}
