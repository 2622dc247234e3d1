use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use commands::{Failure, Status};
use config::RunConfig;

/// Robustness certificates for GCN node classifiers under randomized
/// message-interception smoothing.
#[derive(Debug, Parser)]
#[command(name = "icert", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-node and per-sample work.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the GCN base classifier and write a checkpoint.
    Train,
    /// Estimate and certify the selected nodes.
    Certify,
    /// Exact label probabilities under retention smoothing.
    Derandomize,
    /// Curve and AUCRC tables from one or more results files.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
    /// Receptive-field statistics for the selected nodes.
    Paths,
    /// Write a two-block synthetic graph and a matching config.
    Synth {
        #[arg(long, default_value_t = 200)]
        nodes: usize,
        #[arg(long, default_value_t = 0.05)]
        p_in: f64,
        #[arg(long, default_value_t = 0.005)]
        p_out: f64,
        #[arg(long, default_value_t = 32)]
        features: usize,
    },
}

fn run(cli: Cli) -> Result<Status, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.paths.out_dir = Some(out);
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Failure::Usage("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into()))?;
    }
    if !matches!(cli.command, Command::Report { .. } | Command::Synth { .. }) {
        cfg.validate().map_err(Failure::Usage)?;
    }
    match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Certify => commands::certify(&cfg),
        Command::Derandomize => commands::derandomize(&cfg),
        Command::Report { results } => commands::report(&cfg, &results),
        Command::Paths => commands::paths(&cfg),
        Command::Synth {
            nodes,
            p_in,
            p_out,
            features,
        } => commands::synth(&cfg, nodes, p_in, p_out, features),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial(n)) => {
            eprintln!("icert: {n} node(s) failed; see the error column");
            ExitCode::from(3)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("icert: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("icert: {e:#}");
            ExitCode::from(1)
        }
    }
}
