//! `bgcn`: run the Bayesian GCN pipeline and its stages from the command line.

mod commands;
mod config;
mod rundir;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, config or input files; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// A pipeline stage or output write failed; exit code 1.
    #[error("{0}")]
    Compute(String),
}

#[derive(Parser, Debug)]
#[command(
    name = "bgcn",
    version,
    about = "Bayesian graph convolutional networks over a learned graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file (pipeline settings plus optional `dataset` and `out`).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Dotted override such as `gcn.hidden=32`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Bundle directory, or a name resolved under the data root.
    #[arg(long, short)]
    dataset: Option<String>,
    /// Directory holding bundles referred to by name.
    #[arg(long, env = "BGCN_DATA_ROOT", default_value = "data")]
    data_root: PathBuf,
    /// Training labels kept per class (5, 10 or 20).
    #[arg(long)]
    labels_per_class: Option<usize>,
    /// Number of consecutive seeds to run.
    #[arg(long)]
    seeds: Option<u64>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Seeds run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Run directory; defaults to `runs/<dataset>-<digest>`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Recompute stages even when cached results exist.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: embed, base GCN, graph learning, GCN over the learned graph.
    Run(Common),
    /// Base GCN on the observed graph only.
    Baseline(Common),
    /// Train the GVAE and write node embeddings.
    Embed(Common),
    /// Learn the graph and write its edges and weights.
    LearnGraph(Common),
    /// Compare the summaries of several run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Write class-sorted adjacency images for a finished run.
    ExportAdj {
        /// Run directory containing a learned graph.
        #[arg(long, short)]
        out: PathBuf,
        /// Seed whose learned graph is drawn; defaults to the first in the run.
        #[arg(long)]
        seed: Option<u64>,
        /// Image width in pixels.
        #[arg(long, default_value_t = 512)]
        size: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(c) => commands::run(&c),
        Command::Baseline(c) => commands::baseline(&c),
        Command::Embed(c) => commands::embed(&c),
        Command::LearnGraph(c) => commands::learn_graph(&c),
        Command::Report { runs } => commands::report(&runs),
        Command::ExportAdj { out, seed, size } => commands::export_adj(&out, seed, size),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Compute(_) => ExitCode::from(1),
            }
        }
    }
}
