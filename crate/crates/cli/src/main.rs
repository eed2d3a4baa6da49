//! Operator-facing command surface: data preparation, training, benchmark
//! suites, operator property verification, and report/plot emission.
//!
//! Exit codes are a stable CI contract: 0 success, 1 property or acceptance
//! failure, 2 usage error, 3 I/O error.

mod bench;
mod prepare;
mod report;
mod svg;
mod train;
mod verify;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Exit 2: bad arguments or unknown names.
    Usage(String),
    /// Exit 3: filesystem problems.
    Io(String),
    /// Exit 1: a property or acceptance check failed.
    Check(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Check(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<datasets::DatasetError> for CliError {
    fn from(e: datasets::DatasetError) -> Self {
        match e {
            datasets::DatasetError::Io(io) => CliError::Io(io.to_string()),
            datasets::DatasetError::InvalidInput(m) => CliError::Usage(m),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<trainer::TrainerError> for CliError {
    fn from(e: trainer::TrainerError) -> Self {
        match e {
            trainer::TrainerError::Io(io) => CliError::Io(io.to_string()),
            trainer::TrainerError::Config(m) => CliError::Usage(m),
            other => CliError::Check(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "geo-residual",
    about = "Input-adaptive orthogonal residual operators: datasets, training, verification, reports",
    version
)]
struct Cli {
    /// Default seed (env: GEO_RESIDUAL_SEED).
    #[arg(long, global = true, env = "GEO_RESIDUAL_SEED", default_value_t = 42)]
    seed: u64,

    /// Desk-scale CI profile: 500 iterations and reduced dataset sizes.
    #[arg(long, global = true)]
    fast: bool,

    /// Maximum concurrent benchmark cells (1 = sequential).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset family and write train/val files.
    PrepareData {
        /// gyroscope | stability | reflection | near-pi-single | near-pi-multi
        name: String,
        /// Output directory.
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train one model on one dataset and write its run records.
    Train {
        /// Model kind: gpt | ddl | mhc | jpmhc | edelta.
        #[arg(long)]
        model: Option<String>,
        /// Dataset family name.
        #[arg(long, default_value = "stability")]
        dataset: String,
        /// Flat key = value config file; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training iterations (default 2000; --fast gives 500).
        #[arg(long)]
        iters: Option<usize>,
        /// Gate-penalty weight override.
        #[arg(long)]
        lambda_gate: Option<f64>,
        /// Gate bias override.
        #[arg(long)]
        init_gate_bias: Option<f64>,
        /// Output directory for records.
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Also write a model checkpoint.
        #[arg(long)]
        checkpoint: bool,
        /// Directory with prepared dataset files (generated in memory if absent).
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Run a benchmark suite across models, datasets, and seeds.
    Bench {
        /// matched-params | reflection | near-pi
        suite: String,
        /// Comma-separated training seeds.
        #[arg(long, default_value = "42,123,456")]
        seeds: String,
        /// Comma-separated gate-bias values (near-pi suite).
        #[arg(long, default_value = "-1.5,0.0,1.5")]
        init_bias: String,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
        /// Directory with prepared dataset files (generated in memory if absent).
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Run the operator property suites and print a report.
    Verify {
        /// Machine-readable JSON output.
        #[arg(long)]
        json: bool,
        /// Fault-injection hook for testing the harness itself.
        #[arg(long = "break", value_name = "CHECK")]
        break_check: Option<String>,
    },
    /// Render tables (and optionally SVG plots) from stored run records.
    Report {
        /// Directory containing run records.
        in_dir: PathBuf,
        /// Output format: md | csv | json.
        #[arg(long, default_value = "md")]
        format: String,
        /// Also emit loss-curve, norm-profile, and gate-trajectory SVGs.
        #[arg(long)]
        svg: bool,
        /// Output directory (defaults to <in_dir>/report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::PrepareData { ref name, ref out } => prepare::run(name, cli.seed, out),
        Command::Train {
            ref model,
            ref dataset,
            ref config,
            iters,
            lambda_gate,
            init_gate_bias,
            ref out,
            checkpoint,
            ref data_dir,
        } => train::run(train::TrainArgs {
            model: model.clone(),
            dataset: dataset.clone(),
            config: config.clone(),
            iters,
            lambda_gate,
            init_gate_bias,
            out: out.clone(),
            checkpoint,
            data_dir: data_dir.clone(),
            seed: cli.seed,
            fast: cli.fast,
        }),
        Command::Bench {
            ref suite,
            ref seeds,
            ref init_bias,
            ref out_dir,
            ref data_dir,
        } => bench::run(bench::BenchArgs {
            suite: suite.clone(),
            seeds: seeds.clone(),
            init_bias: init_bias.clone(),
            out_dir: out_dir.clone(),
            data_dir: data_dir.clone(),
            seed: cli.seed,
            fast: cli.fast,
            jobs: cli.jobs,
        }),
        Command::Verify {
            json,
            ref break_check,
        } => verify::run(json, break_check.as_deref()),
        Command::Report {
            ref in_dir,
            ref format,
            svg,
            ref out,
        } => report::run(in_dir, format, svg, out.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
