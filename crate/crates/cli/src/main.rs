//! `relmatch`: train, verify, check goldens, run the backend ablation.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use run::Failure;

#[derive(Parser)]
#[command(name = "relmatch", version, about = "Matrix cross-entropy toolkit and RelationMatch runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write config, manifest, metrics, summary and checkpoint.
    Train(TrainArgs),
    /// Run every property check and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Recompute the warm-up relation matrices and compare them to the embedded fixtures.
    Goldens,
    /// Compare the taylor3 and elementwise log backends over several seeds.
    Ablate(AblateArgs),
    /// Write the configured synthetic dataset as CSV.
    ExportData {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Configuration sources shared by the subcommands that build a run.
#[derive(Args, Clone, Default)]
pub struct Overrides {
    /// Flat `key = value` config file.
    pub config: Option<PathBuf>,
    /// default, paper-literal, supervised-mce, ce-baseline, cpl or pseudo-label.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// principal, taylorK (e.g. taylor3) or elementwise.
    #[arg(long)]
    pub log_backend: Option<String>,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory (default: runs/<preset>-seed<N>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train on a dataset previously written by `export-data` instead of generating one.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value = "runs/ablation")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run::train(&a.overrides, a.out, a.data.as_deref()),
        Command::Verify { seed } => run::verify(seed),
        Command::Goldens => run::goldens(),
        Command::Ablate(a) => run::ablate(&a.overrides, a.seeds, &a.out),
        Command::ExportData { overrides, out } => run::export_data(&overrides, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Checks(n) => write!(f, "{n} check(s) failed"),
            Failure::Io(m) => write!(f, "{m}"),
        }
    }
}
