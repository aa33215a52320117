use std::path::PathBuf;
use std::process::ExitCode;

use advtraj::attacks::OptimizerKind;
use advtraj::generator::DatasetPreset;
use advtraj::metrics::Metric;
use advtraj_cli::{execute, Command, Completion, ExperimentConfig, Overrides};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "advtraj", version, about = "Adversarial trajectory prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the evaluation and training corpora and bounds files.
    Generate(Flags),
    /// Fit or build the configured prediction models.
    Train(Flags),
    /// Run the attack grid against every model.
    Attack(Flags),
    /// Fit detectors, retrain defended models and re-run the attack grid.
    Mitigate(Flags),
    /// Render summary tables and charts from earlier outputs.
    Report(Flags),
}

#[derive(Args)]
struct Flags {
    /// Experiment config JSON, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    preset: Option<DatasetPreset>,
    /// Deviation bounds in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    max_deviation: Option<Vec<f64>>,
    /// Attack horizons in frames, comma separated.
    #[arg(long, value_delimiter = ',')]
    lp: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    objective: Option<Vec<Metric>>,
    #[arg(long, value_delimiter = ',')]
    optimizer: Option<Vec<OptimizerKind>>,
}

impl Flags {
    fn overrides(self) -> (Option<PathBuf>, Overrides) {
        (
            self.config,
            Overrides {
                seed: self.seed,
                out: self.out,
                jobs: self.jobs,
                preset: self.preset,
                max_deviations: self.max_deviation,
                l_ps: self.lp,
                objectives: self.objective,
                optimizers: self.optimizer,
            },
        )
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Cmd::Generate(f) => (Command::Generate, f),
        Cmd::Train(f) => (Command::Train, f),
        Cmd::Attack(f) => (Command::Attack, f),
        Cmd::Mitigate(f) => (Command::Mitigate, f),
        Cmd::Report(f) => (Command::Report, f),
    };
    let (config, overrides) = flags.overrides();
    let mut cfg = match config {
        Some(path) => match ExperimentConfig::load(&path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        },
        None => ExperimentConfig::default(),
    };
    cfg.apply(&overrides);
    match execute(command, &cfg) {
        Ok(summary) => {
            if let Completion::PartialFailure { failed } = summary.completion {
                eprintln!("{failed} attack cells failed; see errors.json next to the tables");
            }
            println!("{} done; manifest at {}", command.name(), summary.manifest.display());
            ExitCode::from(summary.completion.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
