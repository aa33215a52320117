//! The five subcommands. Each reads what earlier commands wrote below the
//! output directory and finishes by writing its manifest.

mod attack;
mod generate;
mod mitigate;
mod report;
mod tables;
mod train;

use std::path::{Path, PathBuf};

use advtraj::constraints::PhysicalBounds;
use advtraj::predictors::{Model, Predictor};
use advtraj::scene::Scene;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Completion};
use crate::io::{read_corpus, read_text};

pub use attack::{cell_report, CellReport, TraceSummary};
pub use mitigate::MitigationRow;
pub use tables::{
    AggregateCsvRow, CellCsvRow, ComparisonCsvRow, TargetedCsvRow, TransferCsvRow, TransferSummaryCsvRow,
};

pub const SCENES_DIR: &str = "scenes";
pub const TRAIN_SCENES_DIR: &str = "train_scenes";
pub const MODELS_DIR: &str = "models";

/// Seed offset separating the training corpus from the evaluation corpus.
const TRAIN_CORPUS_SALT: u64 = 0x7a11_0000_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Train,
    Attack,
    Mitigate,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Attack => "attack",
            Command::Mitigate => "mitigate",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub completion: Completion,
    pub manifest: PathBuf,
}

/// Validates `cfg` and runs `command` on a pool of `cfg.jobs` threads.
pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Run(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match command {
        Command::Generate => generate::run(cfg),
        Command::Train => train::run(cfg),
        Command::Attack => attack::run(cfg),
        Command::Mitigate => mitigate::run(cfg),
        Command::Report => report::run(cfg),
    })
}

pub(crate) fn test_scenes(cfg: &ExperimentConfig) -> Result<Vec<Scene>, CliError> {
    read_corpus(&cfg.out.join(SCENES_DIR))
}

pub(crate) fn train_scenes(cfg: &ExperimentConfig) -> Result<Vec<Scene>, CliError> {
    read_corpus(&cfg.out.join(TRAIN_SCENES_DIR))
}

/// The configured bounds file, or the built-in preset table.
pub(crate) fn bounds(cfg: &ExperimentConfig) -> Result<PhysicalBounds, CliError> {
    let Some(path) = &cfg.dataset.bounds else {
        return Ok(PhysicalBounds::preset(cfg.dataset.preset));
    };
    let text = read_text(path)?;
    let parsed = serde_json::from_str::<PhysicalBounds>(&text)
        .ok()
        .or_else(|| {
            PhysicalBounds::load_preset_table(&text).ok().and_then(|t| t.get(cfg.dataset.preset.name()).copied())
        })
        .ok_or_else(|| CliError::Config(format!("{}: not a bounds object or preset table", path.display())))?;
    parsed.validated().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub(crate) fn model_path(root: &Path, name: &str) -> PathBuf {
    root.join(MODELS_DIR).join(format!("{name}.json"))
}

/// Loads every configured model checkpoint, checking its horizons
/// against the preset.
pub(crate) fn load_models(cfg: &ExperimentConfig) -> Result<Vec<(String, Model)>, CliError> {
    let (l_i, l_o, _) = cfg.dataset.preset.timing();
    cfg.models
        .iter()
        .map(|spec| {
            let path = model_path(&cfg.out, &spec.name);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                CliError::Config(format!("missing checkpoint {} ({e}); run `train` first", path.display()))
            })?;
            let model = Model::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if model.kind() != spec.kind {
                return Err(CliError::Config(format!(
                    "{} holds a {} model, config says {}",
                    path.display(),
                    model.kind(),
                    spec.kind
                )));
            }
            if (model.l_i(), model.l_o()) != (l_i, l_o) {
                return Err(CliError::Config(format!(
                    "{} predicts {} from {} frames, preset {} needs {} from {}",
                    path.display(),
                    model.l_o(),
                    model.l_i(),
                    cfg.dataset.preset.name(),
                    l_o,
                    l_i
                )));
            }
            Ok((spec.name.clone(), model))
        })
        .collect()
}
