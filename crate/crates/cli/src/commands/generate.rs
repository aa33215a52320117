use advtraj::constraints::{estimate_bounds, PhysicalBounds};
use advtraj::generator::generate_corpus_of;

use super::{RunSummary, SCENES_DIR, TRAIN_CORPUS_SALT, TRAIN_SCENES_DIR};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Completion};
use crate::io::OutputWriter;

/// Writes the evaluation and training corpora, bounds estimated from the
/// training corpus, and the built-in bounds table.
pub(super) fn run(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let d = &cfg.dataset;
    let mut out = OutputWriter::new(&cfg.out);
    let scenes = generate_corpus_of(d.preset, &d.families, d.count, cfg.seed);
    crate::io::write_corpus(&mut out, SCENES_DIR, &scenes, d.format)?;
    if d.train_count > 0 {
        let train = generate_corpus_of(d.preset, &d.families, d.train_count, cfg.seed ^ TRAIN_CORPUS_SALT);
        crate::io::write_corpus(&mut out, TRAIN_SCENES_DIR, &train, d.format)?;
        let estimated = estimate_bounds(&train).map_err(|e| CliError::Run(format!("bounds estimate: {e}")))?;
        out.write_json("bounds.json", &estimated)?;
    }
    out.write_text("bounds_presets.json", PhysicalBounds::presets_json())?;
    let manifest = out.finish("generate", cfg)?;
    Ok(RunSummary { completion: Completion::Success, manifest })
}
