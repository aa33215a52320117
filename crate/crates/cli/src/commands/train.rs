use advtraj::metrics::ErrorReport;
use advtraj::mitigation::SmootherSpec;
use advtraj::predictors::{
    train, ConstantAcceleration, ConstantVelocity, Model, ModelKind, NeuralPredictor, PredictionRequest, Predictor,
    SampleHook, TrainOptions,
};
use advtraj::scene::Scene;
use serde::Serialize;

use super::{RunSummary, MODELS_DIR};
use crate::config::{ExperimentConfig, ModelSpec};
use crate::error::{CliError, Completion};
use crate::io::OutputWriter;

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    loss: f64,
}

#[derive(Serialize)]
struct EvalRow {
    model: String,
    scenes: usize,
    ade: f64,
    fde: f64,
}

/// Builds or fits the model `spec` describes. Neural models are fitted on
/// `train_set`; the loss history is empty for the closed-form models.
pub(crate) fn fit(
    spec: &ModelSpec,
    cfg: &ExperimentConfig,
    train_set: &[Scene],
    augmentation: Option<&dyn SampleHook>,
    smoothing: Option<SmootherSpec>,
) -> Result<(Model, Vec<f64>), CliError> {
    let (l_i, l_o, _) = cfg.dataset.preset.timing();
    Ok(match spec.kind {
        ModelKind::ConstantVelocity => (ConstantVelocity::new(l_i, l_o).into(), Vec::new()),
        ModelKind::ConstantAcceleration => (ConstantAcceleration::new(l_i, l_o).into(), Vec::new()),
        ModelKind::Neural => {
            let init = NeuralPredictor::for_dataset(train_set, l_i, l_o, spec.hidden, cfg.seed);
            let opts = TrainOptions {
                epochs: spec.epochs,
                learning_rate: spec.learning_rate,
                batch_size: spec.batch_size,
                seed: cfg.seed,
                augmentation,
                smoothing,
            };
            let outcome = train(init, train_set, &opts).map_err(|e| CliError::Run(format!("{}: {e}", spec.name)))?;
            (outcome.model.into(), outcome.loss_history)
        }
    })
}

/// Clean-corpus error of the first prediction of every scene.
pub(crate) fn clean_error(model: &dyn Predictor, scenes: &[Scene]) -> Result<ErrorReport, CliError> {
    let (l_i, l_o) = (model.l_i(), model.l_o());
    let mut reports = Vec::with_capacity(scenes.len());
    for s in scenes {
        let req = PredictionRequest::from_scene(s, l_i - 1, l_i, l_o).map_err(|e| CliError::Run(e.to_string()))?;
        let pred = model.predict_target(&req).map_err(|e| CliError::Run(e.to_string()))?;
        let truth = &s.target().positions()[l_i..l_i + l_o];
        reports.push(ErrorReport::compute(&pred, truth).map_err(|e| CliError::Run(e.to_string()))?);
    }
    Ok(ErrorReport::mean(&reports))
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let needs_data = cfg.models.iter().any(|m| m.kind == ModelKind::Neural);
    let train_set = if needs_data { super::train_scenes(cfg)? } else { Vec::new() };
    let test = super::test_scenes(cfg).ok();
    let mut out = OutputWriter::new(&cfg.out);
    let mut eval = Vec::new();
    for spec in &cfg.models {
        let (model, losses) = fit(spec, cfg, &train_set, None, None)?;
        out.write_text(&format!("{MODELS_DIR}/{}.json", spec.name), &model.to_json())?;
        if !losses.is_empty() {
            let rows: Vec<LossRow> = losses.iter().enumerate().map(|(epoch, &loss)| LossRow { epoch, loss }).collect();
            out.write_csv(&format!("{MODELS_DIR}/{}_loss.csv", spec.name), &rows)?;
        }
        if let Some(scenes) = &test {
            let e = clean_error(&model, scenes)?;
            eval.push(EvalRow { model: spec.name.clone(), scenes: scenes.len(), ade: e.ade, fde: e.fde });
        }
    }
    if !eval.is_empty() {
        out.write_csv(&format!("{MODELS_DIR}/evaluation.csv"), &eval)?;
    }
    let manifest = out.finish("train", cfg)?;
    Ok(RunSummary { completion: Completion::Success, manifest })
}
