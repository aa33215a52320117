//! Run description: one JSON document, with command-line overrides.

use std::path::{Path, PathBuf};

use advtraj::attacks::{FutureSource, Optimizer, OptimizerKind, PgdConfig, PsoConfig};
use advtraj::generator::{DatasetPreset, ScenarioFamily};
use advtraj::metrics::Metric;
use advtraj::mitigation::SmootherSpec;
use advtraj::planning::AvPlacement;
use advtraj::predictors::{ModelKind, DEFAULT_HIDDEN};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory; every command reads and writes below it.
    pub out: PathBuf,
    /// Worker threads; `None` uses the available parallelism. Never
    /// changes results.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    pub dataset: DatasetConfig,
    pub models: Vec<ModelSpec>,
    pub attack: AttackSpec,
    pub mitigation: MitigationSpec,
    pub planning: AvPlacement,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("advtraj-out"),
            jobs: None,
            dataset: DatasetConfig::default(),
            models: vec![
                ModelSpec::new("cv", ModelKind::ConstantVelocity),
                ModelSpec::new("ca", ModelKind::ConstantAcceleration),
                ModelSpec::new("nn", ModelKind::Neural),
            ],
            attack: AttackSpec::default(),
            mitigation: MitigationSpec::default(),
            planning: AvPlacement::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneFileFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub preset: DatasetPreset,
    /// Scenes attacked and evaluated.
    pub count: usize,
    /// Scenes used to fit the neural model and the detectors.
    pub train_count: usize,
    pub families: Vec<ScenarioFamily>,
    pub format: SceneFileFormat,
    /// Bounds preset file; the built-in table for `preset` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            preset: DatasetPreset::ApolloscapeLike,
            count: 100,
            train_count: 200,
            families: ScenarioFamily::ALL.to_vec(),
            format: SceneFileFormat::Json,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}
fn default_epochs() -> usize {
    150
}
fn default_learning_rate() -> f64 {
    2e-3
}
fn default_batch() -> usize {
    32
}

impl ModelSpec {
    pub fn new(name: &str, kind: ModelKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            hidden: default_hidden(),
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSpec {
    pub objectives: Vec<Metric>,
    pub l_ps: Vec<usize>,
    pub max_deviations: Vec<f64>,
    pub optimizers: Vec<OptimizerKind>,
    pub pgd: PgdConfig,
    pub pso: PsoConfig,
    pub future_source: FutureSource,
    pub context_frames: usize,
    /// Replay every perturbation on every model.
    pub transfer: bool,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            objectives: Metric::ALL.to_vec(),
            l_ps: vec![1],
            max_deviations: vec![1.0],
            optimizers: vec![OptimizerKind::Pgd, OptimizerKind::Pso],
            pgd: PgdConfig::default(),
            pso: PsoConfig::default(),
            future_source: FutureSource::GroundTruth,
            context_frames: 3,
            transfer: true,
        }
    }
}

impl AttackSpec {
    pub fn optimizer_configs(&self) -> Vec<Optimizer> {
        self.optimizers
            .iter()
            .map(|k| match k {
                OptimizerKind::Pgd => Optimizer::Pgd(self.pgd),
                OptimizerKind::Pso => Optimizer::Pso(self.pso),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Retrained on randomly perturbed histories.
    Augmentation,
    /// Retrained and queried on smoothed histories.
    TrainSmoothing,
    DetectThenSmooth,
    AlwaysSmooth,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Augmentation => "augmentation",
            Variant::TrainSmoothing => "train_smoothing",
            Variant::DetectThenSmooth => "detect_then_smooth",
            Variant::AlwaysSmooth => "always_smooth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorChoice {
    RuleBased,
    KernelClassifier { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigationSpec {
    /// Name of the model the variants are derived from.
    pub base_model: String,
    pub variants: Vec<Variant>,
    /// Detector used by detect_then_smooth; both kinds are always fitted
    /// and exported.
    pub detector: DetectorChoice,
    pub smoother: SmootherSpec,
    pub augment_probability: f64,
}

impl Default for MitigationSpec {
    fn default() -> Self {
        Self {
            base_model: "nn".into(),
            variants: vec![Variant::Augmentation, Variant::TrainSmoothing, Variant::DetectThenSmooth],
            detector: DetectorChoice::KernelClassifier { c: 1.0 },
            smoother: SmootherSpec::default(),
            augment_probability: 0.5,
        }
    }
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub preset: Option<DatasetPreset>,
    pub max_deviations: Option<Vec<f64>>,
    pub l_ps: Option<Vec<usize>>,
    pub objectives: Option<Vec<Metric>>,
    pub optimizers: Option<Vec<OptimizerKind>>,
}

impl ExperimentConfig {
    /// Reads a config, or the config recorded in a run manifest.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
        let inner = match value.get("config") {
            Some(c) if value.get("config_hash").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if o.jobs.is_some() {
            self.jobs = o.jobs;
        }
        if let Some(p) = o.preset {
            self.dataset.preset = p;
        }
        if let Some(v) = &o.max_deviations {
            self.attack.max_deviations = v.clone();
        }
        if let Some(v) = &o.l_ps {
            self.attack.l_ps = v.clone();
        }
        if let Some(v) = &o.objectives {
            self.attack.objectives = v.clone();
        }
        if let Some(v) = &o.optimizers {
            self.attack.optimizers = v.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.dataset.count == 0 {
            return bad("dataset.count must be positive".into());
        }
        if self.dataset.families.is_empty() {
            return bad("dataset.families is empty".into());
        }
        if self.models.is_empty() {
            return bad("no models configured".into());
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("model names must be unique".into());
        }
        if let Some(m) = self.models.iter().find(|m| m.name.is_empty() || m.name.contains(['/', '\\'])) {
            return bad(format!("invalid model name `{}`", m.name));
        }
        if self.models.iter().any(|m| m.kind == ModelKind::Neural) && self.dataset.train_count == 0 {
            return bad("dataset.train_count must be positive to train a neural model".into());
        }
        let a = &self.attack;
        if a.objectives.is_empty() || a.l_ps.is_empty() || a.max_deviations.is_empty() || a.optimizers.is_empty() {
            return bad("attack grid is empty".into());
        }
        if a.l_ps.contains(&0) {
            return bad("l_p values must be at least 1".into());
        }
        if a.max_deviations.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return bad("max deviations must be finite and non-negative".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.mitigation.augment_probability) {
            return bad("mitigation.augment_probability must lie in [0, 1]".into());
        }
        if let DetectorChoice::KernelClassifier { c } = self.mitigation.detector {
            if !(c > 0.0) {
                return bad("kernel classifier needs c > 0".into());
            }
        }
        Ok(())
    }

    /// Canonical JSON used for hashing and manifests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configs serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default_config() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn manifests_can_be_used_as_configs() {
        let cfg = ExperimentConfig { seed: 9, ..Default::default() };
        let manifest = serde_json::json!({ "config_hash": "x", "config": cfg });
        assert_eq!(ExperimentConfig::from_json(&manifest.to_string()).unwrap(), cfg);
    }

    #[test]
    fn overrides_replace_fields() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&Overrides {
            seed: Some(4),
            l_ps: Some(vec![2, 3]),
            objectives: Some(vec![Metric::Left]),
            ..Default::default()
        });
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.attack.l_ps, vec![2, 3]);
        assert_eq!(cfg.attack.objectives, vec![Metric::Left]);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.attack.l_ps = vec![0];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.models.push(ModelSpec::new("cv", ModelKind::Neural));
        assert!(cfg.validate().is_err());
    }
}
