//! Adversarial perturbation of the target vehicle's history.
//!
//! A perturbation covers the target's first `L_I + l_p − 1` frames. With
//! `l_p > 1` the same perturbation must fool `l_p` consecutive predictions,
//! the `α`-th of which sees frames `α .. α + L_I`. The loss is the negated
//! mean of the chosen metric over those predictions, so both optimizers
//! minimize it.

mod objective;
mod pgd;
mod pso;
mod suite;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{FeasibilityVerdict, Perturbation, PerturbationConstraints};
use crate::geometry::Vec2;
use crate::metrics::{ErrorReport, Metric};
use crate::mitigation::{DefensePipeline, MitigationError};
use crate::predictors::{PredictError, Predictor};
use crate::scene::Scene;

pub use objective::{evaluate_perturbation, metric_gradient, AttackProblem, WindowEvaluation};
pub use pgd::pgd_attack;
pub use pso::pso_attack;
pub use suite::{
    aggregate, comparison_rows, run_attack_suite, targeted_rows, transfer_matrix, AggregateRow, Aggregation,
    AttackGrid, CellError, CellRecord, ComparisonRow, SuiteReport, TargetedRow, TransferCell, TransferSummary,
};

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("scene `{scene}` has {got} frames, the attack needs L_I + L_O + l_p - 1 = {need}")]
    FrameCount { scene: String, need: usize, got: usize },
    #[error("invalid attack configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Defense(#[from] MitigationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FutureSource {
    /// Reference futures are the recorded ones.
    GroundTruth,
    /// The attacker only knows the past: other objects' positions after
    /// the attack starts and all reference futures come from the model's
    /// own unperturbed predictions.
    SelfPredicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgdConfig {
    pub learning_rate: f64,
    pub max_iter: usize,
    /// Random start drawn uniformly from `±init_range` per coordinate.
    pub init_range: f64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, max_iter: 100, init_range: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub particles: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub max_iter: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self { particles: 10, inertia: 1.0, cognitive: 0.5, social: 0.3, max_iter: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Pgd(PgdConfig),
    Pso(PsoConfig),
}

impl Optimizer {
    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Pgd(_) => OptimizerKind::Pgd,
            Optimizer::Pso(_) => OptimizerKind::Pso,
        }
    }

    pub fn max_iter(&self) -> usize {
        match self {
            Optimizer::Pgd(c) => c.max_iter,
            Optimizer::Pso(c) => c.max_iter,
        }
    }

    pub fn with_max_iter(self, max_iter: usize) -> Self {
        match self {
            Optimizer::Pgd(c) => Optimizer::Pgd(PgdConfig { max_iter, ..c }),
            Optimizer::Pso(c) => Optimizer::Pso(PsoConfig { max_iter, ..c }),
        }
    }
}

impl From<OptimizerKind> for Optimizer {
    fn from(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Pgd => Optimizer::Pgd(PgdConfig::default()),
            OptimizerKind::Pso => Optimizer::Pso(PsoConfig::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Pgd,
    Pso,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Pgd => "pgd",
            OptimizerKind::Pso => "pso",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "pgd" => Ok(OptimizerKind::Pgd),
            "pso" => Ok(OptimizerKind::Pso),
            _ => Err(format!("unknown optimizer `{s}` (expected pgd or pso)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub objective: Metric,
    pub l_p: usize,
    pub constraints: PerturbationConstraints,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub future_source: FutureSource,
    /// Defense the victim runs; the attacker optimizes through it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense: Option<DefensePipeline>,
}

impl AttackConfig {
    pub fn new(objective: Metric, constraints: PerturbationConstraints, optimizer: Optimizer) -> Self {
        Self {
            objective,
            l_p: 1,
            constraints,
            optimizer,
            seed: 0,
            future_source: FutureSource::GroundTruth,
            defense: None,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: String| Err(AttackError::InvalidConfig(m));
        if self.l_p == 0 {
            return bad("l_p must be at least 1".into());
        }
        if !(self.constraints.max_deviation >= 0.0 && self.constraints.max_deviation.is_finite()) {
            return bad(format!("max_deviation {} is invalid", self.constraints.max_deviation));
        }
        match self.optimizer {
            Optimizer::Pgd(c) if !(c.learning_rate > 0.0) || !(c.init_range >= 0.0) => {
                bad("pgd needs a positive learning rate and a non-negative init range".into())
            }
            Optimizer::Pso(c)
                if c.particles == 0 || !(c.inertia >= 0.0) || !(c.cognitive >= 0.0) || !(c.social >= 0.0) =>
            {
                bad("pso needs at least one particle and non-negative coefficients".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaStats {
    /// θ of the returned perturbation.
    pub best: f64,
    pub mean: f64,
    pub min: f64,
}

impl ThetaStats {
    fn from_samples(best: f64, samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self { best, mean: best, min: best };
        }
        Self {
            best,
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub scene_id: String,
    pub objective: Metric,
    pub optimizer: OptimizerKind,
    pub l_p: usize,
    pub max_deviation: f64,
    pub seed: u64,
    pub future_source: FutureSource,
    pub perturbation: Perturbation,
    pub theta: ThetaStats,
    pub best_loss: f64,
    /// Best loss seen after each iteration; never increases.
    pub trace: Vec<f64>,
    /// Loss of the candidate evaluated at each iteration (PGD) or the
    /// swarm's best candidate of that iteration (PSO).
    pub raw_trace: Vec<f64>,
    /// Means over the `l_p` predictions, against the recorded futures.
    pub before: ErrorReport,
    pub after: ErrorReport,
    pub before_predictions: Vec<Vec<Vec2>>,
    pub after_predictions: Vec<Vec<Vec2>>,
    /// Whether the defense smoothed the target history, per prediction.
    pub before_flags: Vec<bool>,
    pub after_flags: Vec<bool>,
    pub feasibility: FeasibilityVerdict,
}

impl AttackResult {
    /// Value of the targeted metric after the attack.
    pub fn targeted_after(&self) -> f64 {
        self.after.get(self.objective)
    }

    pub fn targeted_before(&self) -> f64 {
        self.before.get(self.objective)
    }
}

/// Runs whichever optimizer `cfg` names.
pub fn run_attack(scene: &Scene, model: &dyn Predictor, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    match cfg.optimizer {
        Optimizer::Pgd(_) => pgd_attack(scene, model, cfg),
        Optimizer::Pso(_) => pso_attack(scene, model, cfg),
    }
}

/// Search state shared by both optimizers, turned into an [`AttackResult`].
pub(crate) struct SearchOutcome {
    pub delta: Vec<Vec2>,
    pub theta: f64,
    pub best_loss: f64,
    pub trace: Vec<f64>,
    pub raw_trace: Vec<f64>,
    pub thetas: Vec<f64>,
}

pub(crate) fn finish(
    scene: &Scene,
    model: &dyn Predictor,
    cfg: &AttackConfig,
    search: SearchOutcome,
) -> Result<AttackResult, AttackError> {
    let delta = Perturbation::new(search.delta);
    let zero = Perturbation::zeros(delta.len());
    let before = evaluate_perturbation(scene, model, cfg.defense.as_ref(), cfg.l_p, &zero)?;
    let after = evaluate_perturbation(scene, model, cfg.defense.as_ref(), cfg.l_p, &delta)?;
    let feasibility = crate::constraints::check_feasible(scene, &delta, &cfg.constraints);
    Ok(AttackResult {
        scene_id: scene.id().to_string(),
        objective: cfg.objective,
        optimizer: cfg.optimizer.kind(),
        l_p: cfg.l_p,
        max_deviation: cfg.constraints.max_deviation,
        seed: cfg.seed,
        future_source: cfg.future_source,
        theta: ThetaStats::from_samples(search.theta, &search.thetas),
        perturbation: delta,
        best_loss: search.best_loss,
        trace: search.trace,
        raw_trace: search.raw_trace,
        before: before.mean,
        after: after.mean,
        before_predictions: before.predictions,
        after_predictions: after.predictions,
        before_flags: before.flags,
        after_flags: after.flags,
        feasibility,
    })
}
