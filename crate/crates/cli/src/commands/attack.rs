use advtraj::attacks::{AttackGrid, CellRecord, FutureSource, OptimizerKind, ThetaStats};
use advtraj::constraints::PhysicalBounds;
use advtraj::geometry::Vec2;
use advtraj::metrics::{ErrorReport, Metric};
use advtraj::planning::{impact_report, AvPlacement, ImpactReport};
use advtraj::predictors::Predictor;
use advtraj::scene::Scene;
use serde::{Deserialize, Serialize};

use super::tables::run_grid;
use super::RunSummary;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Completion};
use crate::io::OutputWriter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    /// Loss of the first evaluated candidate.
    pub first: Option<f64>,
    pub best: f64,
    /// First iteration (0-based) whose best-so-far equals `best`.
    pub best_iteration: Option<usize>,
}

/// Per-cell record written to `cells.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub model: String,
    pub scene: String,
    pub objective: Metric,
    pub optimizer: OptimizerKind,
    pub l_p: usize,
    pub max_deviation: f64,
    pub seed: u64,
    pub future_source: FutureSource,
    pub before: ErrorReport,
    pub after: ErrorReport,
    pub theta: ThetaStats,
    pub trace: TraceSummary,
    pub feasible: bool,
    pub violations: usize,
    /// Predictions whose target history the defense smoothed.
    pub smoothed_before: usize,
    pub smoothed_after: usize,
    pub perturbation: Vec<Vec2>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub impact: Option<ImpactReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub impact_error: Option<String>,
}

pub fn cell_report(cell: &CellRecord, scene: &Scene, placement: &AvPlacement) -> CellReport {
    let r = &cell.result;
    let first = r.raw_trace.first().copied();
    let best_iteration = r.trace.iter().position(|&l| l == r.best_loss);
    let (impact, impact_error) = match impact_report(r, scene, placement) {
        Ok(i) => (Some(i), None),
        Err(e) => (None, Some(e.to_string())),
    };
    CellReport {
        model: cell.model.clone(),
        scene: r.scene_id.clone(),
        objective: r.objective,
        optimizer: r.optimizer,
        l_p: r.l_p,
        max_deviation: r.max_deviation,
        seed: r.seed,
        future_source: r.future_source,
        before: r.before,
        after: r.after,
        theta: r.theta,
        trace: TraceSummary { iterations: r.trace.len(), first, best: r.best_loss, best_iteration },
        feasible: r.feasibility.is_feasible(),
        violations: r.feasibility.violations.len(),
        smoothed_before: r.before_flags.iter().filter(|&&f| f).count(),
        smoothed_after: r.after_flags.iter().filter(|&&f| f).count(),
        perturbation: r.perturbation.offsets().to_vec(),
        impact,
        impact_error,
    }
}

pub(crate) fn grid(cfg: &ExperimentConfig, bounds: PhysicalBounds) -> AttackGrid {
    let a = &cfg.attack;
    AttackGrid {
        objectives: a.objectives.clone(),
        l_ps: a.l_ps.clone(),
        max_deviations: a.max_deviations.clone(),
        optimizers: a.optimizer_configs(),
        bounds,
        context_frames: a.context_frames,
        future_source: a.future_source,
        seed: cfg.seed,
    }
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let scenes = super::test_scenes(cfg)?;
    let models = super::load_models(cfg)?;
    let bounds = super::bounds(cfg)?;
    let refs: Vec<(String, &dyn Predictor)> = models.iter().map(|(n, m)| (n.clone(), m as &dyn Predictor)).collect();
    let mut out = OutputWriter::new(&cfg.out);
    let report =
        run_grid(&mut out, "attack", &scenes, &refs, &grid(cfg, bounds), None, &cfg.planning, cfg.attack.transfer)?;
    let failed = report.errors.len();
    let manifest = out.finish("attack", cfg)?;
    Ok(RunSummary {
        completion: if failed == 0 { Completion::Success } else { Completion::PartialFailure { failed } },
        manifest,
    })
}
