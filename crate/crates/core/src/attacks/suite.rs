//! Attack grids over scenes and models, and the tables built from them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_perturbation, run_attack, AttackConfig, AttackResult, FutureSource, Optimizer, OptimizerKind};
use crate::constraints::{PerturbationConstraints, PhysicalBounds};
use crate::metrics::{transferability, Metric, HALF_LANE_WIDTH};
use crate::mitigation::DefensePipeline;
use crate::predictors::Predictor;
use crate::scene::Scene;

/// Every combination of these values is attacked on every scene and model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackGrid {
    pub objectives: Vec<Metric>,
    pub l_ps: Vec<usize>,
    pub max_deviations: Vec<f64>,
    pub optimizers: Vec<Optimizer>,
    pub bounds: PhysicalBounds,
    pub context_frames: usize,
    pub future_source: FutureSource,
    pub seed: u64,
}

impl AttackGrid {
    pub fn cells_per_scene_and_model(&self) -> usize {
        self.objectives.len() * self.l_ps.len() * self.max_deviations.len() * self.optimizers.len()
    }
}

/// Seed of one cell. It depends only on the scene and the objective, so
/// sweeps over `l_p`, the deviation bound, the optimizer, or the model
/// start from the same random draw.
pub fn cell_seed(base: u64, scene_index: usize, objective: Metric) -> u64 {
    let mut z = base
        ^ (scene_index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (objective as u64 + 1).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub model: String,
    pub scene_index: usize,
    pub result: AttackResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub model: String,
    pub scene: String,
    pub objective: Metric,
    pub optimizer: OptimizerKind,
    pub l_p: usize,
    pub max_deviation: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SuiteReport {
    pub cells: Vec<CellRecord>,
    pub errors: Vec<CellError>,
}

/// Runs every cell of `grid`; cells run in parallel on the current rayon
/// pool and come back in grid order. A failing cell is recorded in
/// `errors` and the rest continue.
pub fn run_attack_suite(
    scenes: &[Scene],
    models: &[(String, &dyn Predictor)],
    grid: &AttackGrid,
    defense: Option<&DefensePipeline>,
) -> SuiteReport {
    let mut specs = Vec::new();
    for (mi, _) in models.iter().enumerate() {
        for si in 0..scenes.len() {
            for opt in &grid.optimizers {
                for &l_p in &grid.l_ps {
                    for &dev in &grid.max_deviations {
                        for &objective in &grid.objectives {
                            specs.push((mi, si, *opt, l_p, dev, objective));
                        }
                    }
                }
            }
        }
    }
    let outcomes: Vec<Result<CellRecord, CellError>> = specs
        .par_iter()
        .map(|&(mi, si, optimizer, l_p, dev, objective)| {
            let (name, model) = &models[mi];
            let mut constraints = PerturbationConstraints::new(grid.bounds, dev);
            constraints.context_frames = grid.context_frames;
            let cfg = AttackConfig {
                objective,
                l_p,
                constraints,
                optimizer,
                seed: cell_seed(grid.seed, si, objective),
                future_source: grid.future_source,
                defense: defense.cloned(),
            };
            run_attack(&scenes[si], *model, &cfg)
                .map(|result| CellRecord { model: name.clone(), scene_index: si, result })
                .map_err(|e| CellError {
                    model: name.clone(),
                    scene: scenes[si].id().to_string(),
                    objective,
                    optimizer: optimizer.kind(),
                    l_p,
                    max_deviation: dev,
                    message: e.to_string(),
                })
        })
        .collect();
    let mut report = SuiteReport::default();
    for o in outcomes {
        match o {
            Ok(c) => report.cells.push(c),
            Err(e) => report.errors.push(e),
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Metric `m` is read from the cell whose objective was `m`.
    Matched,
    /// Metric `m` is the largest value over all objectives for a scene.
    BestPerObjective,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Matched => "matched",
            Aggregation::BestPerObjective => "best_per_objective",
        }
    }
}

/// One row of the normal-vs-attack table. Metrics that no cell targeted
/// are NaN in the matched aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: String,
    pub optimizer: OptimizerKind,
    pub l_p: usize,
    pub max_deviation: f64,
    pub aggregation: Aggregation,
    pub scenes: usize,
    pub cells: usize,
    /// Indexed like [`Metric::ALL`].
    pub normal: [f64; 6],
    pub attack: [f64; 6],
    /// Share of directional-objective cells whose targeted deviation ends
    /// above half a lane width; NaN without such cells.
    pub over_half_lane: f64,
}

type GroupKey = (String, OptimizerKind, usize, u64);

fn group_key(c: &CellRecord) -> GroupKey {
    (c.model.clone(), c.result.optimizer, c.result.l_p, c.result.max_deviation.to_bits())
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn aggregate(cells: &[CellRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&CellRecord>> = BTreeMap::new();
    for c in cells {
        groups.entry(group_key(c)).or_default().push(c);
    }
    let mut rows = Vec::new();
    for ((model, optimizer, l_p, dev_bits), members) in groups {
        let mut by_scene: BTreeMap<usize, Vec<&CellRecord>> = BTreeMap::new();
        for c in &members {
            by_scene.entry(c.scene_index).or_default().push(c);
        }
        let normal: [f64; 6] =
            Metric::ALL.map(|m| mean(&by_scene.values().map(|cs| cs[0].result.before.get(m)).collect::<Vec<_>>()));
        let directional: Vec<&&CellRecord> = members.iter().filter(|c| c.result.objective.is_directional()).collect();
        let over = mean(
            &directional
                .iter()
                .map(|c| if c.result.targeted_after() > HALF_LANE_WIDTH { 1.0 } else { 0.0 })
                .collect::<Vec<_>>(),
        );
        let matched = Metric::ALL.map(|m| {
            mean(&members.iter().filter(|c| c.result.objective == m).map(|c| c.result.after.get(m)).collect::<Vec<_>>())
        });
        let best = Metric::ALL.map(|m| {
            mean(
                &by_scene
                    .values()
                    .map(|cs| cs.iter().map(|c| c.result.after.get(m)).fold(f64::NEG_INFINITY, f64::max))
                    .collect::<Vec<_>>(),
            )
        });
        for (aggregation, attack) in [(Aggregation::Matched, matched), (Aggregation::BestPerObjective, best)] {
            rows.push(AggregateRow {
                model: model.clone(),
                optimizer,
                l_p,
                max_deviation: f64::from_bits(dev_bits),
                aggregation,
                scenes: by_scene.len(),
                cells: members.len(),
                normal,
                attack,
                over_half_lane: over,
            });
        }
    }
    rows
}

/// Mean targeted metric per (model, optimizer, objective, l_p, bound).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetedRow {
    pub model: String,
    pub optimizer: OptimizerKind,
    pub objective: Metric,
    pub l_p: usize,
    pub max_deviation: f64,
    pub cells: usize,
    pub before: f64,
    pub after: f64,
}

pub fn targeted_rows(cells: &[CellRecord]) -> Vec<TargetedRow> {
    let mut groups: BTreeMap<(String, OptimizerKind, Metric, usize, u64), Vec<&CellRecord>> = BTreeMap::new();
    for c in cells {
        let r = &c.result;
        groups
            .entry((c.model.clone(), r.optimizer, r.objective, r.l_p, r.max_deviation.to_bits()))
            .or_default()
            .push(c);
    }
    groups
        .into_iter()
        .map(|((model, optimizer, objective, l_p, dev), cs)| TargetedRow {
            model,
            optimizer,
            objective,
            l_p,
            max_deviation: f64::from_bits(dev),
            cells: cs.len(),
            before: mean(&cs.iter().map(|c| c.result.targeted_before()).collect::<Vec<_>>()),
            after: mean(&cs.iter().map(|c| c.result.targeted_after()).collect::<Vec<_>>()),
        })
        .collect()
}

/// White-box and black-box results side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub objective: Metric,
    pub l_p: usize,
    pub max_deviation: f64,
    pub before: f64,
    pub pgd: f64,
    pub pso: f64,
}

pub fn comparison_rows(cells: &[CellRecord]) -> Vec<ComparisonRow> {
    let rows = targeted_rows(cells);
    let mut out = Vec::new();
    for pgd in rows.iter().filter(|r| r.optimizer == OptimizerKind::Pgd) {
        let twin = rows.iter().find(|r| {
            r.optimizer == OptimizerKind::Pso
                && r.model == pgd.model
                && r.objective == pgd.objective
                && r.l_p == pgd.l_p
                && r.max_deviation == pgd.max_deviation
        });
        if let Some(pso) = twin {
            out.push(ComparisonRow {
                model: pgd.model.clone(),
                objective: pgd.objective,
                l_p: pgd.l_p,
                max_deviation: pgd.max_deviation,
                before: pgd.before,
                pgd: pgd.after,
                pso: pso.after,
            });
        }
    }
    out
}

/// One perturbation crafted on `source` and replayed on `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub source: String,
    pub target: String,
    pub scene: String,
    pub objective: Metric,
    pub optimizer: OptimizerKind,
    pub l_p: usize,
    pub max_deviation: f64,
    pub score_percent: f64,
    pub dropped: Vec<Metric>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub source: String,
    pub target: String,
    pub cells: usize,
    pub mean_score_percent: f64,
    /// Share of cells scoring at least 50%.
    pub at_least_half: f64,
}

/// Replays every recorded perturbation on every model in `models`.
pub fn transfer_matrix(
    scenes: &[Scene],
    cells: &[CellRecord],
    models: &[(String, &dyn Predictor)],
    defense: Option<&DefensePipeline>,
) -> (Vec<TransferCell>, Vec<TransferSummary>) {
    let pairs: Vec<(&CellRecord, usize)> = cells.iter().flat_map(|c| (0..models.len()).map(move |t| (c, t))).collect();
    let transfer: Vec<TransferCell> = pairs
        .par_iter()
        .filter_map(|&(c, t)| {
            let (target_name, target) = &models[t];
            let r = &c.result;
            let eval = evaluate_perturbation(&scenes[c.scene_index], *target, defense, r.l_p, &r.perturbation).ok()?;
            let score = transferability(&r.after, &eval.mean).ok()?;
            Some(TransferCell {
                source: c.model.clone(),
                target: target_name.clone(),
                scene: r.scene_id.clone(),
                objective: r.objective,
                optimizer: r.optimizer,
                l_p: r.l_p,
                max_deviation: r.max_deviation,
                score_percent: score.score_percent,
                dropped: score.dropped,
            })
        })
        .collect();
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for t in &transfer {
        groups.entry((t.source.clone(), t.target.clone())).or_default().push(t.score_percent);
    }
    let summary = groups
        .into_iter()
        .map(|((source, target), scores)| TransferSummary {
            source,
            target,
            cells: scores.len(),
            mean_score_percent: mean(&scores),
            at_least_half: scores.iter().filter(|&&s| s >= 50.0).count() as f64 / scores.len() as f64,
        })
        .collect();
    (transfer, summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_corpus, DatasetPreset};
    use crate::predictors::ConstantVelocity;

    #[test]
    fn smallest_suite_has_one_row_per_aggregation() {
        let scenes = generate_corpus(DatasetPreset::ApolloscapeLike, 1, 3);
        let cv = ConstantVelocity::new(6, 6);
        let models: Vec<(String, &dyn Predictor)> = vec![("cv".into(), &cv)];
        let grid = AttackGrid {
            objectives: vec![Metric::Ade],
            l_ps: vec![1],
            max_deviations: vec![1.0],
            optimizers: vec![Optimizer::from(OptimizerKind::Pgd).with_max_iter(10)],
            bounds: DatasetPreset::ApolloscapeLike.bounds(),
            context_frames: 3,
            future_source: FutureSource::GroundTruth,
            seed: 0,
        };
        let report = run_attack_suite(&scenes, &models, &grid, None);
        assert!(report.errors.is_empty());
        assert_eq!(report.cells.len(), 1);
        let rows = aggregate(&report.cells);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].scenes, 1);
        assert!(rows[0].attack[0] >= rows[0].normal[0]);
        assert!(rows[0].attack[1].is_nan());

        let (_, summary) = transfer_matrix(&scenes, &report.cells, &models, None);
        assert_eq!(summary[0].mean_score_percent, 100.0);
    }

    #[test]
    fn failing_cells_are_collected() {
        let scenes = generate_corpus(DatasetPreset::ApolloscapeLike, 2, 3);
        let cv = ConstantVelocity::new(6, 6);
        let models: Vec<(String, &dyn Predictor)> = vec![("cv".into(), &cv)];
        let grid = AttackGrid {
            objectives: vec![Metric::Left],
            l_ps: vec![1, 50],
            max_deviations: vec![0.5],
            optimizers: vec![Optimizer::from(OptimizerKind::Pso).with_max_iter(2)],
            bounds: DatasetPreset::ApolloscapeLike.bounds(),
            context_frames: 3,
            future_source: FutureSource::GroundTruth,
            seed: 1,
        };
        let report = run_attack_suite(&scenes, &models, &grid, None);
        assert_eq!(report.cells.len(), 2);
        assert_eq!(report.errors.len(), 2);
        assert!(report.errors.iter().all(|e| e.l_p == 50));
    }
}
