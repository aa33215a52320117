//! Flat CSV rows for the attack tables, and the writer shared by `attack`
//! and `mitigate`.

use std::collections::BTreeMap;

use advtraj::attacks::{
    aggregate, comparison_rows, run_attack_suite, targeted_rows, transfer_matrix, AttackGrid, CellRecord,
    OptimizerKind, SuiteReport,
};
use advtraj::metrics::Metric;
use advtraj::mitigation::DefensePipeline;
use advtraj::planning::{AvPlacement, Severity};
use advtraj::predictors::Predictor;
use advtraj::scene::Scene;
use serde::{Deserialize, Serialize};

use super::attack::{cell_report, CellReport};
use crate::error::CliError;
use crate::io::OutputWriter;

/// One row per aggregate group; metric pairs mirror a normal/attack table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCsvRow {
    pub model: String,
    pub optimizer: OptimizerKind,
    pub l_p: usize,
    pub max_deviation: f64,
    pub aggregation: String,
    pub scenes: usize,
    pub cells: usize,
    pub ade_normal: f64,
    pub ade_attack: f64,
    pub fde_normal: f64,
    pub fde_attack: f64,
    pub left_normal: f64,
    pub left_attack: f64,
    pub right_normal: f64,
    pub right_attack: f64,
    pub front_normal: f64,
    pub front_attack: f64,
    pub rear_normal: f64,
    pub rear_attack: f64,
    pub over_half_lane: f64,
    /// Planning severity after the attack, counted over the group's cells.
    pub severity_none: usize,
    pub severity_comfortable: usize,
    pub severity_hard_brake: usize,
    pub severity_emergency: usize,
}

/// One row per successful cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCsvRow {
    pub model: String,
    pub scene: String,
    pub optimizer: OptimizerKind,
    pub objective: Metric,
    pub l_p: usize,
    pub max_deviation: f64,
    pub targeted_before: f64,
    pub targeted_after: f64,
    pub ade_before: f64,
    pub ade_after: f64,
    pub theta: f64,
    pub feasible: bool,
    pub severity_before: Option<Severity>,
    pub severity_after: Option<Severity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetedCsvRow {
    pub model: String,
    pub optimizer: OptimizerKind,
    pub objective: Metric,
    pub l_p: usize,
    pub max_deviation: f64,
    pub cells: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCsvRow {
    pub model: String,
    pub objective: Metric,
    pub l_p: usize,
    pub max_deviation: f64,
    pub before: f64,
    pub pgd: f64,
    pub pso: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCsvRow {
    pub source: String,
    pub target: String,
    pub scene: String,
    pub objective: Metric,
    pub optimizer: OptimizerKind,
    pub l_p: usize,
    pub max_deviation: f64,
    pub score_percent: f64,
    pub dropped_metrics: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummaryCsvRow {
    pub source: String,
    pub target: String,
    pub cells: usize,
    pub mean_score_percent: f64,
    pub at_least_half: f64,
}

type GroupKey = (String, OptimizerKind, usize, u64);

fn severity_counts(reports: &[CellReport]) -> BTreeMap<GroupKey, [usize; 4]> {
    let mut out: BTreeMap<GroupKey, [usize; 4]> = BTreeMap::new();
    for r in reports {
        let counts = out.entry((r.model.clone(), r.optimizer, r.l_p, r.max_deviation.to_bits())).or_default();
        if let Some(impact) = &r.impact {
            counts[impact.after.severity as usize] += 1;
        }
    }
    out
}

pub(crate) fn aggregate_rows(cells: &[CellRecord], reports: &[CellReport]) -> Vec<AggregateCsvRow> {
    let severity = severity_counts(reports);
    aggregate(cells)
        .into_iter()
        .map(|r| {
            let s = severity
                .get(&(r.model.clone(), r.optimizer, r.l_p, r.max_deviation.to_bits()))
                .copied()
                .unwrap_or_default();
            AggregateCsvRow {
                model: r.model,
                optimizer: r.optimizer,
                l_p: r.l_p,
                max_deviation: r.max_deviation,
                aggregation: r.aggregation.name().to_string(),
                scenes: r.scenes,
                cells: r.cells,
                ade_normal: r.normal[0],
                ade_attack: r.attack[0],
                fde_normal: r.normal[1],
                fde_attack: r.attack[1],
                left_normal: r.normal[2],
                left_attack: r.attack[2],
                right_normal: r.normal[3],
                right_attack: r.attack[3],
                front_normal: r.normal[4],
                front_attack: r.attack[4],
                rear_normal: r.normal[5],
                rear_attack: r.attack[5],
                over_half_lane: r.over_half_lane,
                severity_none: s[Severity::None as usize],
                severity_comfortable: s[Severity::Comfortable as usize],
                severity_hard_brake: s[Severity::HardBrake as usize],
                severity_emergency: s[Severity::Emergency as usize],
            }
        })
        .collect()
}

fn cell_rows(reports: &[CellReport]) -> Vec<CellCsvRow> {
    reports
        .iter()
        .map(|r| CellCsvRow {
            model: r.model.clone(),
            scene: r.scene.clone(),
            optimizer: r.optimizer,
            objective: r.objective,
            l_p: r.l_p,
            max_deviation: r.max_deviation,
            targeted_before: r.before.get(r.objective),
            targeted_after: r.after.get(r.objective),
            ade_before: r.before.ade,
            ade_after: r.after.ade,
            theta: r.theta.best,
            feasible: r.feasible,
            severity_before: r.impact.as_ref().map(|i| i.before.severity),
            severity_after: r.impact.as_ref().map(|i| i.after.severity),
        })
        .collect()
}

/// Runs `grid` and writes cells, errors, aggregate, targeted, comparison
/// and (optionally) transfer tables under `dir`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_grid(
    out: &mut OutputWriter,
    dir: &str,
    scenes: &[Scene],
    models: &[(String, &dyn Predictor)],
    grid: &AttackGrid,
    defense: Option<&DefensePipeline>,
    placement: &AvPlacement,
    transfer: bool,
) -> Result<SuiteReport, CliError> {
    let report = run_attack_suite(scenes, models, grid, defense);
    let reports: Vec<CellReport> =
        report.cells.iter().map(|c| cell_report(c, &scenes[c.scene_index], placement)).collect();

    let mut jsonl = String::new();
    for r in &reports {
        jsonl.push_str(&serde_json::to_string(r).map_err(|e| CliError::Run(e.to_string()))?);
        jsonl.push('\n');
    }
    out.write_text(&format!("{dir}/cells.jsonl"), &jsonl)?;
    out.write_csv(&format!("{dir}/cells.csv"), &cell_rows(&reports))?;
    out.write_json(&format!("{dir}/errors.json"), &report.errors)?;

    let aggregate = aggregate_rows(&report.cells, &reports);
    out.write_csv(&format!("{dir}/aggregate.csv"), &aggregate)?;

    let targeted: Vec<TargetedCsvRow> = targeted_rows(&report.cells)
        .into_iter()
        .map(|r| TargetedCsvRow {
            model: r.model,
            optimizer: r.optimizer,
            objective: r.objective,
            l_p: r.l_p,
            max_deviation: r.max_deviation,
            cells: r.cells,
            before: r.before,
            after: r.after,
        })
        .collect();
    out.write_csv(&format!("{dir}/targeted.csv"), &targeted)?;

    let comparison: Vec<ComparisonCsvRow> = comparison_rows(&report.cells)
        .into_iter()
        .map(|r| ComparisonCsvRow {
            model: r.model,
            objective: r.objective,
            l_p: r.l_p,
            max_deviation: r.max_deviation,
            before: r.before,
            pgd: r.pgd,
            pso: r.pso,
        })
        .collect();
    if !comparison.is_empty() {
        out.write_csv(&format!("{dir}/comparison.csv"), &comparison)?;
    }

    if transfer && models.len() > 1 {
        let (cells, summary) = transfer_matrix(scenes, &report.cells, models, defense);
        let rows: Vec<TransferCsvRow> = cells
            .into_iter()
            .map(|t| TransferCsvRow {
                source: t.source,
                target: t.target,
                scene: t.scene,
                objective: t.objective,
                optimizer: t.optimizer,
                l_p: t.l_p,
                max_deviation: t.max_deviation,
                score_percent: t.score_percent,
                dropped_metrics: t.dropped.iter().map(|m| m.name()).collect::<Vec<_>>().join(" "),
            })
            .collect();
        out.write_csv(&format!("{dir}/transfer.csv"), &rows)?;
        let summary: Vec<TransferSummaryCsvRow> = summary
            .into_iter()
            .map(|s| TransferSummaryCsvRow {
                source: s.source,
                target: s.target,
                cells: s.cells,
                mean_score_percent: s.mean_score_percent,
                at_least_half: s.at_least_half,
            })
            .collect();
        out.write_csv(&format!("{dir}/transfer_summary.csv"), &summary)?;
    }
    Ok(report)
}
