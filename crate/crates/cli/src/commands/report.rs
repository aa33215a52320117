use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use advtraj::mitigation::RocPoint;
use serde::de::DeserializeOwned;

use super::tables::{AggregateCsvRow, ComparisonCsvRow, TargetedCsvRow, TransferSummaryCsvRow};
use super::{MitigationRow, RunSummary};
use crate::chart::{line_chart, Series};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Completion};
use crate::io::OutputWriter;

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Option<Vec<T>>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map(Some)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{v:.3}")
    }
}

/// Lines of `after` against `x` for each (model, optimizer, objective),
/// with the other sweep parameter held at `fixed`.
fn sweep_chart(rows: &[TargetedCsvRow], over_lp: bool) -> Option<String> {
    let fixed = if over_lp {
        rows.iter().map(|r| r.max_deviation).fold(f64::NEG_INFINITY, f64::max)
    } else {
        rows.iter().map(|r| r.l_p).min()? as f64
    };
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        let (x, other) = if over_lp { (r.l_p as f64, r.max_deviation) } else { (r.max_deviation, r.l_p as f64) };
        if other == fixed {
            series.entry(format!("{} {} {}", r.model, r.optimizer, r.objective)).or_default().push((x, r.after));
        }
    }
    if series.values().all(|p| p.len() < 2) {
        return None;
    }
    let series: Vec<Series> = series
        .into_iter()
        .map(|(label, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect();
    Some(if over_lp {
        line_chart(
            &format!("Targeted error vs l_p (bound {fixed} m)"),
            "l_p (frames)",
            "mean targeted metric (m)",
            &series,
        )
    } else {
        line_chart(
            &format!("Targeted error vs deviation bound (l_p = {fixed})"),
            "max deviation (m)",
            "mean targeted metric (m)",
            &series,
        )
    })
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let root = &cfg.out;
    let aggregate: Option<Vec<AggregateCsvRow>> = read_rows(&root.join("attack/aggregate.csv"))?;
    let targeted: Option<Vec<TargetedCsvRow>> = read_rows(&root.join("attack/targeted.csv"))?;
    let comparison: Option<Vec<ComparisonCsvRow>> = read_rows(&root.join("attack/comparison.csv"))?;
    let transfer: Option<Vec<TransferSummaryCsvRow>> = read_rows(&root.join("attack/transfer_summary.csv"))?;
    let mitigation: Option<Vec<MitigationRow>> = read_rows(&root.join("mitigation/summary.csv"))?;
    if aggregate.is_none() && mitigation.is_none() {
        return Err(CliError::Config(format!(
            "nothing to report under {}; run `attack` or `mitigate` first",
            root.display()
        )));
    }
    let mut out = OutputWriter::new(root);
    let mut md = String::from("# Attack and mitigation report\n");

    if let Some(rows) = &aggregate {
        md.push_str("\n## Normal vs attack (matched objective)\n\n");
        md.push_str("| model | optimizer | l_p | bound | ADE | FDE | Left | Right | Front | Rear | > half lane |\n");
        md.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        for r in rows.iter().filter(|r| r.aggregation == "matched") {
            let pair = |n: f64, a: f64| format!("{} / {}", cell(n), cell(a));
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                r.model,
                r.optimizer,
                r.l_p,
                r.max_deviation,
                pair(r.ade_normal, r.ade_attack),
                pair(r.fde_normal, r.fde_attack),
                pair(r.left_normal, r.left_attack),
                pair(r.right_normal, r.right_attack),
                pair(r.front_normal, r.front_attack),
                pair(r.rear_normal, r.rear_attack),
                cell(r.over_half_lane),
            );
        }
    }
    if let Some(rows) = &targeted {
        for (over_lp, file) in [(true, "lp_sweep.svg"), (false, "deviation_sweep.svg")] {
            if let Some(svg) = sweep_chart(rows, over_lp) {
                out.write_text(&format!("report/{file}"), &svg)?;
                let _ = writeln!(md, "\n![{file}]({file})");
            }
        }
    }
    if let Some(rows) = comparison.as_ref().filter(|r| !r.is_empty()) {
        md.push_str("\n## White box vs black box\n\n| model | objective | l_p | bound | before | PGD | PSO |\n|---|---|---|---|---|---|---|\n");
        for r in rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} |",
                r.model,
                r.objective,
                r.l_p,
                r.max_deviation,
                cell(r.before),
                cell(r.pgd),
                cell(r.pso)
            );
        }
    }
    if let Some(rows) = &transfer {
        md.push_str("\n## Transferability\n\n| source | target | cells | mean score % | share >= 50% |\n|---|---|---|---|---|\n");
        for r in rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                r.source,
                r.target,
                r.cells,
                cell(r.mean_score_percent),
                cell(r.at_least_half)
            );
        }
    }
    if let Some(rows) = &mitigation {
        md.push_str("\n## Mitigation (ADE)\n\n| variant | optimizer | l_p | bound | normal | attack | normal change % | attack change % |\n|---|---|---|---|---|---|---|---|\n");
        for r in rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                r.variant,
                r.optimizer,
                r.l_p,
                r.max_deviation,
                cell(r.normal_ade),
                cell(r.attack_ade),
                cell(r.normal_ade_change_pct),
                cell(r.attack_ade_change_pct)
            );
        }
        let mut series = Vec::new();
        for name in ["rule_based", "kernel_classifier"] {
            if let Some(points) = read_rows::<RocPoint>(&root.join(format!("mitigation/roc_{name}.csv")))? {
                series.push(Series { label: name.into(), points: points.iter().map(|p| (p.fpr, p.tpr)).collect() });
            }
        }
        if !series.is_empty() {
            out.write_text(
                "report/roc.svg",
                &line_chart("Detector ROC", "false positive rate", "true positive rate", &series),
            )?;
            md.push_str("\n![roc.svg](roc.svg)\n");
        }
    }
    out.write_text("report/summary.md", &md)?;
    let manifest = out.finish("report", cfg)?;
    Ok(RunSummary { completion: Completion::Success, manifest })
}
