use std::collections::BTreeMap;

use advtraj::attacks::{run_attack_suite, AttackGrid, CellRecord};
use advtraj::constraints::PerturbationConstraints;
use advtraj::geometry::Vec2;
use advtraj::metrics::Metric;
use advtraj::mitigation::{train_detector, Augmenter, DefensePipeline, DetectorKind, TrainedDetector};
use advtraj::predictors::{Model, ModelKind, Predictor};
use advtraj::scene::Scene;
use serde::{Deserialize, Serialize};

use super::tables::run_grid;
use super::train::fit;
use super::{RunSummary, MODELS_DIR};
use crate::config::{DetectorChoice, ExperimentConfig, Variant};
use crate::error::{CliError, Completion};
use crate::io::OutputWriter;

pub const BASELINE: &str = "baseline";

/// Normal-vs-attack errors of one defense variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationRow {
    pub variant: String,
    /// `pgd`, `pso`, or `all` for both pooled.
    pub optimizer: String,
    pub l_p: usize,
    pub max_deviation: f64,
    pub scenes: usize,
    pub normal_ade: f64,
    pub attack_ade: f64,
    pub normal_fde: f64,
    pub attack_fde: f64,
    /// Relative to the undefended baseline, percent.
    pub normal_ade_change_pct: f64,
    pub attack_ade_change_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectorRow {
    detector: String,
    normal_samples: usize,
    adversarial_samples: usize,
    auc: f64,
    threshold: f64,
    youden_tpr: f64,
    youden_fpr: f64,
}

/// Clean and attacked target histories for fitting detectors. Normal
/// samples are every object's first `L_I` frames; adversarial ones are the
/// target's first `L_I` frames after a single-frame attack on `model`.
pub fn detector_corpus(scenes: &[Scene], model: &dyn Predictor, grid: &AttackGrid) -> (Vec<Vec<Vec2>>, Vec<Vec<Vec2>>) {
    let l_i = model.l_i();
    let normal = scenes.iter().flat_map(|s| s.trajectories().iter().map(|t| t.positions()[..l_i].to_vec())).collect();
    let single = AttackGrid { l_ps: vec![1], ..grid.clone() };
    let models: Vec<(String, &dyn Predictor)> = vec![("detector".into(), model)];
    let report = run_attack_suite(scenes, &models, &single, None);
    let adversarial = report
        .cells
        .iter()
        .map(|c| {
            let base = scenes[c.scene_index].target().positions();
            base[..l_i].iter().zip(c.result.perturbation.offsets()).map(|(p, d)| *p + *d).collect()
        })
        .collect();
    (normal, adversarial)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Rows per optimizer and pooled, for every (l_p, bound) of the grid.
/// Attacked errors come from cells whose objective is that same metric.
pub(crate) fn summarize(variant: &str, cells: &[CellRecord]) -> Vec<MitigationRow> {
    let mut groups: BTreeMap<(String, usize, u64), Vec<&CellRecord>> = BTreeMap::new();
    for c in cells {
        let r = &c.result;
        for label in [r.optimizer.name().to_string(), "all".to_string()] {
            groups.entry((label, r.l_p, r.max_deviation.to_bits())).or_default().push(c);
        }
    }
    groups
        .into_iter()
        .map(|((optimizer, l_p, dev), cs)| {
            let of = |m: Metric| cs.iter().filter(move |c| c.result.objective == m);
            let mut scenes: Vec<usize> = cs.iter().map(|c| c.scene_index).collect();
            scenes.sort_unstable();
            scenes.dedup();
            MitigationRow {
                variant: variant.to_string(),
                optimizer,
                l_p,
                max_deviation: f64::from_bits(dev),
                scenes: scenes.len(),
                normal_ade: mean(cs.iter().map(|c| c.result.before.ade)),
                attack_ade: mean(of(Metric::Ade).map(|c| c.result.after.ade)),
                normal_fde: mean(cs.iter().map(|c| c.result.before.fde)),
                attack_fde: mean(of(Metric::Fde).map(|c| c.result.after.fde)),
                normal_ade_change_pct: f64::NAN,
                attack_ade_change_pct: f64::NAN,
            }
        })
        .collect()
}

fn fill_changes(rows: &mut [MitigationRow]) {
    let base: Vec<MitigationRow> = rows.iter().filter(|r| r.variant == BASELINE).cloned().collect();
    for r in rows.iter_mut() {
        if let Some(b) =
            base.iter().find(|b| b.optimizer == r.optimizer && b.l_p == r.l_p && b.max_deviation == r.max_deviation)
        {
            r.normal_ade_change_pct = 100.0 * (r.normal_ade - b.normal_ade) / b.normal_ade;
            r.attack_ade_change_pct = 100.0 * (r.attack_ade - b.attack_ade) / b.attack_ade;
        }
    }
}

fn detector_row(name: &str, d: &TrainedDetector, normal: usize, adversarial: usize) -> DetectorRow {
    let y = d.roc.youden();
    DetectorRow {
        detector: name.to_string(),
        normal_samples: normal,
        adversarial_samples: adversarial,
        auc: d.roc.auc,
        threshold: d.threshold,
        youden_tpr: y.tpr,
        youden_fpr: y.fpr,
    }
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let m = &cfg.mitigation;
    let spec = cfg.models.iter().find(|s| s.name == m.base_model).ok_or_else(|| {
        CliError::Config(format!("mitigation.base_model `{}` is not a configured model", m.base_model))
    })?;
    let retrains = m.variants.iter().any(|v| matches!(v, Variant::Augmentation | Variant::TrainSmoothing));
    if retrains && spec.kind != ModelKind::Neural {
        return Err(CliError::Config(format!(
            "augmentation and train_smoothing retrain the base model, which must be neural (`{}` is {})",
            spec.name, spec.kind
        )));
    }
    let train_set = super::train_scenes(cfg)?;
    let scenes = super::test_scenes(cfg)?;
    let models = super::load_models(cfg)?;
    let base: &Model = &models.iter().find(|(n, _)| *n == m.base_model).expect("validated above").1;
    let bounds = super::bounds(cfg)?;
    let grid = super::attack::grid(cfg, bounds);
    let f = cfg.dataset.preset.timing().2;
    let mut out = OutputWriter::new(&cfg.out);

    let (normal, adversarial) = detector_corpus(&train_set, base, &grid);
    let fit_detector =
        |kind| train_detector(&normal, &adversarial, f, kind).map_err(|e| CliError::Run(format!("detector: {e}")));
    let rule = fit_detector(DetectorKind::RuleBased)?;
    let c = match m.detector {
        DetectorChoice::KernelClassifier { c } => c,
        DetectorChoice::RuleBased => 1.0,
    };
    let classifier = fit_detector(DetectorKind::KernelClassifier { c })?;
    let mut detector_rows = Vec::new();
    for (name, d) in [("rule_based", &rule), ("kernel_classifier", &classifier)] {
        out.write_text(&format!("mitigation/detector_{name}.json"), &d.detector.to_json())?;
        let mut roc = Vec::new();
        d.roc.write_csv(&mut roc).map_err(|e| CliError::Run(e.to_string()))?;
        out.write_bytes(&format!("mitigation/roc_{name}.csv"), &roc)?;
        detector_rows.push(detector_row(name, d, normal.len(), adversarial.len()));
    }
    out.write_csv("mitigation/detectors.csv", &detector_rows)?;
    let chosen = match m.detector {
        DetectorChoice::RuleBased => rule.detector.clone(),
        DetectorChoice::KernelClassifier { .. } => classifier.detector.clone(),
    };

    let max_dev = cfg.attack.max_deviations.iter().copied().fold(0.0, f64::max);
    let mut constraints = PerturbationConstraints::new(bounds, max_dev);
    constraints.context_frames = cfg.attack.context_frames;
    let augmenter = Augmenter { constraints, probability: m.augment_probability };

    let mut rows = Vec::new();
    let mut failed = 0;
    let mut variants: Vec<(String, Option<Variant>)> = vec![(BASELINE.to_string(), None)];
    variants.extend(m.variants.iter().map(|v| (v.name().to_string(), Some(*v))));
    for (name, variant) in variants {
        let (model, defense): (Model, Option<DefensePipeline>) = match variant {
            None => (base.clone(), None),
            Some(Variant::Augmentation) => (fit(spec, cfg, &train_set, Some(&augmenter), None)?.0, None),
            Some(Variant::TrainSmoothing) => (fit(spec, cfg, &train_set, None, Some(m.smoother.clone()))?.0, None),
            Some(Variant::DetectThenSmooth) => (
                base.clone(),
                Some(DefensePipeline::DetectThenSmooth { detector: chosen.clone(), smoother: m.smoother.clone() }),
            ),
            Some(Variant::AlwaysSmooth) => {
                (base.clone(), Some(DefensePipeline::AlwaysSmooth { smoother: m.smoother.clone() }))
            }
        };
        if matches!(variant, Some(Variant::Augmentation | Variant::TrainSmoothing)) {
            out.write_text(&format!("mitigation/{MODELS_DIR}/{name}.json"), &model.to_json())?;
        }
        let refs: Vec<(String, &dyn Predictor)> = vec![(m.base_model.clone(), &model)];
        let report = run_grid(
            &mut out,
            &format!("mitigation/{name}"),
            &scenes,
            &refs,
            &grid,
            defense.as_ref(),
            &cfg.planning,
            false,
        )?;
        failed += report.errors.len();
        rows.extend(summarize(&name, &report.cells));
    }
    fill_changes(&mut rows);
    out.write_csv("mitigation/summary.csv", &rows)?;

    let manifest = out.finish("mitigate", cfg)?;
    Ok(RunSummary {
        completion: if failed == 0 { Completion::Success } else { Completion::PartialFailure { failed } },
        manifest,
    })
}
