//! The attack loss and its gradient.

use super::{AttackConfig, AttackError, FutureSource};
use crate::constraints::Perturbation;
use crate::geometry::{step_directions, Vec2};
use crate::metrics::{ade, directional_deviation, fde, Direction, ErrorReport, Metric, MIN_DIRECTION_STEP};
use crate::mitigation::DefensePipeline;
use crate::predictors::{PredictionRequest, Predictor};
use crate::scene::Scene;

fn direction_of(metric: Metric) -> Option<Direction> {
    match metric {
        Metric::Left => Some(Direction::Left),
        Metric::Right => Some(Direction::Right),
        Metric::Front => Some(Direction::Front),
        Metric::Rear => Some(Direction::Rear),
        Metric::Ade | Metric::Fde => None,
    }
}

pub(crate) fn metric_value(metric: Metric, pred: &[Vec2], reference: &[Vec2]) -> f64 {
    let r = match direction_of(metric) {
        Some(d) => directional_deviation(pred, reference, d),
        None if metric == Metric::Ade => ade(pred, reference),
        None => fde(pred, reference),
    };
    r.expect("prediction and reference share the horizon")
}

/// Gradient of `metric(pred, reference)` with respect to each predicted
/// point. Displacement norms are not differentiable at zero; there the
/// gradient is taken as zero.
pub fn metric_gradient(metric: Metric, pred: &[Vec2], reference: &[Vec2]) -> Vec<Vec2> {
    let n = pred.len();
    let unit = |k: usize| (pred[k] - reference[k]).normalized(0.0).unwrap_or(Vec2::ZERO);
    match direction_of(metric) {
        Some(d) => {
            step_directions(reference, MIN_DIRECTION_STEP).into_iter().map(|fw| d.apply(fw) / n as f64).collect()
        }
        None if metric == Metric::Ade => (0..n).map(|k| unit(k) / n as f64).collect(),
        None => {
            let mut g = vec![Vec2::ZERO; n];
            g[n - 1] = unit(n - 1);
            g
        }
    }
}

/// Predictions, defense flags, and errors for each of the `l_p` windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEvaluation {
    pub predictions: Vec<Vec<Vec2>>,
    pub flags: Vec<bool>,
    pub reports: Vec<ErrorReport>,
    pub mean: ErrorReport,
}

/// Everything needed to score a perturbation of one scene's target.
pub struct AttackProblem<'a> {
    model: &'a dyn Predictor,
    defense: Option<&'a DefensePipeline>,
    objective: Metric,
    l_p: usize,
    l_i: usize,
    frequency_hz: f64,
    base: Vec<Vec2>,
    requests: Vec<PredictionRequest>,
    references: Vec<Vec<Vec2>>,
}

impl<'a> AttackProblem<'a> {
    pub fn new(
        scene: &Scene,
        model: &'a dyn Predictor,
        objective: Metric,
        l_p: usize,
        future_source: FutureSource,
        defense: Option<&'a DefensePipeline>,
    ) -> Result<Self, AttackError> {
        if l_p == 0 {
            return Err(AttackError::InvalidConfig("l_p must be at least 1".into()));
        }
        let (l_i, l_o) = (model.l_i(), model.l_o());
        let need = l_i + l_o + l_p - 1;
        if scene.frame_count() < need {
            return Err(AttackError::FrameCount { scene: scene.id().to_string(), need, got: scene.frame_count() });
        }
        let base = scene.target().positions();
        let target =
            scene.trajectories().iter().position(|t| t.id() == scene.target_id()).expect("scene validated its target");

        let mut tracks: Vec<Vec<Vec2>> = scene.trajectories().iter().map(|t| t.positions()).collect();
        if future_source == FutureSource::SelfPredicted {
            let t0 = l_i - 1;
            let now = PredictionRequest::from_scene(scene, t0, l_i, l_o)?;
            let predicted = model.predict(&now)?;
            for (j, track) in tracks.iter_mut().enumerate() {
                if j == target {
                    continue;
                }
                let mut believed = track[..=t0].to_vec();
                believed.extend_from_slice(&predicted[j].points);
                while believed.len() < track.len() {
                    let n = believed.len();
                    let step = believed[n - 1] - believed[n - 2];
                    believed.push(believed[n - 1] + step);
                }
                believed.truncate(track.len());
                *track = believed;
            }
        }
        let ids: Vec<String> = scene.trajectories().iter().map(|t| t.id().to_string()).collect();
        let requests = (0..l_p)
            .map(|alpha| {
                let histories = tracks
                    .iter()
                    .zip(&ids)
                    .map(|(track, id)| crate::predictors::History {
                        id: id.clone(),
                        points: track[alpha..alpha + l_i].to_vec(),
                    })
                    .collect();
                PredictionRequest::new(histories, scene.target_id(), l_o)
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut problem = Self {
            model,
            defense,
            objective,
            l_p,
            l_i,
            frequency_hz: scene.frequency_hz(),
            base,
            requests,
            references: Vec::new(),
        };
        problem.references = match future_source {
            FutureSource::GroundTruth => {
                (0..l_p).map(|alpha| problem.base[alpha + l_i..alpha + l_i + l_o].to_vec()).collect()
            }
            FutureSource::SelfPredicted => {
                let zero = vec![Vec2::ZERO; problem.perturbation_len()];
                problem.predictions(&zero)?.0
            }
        };
        Ok(problem)
    }

    pub fn from_config(scene: &Scene, model: &'a dyn Predictor, cfg: &'a AttackConfig) -> Result<Self, AttackError> {
        cfg.validate()?;
        Self::new(scene, model, cfg.objective, cfg.l_p, cfg.future_source, cfg.defense.as_ref())
    }

    pub fn perturbation_len(&self) -> usize {
        self.l_i + self.l_p - 1
    }

    /// Unperturbed target positions over the whole scene.
    pub fn base_points(&self) -> &[Vec2] {
        &self.base
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    pub fn references(&self) -> &[Vec<Vec2>] {
        &self.references
    }

    /// The request the model sees in window `alpha`, and whether the
    /// defense smoothed the target history.
    fn window(&self, alpha: usize, delta: &[Vec2]) -> Result<(PredictionRequest, bool), AttackError> {
        assert_eq!(delta.len(), self.perturbation_len(), "perturbation length");
        let hist: Vec<Vec2> = (0..self.l_i).map(|j| self.base[alpha + j] + delta[alpha + j]).collect();
        let req = self.requests[alpha].with_target_history(hist);
        match self.defense {
            None => Ok((req, false)),
            Some(d) => {
                let (seen, flags) = d.apply(&req, self.frequency_hz)?;
                Ok((seen, flags[req.target_index()]))
            }
        }
    }

    pub fn predictions(&self, delta: &[Vec2]) -> Result<(Vec<Vec<Vec2>>, Vec<bool>), AttackError> {
        let mut preds = Vec::with_capacity(self.l_p);
        let mut flags = Vec::with_capacity(self.l_p);
        for alpha in 0..self.l_p {
            let (req, flagged) = self.window(alpha, delta)?;
            preds.push(self.model.predict_target(&req)?);
            flags.push(flagged);
        }
        Ok((preds, flags))
    }

    /// `−(1/l_p) Σ_α f(P_α, F_α)`.
    pub fn loss(&self, delta: &[Vec2]) -> Result<f64, AttackError> {
        let (preds, _) = self.predictions(delta)?;
        Ok(-preds.iter().zip(&self.references).map(|(p, r)| metric_value(self.objective, p, r)).sum::<f64>()
            / self.l_p as f64)
    }

    pub fn loss_and_gradient(&self, delta: &[Vec2]) -> Result<(f64, Vec<Vec2>), AttackError> {
        let mut grad = vec![Vec2::ZERO; delta.len()];
        let mut total = 0.0;
        let w = -1.0 / self.l_p as f64;
        for alpha in 0..self.l_p {
            let (req, flagged) = self.window(alpha, delta)?;
            let pred = self.model.predict_target(&req)?;
            let reference = &self.references[alpha];
            total += metric_value(self.objective, &pred, reference);
            let g_pred: Vec<Vec2> =
                metric_gradient(self.objective, &pred, reference).into_iter().map(|g| g * w).collect();
            let mut g_hist = self.model.input_gradient(&req, &g_pred)?;
            if flagged {
                let smoother = self.defense.expect("flags only come from a defense").smoother();
                g_hist = smoother.pull_back(&g_hist);
            }
            for (j, g) in g_hist.into_iter().enumerate() {
                grad[alpha + j] += g;
            }
        }
        Ok((w * total, grad))
    }

    /// All six metrics per window against this problem's references.
    pub fn evaluate(&self, delta: &[Vec2]) -> Result<WindowEvaluation, AttackError> {
        let (predictions, flags) = self.predictions(delta)?;
        let reports: Vec<ErrorReport> = predictions
            .iter()
            .zip(&self.references)
            .map(|(p, r)| ErrorReport::compute(p, r).expect("same horizon"))
            .collect();
        Ok(WindowEvaluation { mean: ErrorReport::mean(&reports), predictions, flags, reports })
    }
}

/// Errors against the recorded futures when `delta` is applied to the
/// target's first `delta.len()` frames.
pub fn evaluate_perturbation(
    scene: &Scene,
    model: &dyn Predictor,
    defense: Option<&DefensePipeline>,
    l_p: usize,
    delta: &Perturbation,
) -> Result<WindowEvaluation, AttackError> {
    let problem = AttackProblem::new(scene, model, Metric::Ade, l_p, FutureSource::GroundTruth, defense)?;
    if delta.len() != problem.perturbation_len() {
        return Err(AttackError::InvalidConfig(format!(
            "perturbation has {} frames, L_I + l_p - 1 = {}",
            delta.len(),
            problem.perturbation_len()
        )));
    }
    problem.evaluate(delta.offsets())
}
