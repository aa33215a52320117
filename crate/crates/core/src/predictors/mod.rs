//! Trajectory predictors behind one interface.
//!
//! A [`PredictionRequest`] holds the last `L_I` positions of every object in
//! a scene and names one of them as the target. Predictors return `L_O`
//! future positions per object, and can differentiate the target's
//! predicted future with respect to the target's own history.

mod neural;
mod physics;
mod training;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::scene::Scene;

pub use neural::{DenseLayer, NeuralPredictor, DEFAULT_HIDDEN};
pub use physics::{ConstantAcceleration, ConstantVelocity};
pub use training::{train, SampleHook, TrainOptions, TrainOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("history of `{id}` has {got} points, the model expects {expected}")]
    HistoryLength { id: String, got: usize, expected: usize },
    #[error("request asks for {got} future frames, the model predicts {expected}")]
    HorizonMismatch { got: usize, expected: usize },
    #[error("target `{0}` is not among the request's histories")]
    MissingTarget(String),
    #[error("request has no histories")]
    Empty,
    #[error("history of `{0}` contains a non-finite coordinate")]
    NonFinite(String),
    #[error("histories have different lengths ({0} and {1})")]
    RaggedHistories(usize, usize),
    #[error("window ending at frame {end} needs {l_i} history frames within {frames} scene frames")]
    WindowOutOfRange { end: usize, l_i: usize, frames: usize },
    #[error("model `{0}` does not provide input gradients")]
    GradientUnavailable(String),
    #[error("loss gradient has {got} entries, expected {expected}")]
    GradientLength { got: usize, expected: usize },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("no training windows: every scene is shorter than L_I + L_O or the dataset is empty")]
    EmptyDataset,
}

/// Observed positions of one object, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub id: String,
    pub points: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRequest {
    histories: Vec<History>,
    target: usize,
    l_o: usize,
}

impl PredictionRequest {
    pub fn new(histories: Vec<History>, target_id: &str, l_o: usize) -> Result<Self, PredictError> {
        let first = histories.first().ok_or(PredictError::Empty)?.points.len();
        for h in &histories {
            if h.points.len() != first {
                return Err(PredictError::RaggedHistories(first, h.points.len()));
            }
            if h.points.iter().any(|p| !p.is_finite()) {
                return Err(PredictError::NonFinite(h.id.clone()));
            }
        }
        let target = histories
            .iter()
            .position(|h| h.id == target_id)
            .ok_or_else(|| PredictError::MissingTarget(target_id.to_string()))?;
        Ok(Self { histories, target, l_o })
    }

    /// Histories of every object over frames `end + 1 - l_i ..= end`.
    pub fn from_scene(scene: &Scene, end: usize, l_i: usize, l_o: usize) -> Result<Self, PredictError> {
        if end + 1 < l_i || end >= scene.frame_count() {
            return Err(PredictError::WindowOutOfRange { end, l_i, frames: scene.frame_count() });
        }
        let start = end + 1 - l_i;
        let histories = scene
            .trajectories()
            .iter()
            .map(|t| History {
                id: t.id().to_string(),
                points: t.states()[start..=end].iter().map(|s| s.position).collect(),
            })
            .collect();
        Self::new(histories, scene.target_id(), l_o)
    }

    pub fn histories(&self) -> &[History] {
        &self.histories
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target_id(&self) -> &str {
        &self.histories[self.target].id
    }

    pub fn target_history(&self) -> &[Vec2] {
        &self.histories[self.target].points
    }

    pub fn history_len(&self) -> usize {
        self.histories[0].points.len()
    }

    pub fn l_o(&self) -> usize {
        self.l_o
    }

    /// Same request with the target's history replaced.
    pub fn with_target_history(&self, points: Vec<Vec2>) -> Self {
        assert_eq!(points.len(), self.history_len(), "history length changed");
        let mut out = self.clone();
        out.histories[self.target].points = points;
        out
    }

    /// Same request with every history passed through `f`.
    pub fn map_histories(&self, mut f: impl FnMut(&[Vec2]) -> Vec<Vec2>) -> Self {
        let mut out = self.clone();
        for h in &mut out.histories {
            h.points = f(&h.points);
        }
        out
    }

    /// Mean position of all non-`index` objects' last points relative to
    /// object `index`'s last point, or `None` without neighbors.
    pub fn neighbor_offset(&self, index: usize) -> Option<Vec2> {
        let n = self.histories.len();
        if n < 2 {
            return None;
        }
        let own = *self.histories[index].points.last().expect("non-empty history");
        let sum: Vec2 = self
            .histories
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != index)
            .map(|(_, h)| *h.points.last().expect("non-empty history") - own)
            .sum();
        Some(sum / (n - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTrajectory {
    pub id: String,
    pub points: Vec<Vec2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ConstantVelocity,
    ConstantAcceleration,
    Neural,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ConstantVelocity => "constant_velocity",
            ModelKind::ConstantAcceleration => "constant_acceleration",
            ModelKind::Neural => "neural",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constant_velocity" | "cv" => Ok(ModelKind::ConstantVelocity),
            "constant_acceleration" | "ca" => Ok(ModelKind::ConstantAcceleration),
            "neural" | "nn" => Ok(ModelKind::Neural),
            _ => Err(format!("unknown model kind `{s}`")),
        }
    }
}

pub trait Predictor: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn l_i(&self) -> usize;
    fn l_o(&self) -> usize;

    /// Future of object `index`.
    fn predict_object(&self, req: &PredictionRequest, index: usize) -> Result<Vec<Vec2>, PredictError>;

    /// Gradient of `Σ_k loss_gradient[k] · p_k` over the target's predicted
    /// points `p_k`, with respect to each point of the target's history.
    fn input_gradient(&self, req: &PredictionRequest, loss_gradient: &[Vec2]) -> Result<Vec<Vec2>, PredictError>;

    fn predict_target(&self, req: &PredictionRequest) -> Result<Vec<Vec2>, PredictError> {
        self.predict_object(req, req.target_index())
    }

    fn predict(&self, req: &PredictionRequest) -> Result<Vec<PredictedTrajectory>, PredictError> {
        (0..req.histories().len())
            .map(|i| {
                Ok(PredictedTrajectory { id: req.histories()[i].id.clone(), points: self.predict_object(req, i)? })
            })
            .collect()
    }
}

/// Shape checks shared by every model.
pub(crate) fn check_request(req: &PredictionRequest, l_i: usize, l_o: usize) -> Result<(), PredictError> {
    if req.history_len() != l_i {
        return Err(PredictError::HistoryLength {
            id: req.histories()[0].id.clone(),
            got: req.history_len(),
            expected: l_i,
        });
    }
    if req.l_o() != l_o {
        return Err(PredictError::HorizonMismatch { got: req.l_o(), expected: l_o });
    }
    Ok(())
}

pub(crate) fn check_loss_gradient(loss_gradient: &[Vec2], l_o: usize) -> Result<(), PredictError> {
    if loss_gradient.len() != l_o {
        return Err(PredictError::GradientLength { got: loss_gradient.len(), expected: l_o });
    }
    Ok(())
}

/// Any built-in model; this is also the checkpoint format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    ConstantVelocity(ConstantVelocity),
    ConstantAcceleration(ConstantAcceleration),
    Neural(NeuralPredictor),
}

impl Model {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictError> {
        let model: Model = serde_json::from_str(text).map_err(|e| PredictError::Checkpoint(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), PredictError> {
        let bad = |m: &str| Err(PredictError::Checkpoint(m.to_string()));
        match self {
            Model::ConstantVelocity(m) if m.l_i < 2 => bad("constant velocity needs l_i >= 2"),
            Model::ConstantAcceleration(m) if m.l_i < 3 => bad("constant acceleration needs l_i >= 3"),
            Model::Neural(n) => n.validate().map_err(PredictError::Checkpoint),
            _ if self.l_o() == 0 => bad("l_o must be positive"),
            _ => Ok(()),
        }
    }

    fn inner(&self) -> &dyn Predictor {
        match self {
            Model::ConstantVelocity(m) => m,
            Model::ConstantAcceleration(m) => m,
            Model::Neural(m) => m,
        }
    }
}

impl Predictor for Model {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }
    fn l_i(&self) -> usize {
        self.inner().l_i()
    }
    fn l_o(&self) -> usize {
        self.inner().l_o()
    }
    fn predict_object(&self, req: &PredictionRequest, index: usize) -> Result<Vec<Vec2>, PredictError> {
        self.inner().predict_object(req, index)
    }
    fn input_gradient(&self, req: &PredictionRequest, loss_gradient: &[Vec2]) -> Result<Vec<Vec2>, PredictError> {
        self.inner().input_gradient(req, loss_gradient)
    }
}

impl From<ConstantVelocity> for Model {
    fn from(m: ConstantVelocity) -> Self {
        Model::ConstantVelocity(m)
    }
}

impl From<ConstantAcceleration> for Model {
    fn from(m: ConstantAcceleration) -> Self {
        Model::ConstantAcceleration(m)
    }
}

impl From<NeuralPredictor> for Model {
    fn from(m: NeuralPredictor) -> Self {
        Model::Neural(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ObjectKind, Trajectory};

    fn hist(id: &str, pts: &[(f64, f64)]) -> History {
        History { id: id.into(), points: pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect() }
    }

    #[test]
    fn request_validation() {
        assert_eq!(PredictionRequest::new(vec![], "a", 3).unwrap_err(), PredictError::Empty);
        let r = PredictionRequest::new(vec![hist("a", &[(0.0, 0.0), (1.0, 0.0)]), hist("b", &[(0.0, 0.0)])], "a", 3);
        assert_eq!(r.unwrap_err(), PredictError::RaggedHistories(2, 1));
        let r = PredictionRequest::new(vec![hist("a", &[(0.0, 0.0)])], "z", 3);
        assert_eq!(r.unwrap_err(), PredictError::MissingTarget("z".into()));
    }

    #[test]
    fn neighbor_offset_is_mean_relative_position() {
        let r = PredictionRequest::new(
            vec![
                hist("a", &[(0.0, 0.0), (1.0, 1.0)]),
                hist("b", &[(0.0, 0.0), (3.0, 1.0)]),
                hist("c", &[(0.0, 0.0), (1.0, 5.0)]),
            ],
            "a",
            2,
        )
        .unwrap();
        assert_eq!(r.neighbor_offset(0), Some(Vec2::new(1.0, 2.0)));
        let solo = PredictionRequest::new(vec![hist("a", &[(0.0, 0.0)])], "a", 2).unwrap();
        assert_eq!(solo.neighbor_offset(0), None);
    }

    #[test]
    fn from_scene_slices_window() {
        let pts: Vec<Vec2> = (0..12).map(|i| Vec2::new(i as f64, 0.0)).collect();
        let t = Trajectory::from_positions("ov", ObjectKind::Vehicle, 0, &pts).unwrap();
        let s = Scene::new("s", 2.0, 6, 6, "ov", vec![t]).unwrap();
        let r = PredictionRequest::from_scene(&s, 5, 6, 6).unwrap();
        assert_eq!(r.target_history()[0].x, 0.0);
        assert_eq!(r.target_history()[5].x, 5.0);
        assert!(PredictionRequest::from_scene(&s, 4, 6, 6).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let models: Vec<Model> = vec![
            ConstantVelocity::new(6, 6).into(),
            ConstantAcceleration::new(6, 6).into(),
            NeuralPredictor::new(6, 6, 8, 1.0, 10.0, 3).into(),
        ];
        for m in models {
            let back = Model::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
        }
        assert!(Model::from_json(r#"{"kind":"constant_velocity","l_i":1,"l_o":3}"#).is_err());
        assert!(Model::from_json(r#"{"kind":"bogus"}"#).is_err());
    }
}
