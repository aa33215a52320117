//! Test-time defense: smooth every history, or only the flagged ones.

use serde::{Deserialize, Serialize};

use super::{Detector, MitigationError, SmootherSpec};
use crate::predictors::{PredictedTrajectory, PredictionRequest, Predictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DefensePipeline {
    AlwaysSmooth { smoother: SmootherSpec },
    DetectThenSmooth { detector: Detector, smoother: SmootherSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefendedPrediction {
    pub predictions: Vec<PredictedTrajectory>,
    /// Per object, whether its history was smoothed.
    pub flags: Vec<bool>,
}

impl DefensePipeline {
    pub fn smoother(&self) -> &SmootherSpec {
        match self {
            DefensePipeline::AlwaysSmooth { smoother } | DefensePipeline::DetectThenSmooth { smoother, .. } => smoother,
        }
    }

    /// Whether a history goes through the smoother.
    pub fn flags(&self, points: &[crate::geometry::Vec2], frequency_hz: f64) -> Result<bool, MitigationError> {
        match self {
            DefensePipeline::AlwaysSmooth { .. } => Ok(true),
            DefensePipeline::DetectThenSmooth { detector, .. } => {
                Ok(detector.detect(points, frequency_hz)?.adversarial)
            }
        }
    }

    /// The request the model actually sees, with per-object flags.
    pub fn apply(
        &self,
        req: &PredictionRequest,
        frequency_hz: f64,
    ) -> Result<(PredictionRequest, Vec<bool>), MitigationError> {
        let mut flags = Vec::with_capacity(req.histories().len());
        for h in req.histories() {
            flags.push(self.flags(&h.points, frequency_hz)?);
        }
        let smoother = self.smoother();
        let mut i = 0;
        let mut failure = None;
        let out = req.map_histories(|pts| {
            let flagged = flags[i];
            i += 1;
            if !flagged {
                return pts.to_vec();
            }
            smoother.smooth_points(pts).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                pts.to_vec()
            })
        });
        match failure {
            Some(e) => Err(e),
            None => Ok((out, flags)),
        }
    }
}

/// Predictions after the defense; `None` means undefended.
pub fn defended_predict(
    model: &dyn Predictor,
    req: &PredictionRequest,
    pipeline: Option<&DefensePipeline>,
    frequency_hz: f64,
) -> Result<DefendedPrediction, MitigationError> {
    match pipeline {
        None => Ok(DefendedPrediction { predictions: model.predict(req)?, flags: vec![false; req.histories().len()] }),
        Some(p) => {
            let (seen, flags) = p.apply(req, frequency_hz)?;
            Ok(DefendedPrediction { predictions: model.predict(&seen)?, flags })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::predictors::{ConstantVelocity, History};

    fn request() -> PredictionRequest {
        let wiggle: Vec<Vec2> =
            (0..6).map(|i| Vec2::new(2.0 * i as f64, if i % 2 == 0 { 0.4 } else { -0.4 })).collect();
        let line: Vec<Vec2> = (0..6).map(|i| Vec2::new(3.0 * i as f64, 5.0)).collect();
        PredictionRequest::new(
            vec![History { id: "ov".into(), points: wiggle }, History { id: "n".into(), points: line }],
            "ov",
            4,
        )
        .unwrap()
    }

    #[test]
    fn branch_equivalences() {
        let m = ConstantVelocity::new(6, 4);
        let r = request();
        let s = SmootherSpec::default();
        let plain = defended_predict(&m, &r, None, 2.0).unwrap();
        let never = DefensePipeline::DetectThenSmooth { detector: Detector::Never, smoother: s.clone() };
        assert_eq!(defended_predict(&m, &r, Some(&never), 2.0).unwrap().predictions, plain.predictions);
        let always = DefensePipeline::DetectThenSmooth { detector: Detector::Always, smoother: s.clone() };
        let smooth_all = DefensePipeline::AlwaysSmooth { smoother: s };
        let a = defended_predict(&m, &r, Some(&always), 2.0).unwrap();
        assert_eq!(a, defended_predict(&m, &r, Some(&smooth_all), 2.0).unwrap());
        assert_ne!(a.predictions, plain.predictions);
        // the straight neighbor is a fixed point of the smoother
        for (p, q) in a.predictions[1].points.iter().zip(&plain.predictions[1].points) {
            assert!((*p - *q).norm() < 1e-12);
        }
    }
}
