//! Adversarial-history detectors and their training.

use serde::{Deserialize, Serialize};

use super::features::extract_features;
use super::roc::Roc;
use super::svm::{FeatureVector, KernelClassifier};
use super::MitigationError;
use crate::geometry::Vec2;

/// Scores below this never count as a usable rule threshold.
const MIN_RULE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    /// Flags histories whose acceleration-magnitude variance, in (m/s²)²,
    /// exceeds `threshold`.
    RuleBased {
        threshold: f64,
    },
    KernelClassifier(KernelClassifier),
    Never,
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub adversarial: bool,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorKind {
    RuleBased,
    KernelClassifier { c: f64 },
}

impl Detector {
    pub fn rule_based(threshold: f64) -> Result<Self, MitigationError> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(MitigationError::InvalidDetector(format!("rule threshold must be positive, got {threshold}")));
        }
        Ok(Detector::RuleBased { threshold })
    }

    pub fn score(&self, points: &[Vec2], frequency_hz: f64) -> Result<f64, MitigationError> {
        let f = extract_features(points, frequency_hz)?;
        Ok(match self {
            Detector::RuleBased { .. } => f.accel_variance,
            Detector::KernelClassifier(k) => k.decision(&f.to_array()),
            Detector::Never => 0.0,
            Detector::Always => 1.0,
        })
    }

    pub fn detect(&self, points: &[Vec2], frequency_hz: f64) -> Result<Detection, MitigationError> {
        let score = self.score(points, frequency_hz)?;
        let adversarial = match self {
            Detector::RuleBased { threshold } => score > *threshold,
            Detector::KernelClassifier(_) => score > 0.0,
            Detector::Never => false,
            Detector::Always => true,
        };
        Ok(Detection { adversarial, score })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("detectors serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, MitigationError> {
        let d: Detector = serde_json::from_str(text).map_err(|e| MitigationError::InvalidDetector(e.to_string()))?;
        match &d {
            Detector::RuleBased { threshold } => Detector::rule_based(*threshold),
            Detector::KernelClassifier(k) if k.support_vectors.is_empty() => {
                Err(MitigationError::InvalidDetector("classifier has no support vectors".into()))
            }
            _ => Ok(d),
        }
    }
}

/// A fitted detector with the ROC of its scores on the training sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedDetector {
    pub detector: Detector,
    pub roc: Roc,
    /// Operating threshold on the score axis.
    pub threshold: f64,
}

/// Fits a detector on normal and adversarial histories sampled at
/// `frequency_hz`. The rule threshold is the ROC cut with the largest
/// Youden index; the classifier's operating point is its zero level.
pub fn train_detector(
    normal: &[Vec<Vec2>],
    adversarial: &[Vec<Vec2>],
    frequency_hz: f64,
    kind: DetectorKind,
) -> Result<TrainedDetector, MitigationError> {
    if normal.is_empty() || adversarial.is_empty() {
        return Err(MitigationError::EmptyClass);
    }
    let feats = |set: &[Vec<Vec2>]| -> Result<Vec<FeatureVector>, MitigationError> {
        set.iter().map(|p| extract_features(p, frequency_hz).map(|f| f.to_array())).collect()
    };
    let (fn_, fa) = (feats(normal)?, feats(adversarial)?);
    match kind {
        DetectorKind::RuleBased => {
            let sn: Vec<f64> = fn_.iter().map(|f| f[1]).collect();
            let sa: Vec<f64> = fa.iter().map(|f| f[1]).collect();
            let roc = Roc::from_scores(&sn, &sa);
            let threshold = roc.youden().threshold.max(MIN_RULE_THRESHOLD);
            Ok(TrainedDetector { detector: Detector::RuleBased { threshold }, roc, threshold })
        }
        DetectorKind::KernelClassifier { c } => {
            let x: Vec<FeatureVector> = fn_.iter().chain(&fa).copied().collect();
            let y: Vec<f64> = fn_.iter().map(|_| -1.0).chain(fa.iter().map(|_| 1.0)).collect();
            let model = KernelClassifier::fit(&x, &y, c, None);
            if model.support_vectors.is_empty() {
                return Err(MitigationError::InvalidDetector("classifier ended with no support vectors".into()));
            }
            let sn: Vec<f64> = fn_.iter().map(|f| model.decision(f)).collect();
            let sa: Vec<f64> = fa.iter().map(|f| model.decision(f)).collect();
            Ok(TrainedDetector {
                detector: Detector::KernelClassifier(model),
                roc: Roc::from_scores(&sn, &sa),
                threshold: 0.0,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(offset: f64) -> Vec<Vec2> {
        (0..8).map(|i| Vec2::new(3.0 * i as f64 + offset, offset)).collect()
    }

    fn wobbly(amp: f64) -> Vec<Vec2> {
        (0..8)
            .map(|i| {
                let s = if i % 3 == 0 { amp } else { -0.3 * amp };
                Vec2::new(3.0 * i as f64, s)
            })
            .collect()
    }

    #[test]
    fn constant_velocity_is_normal() {
        let d = Detector::rule_based(1e-3).unwrap().detect(&straight(0.0), 2.0).unwrap();
        assert!(!d.adversarial);
        assert!(d.score.abs() < 1e-12);
    }

    #[test]
    fn alternating_acceleration_variance() {
        // Steps 1,2,4,1,2,4 at 1 Hz give |a| = 1,2,3,1,2: mean 1.8, variance 0.56.
        let xs = [0.0, 1.0, 3.0, 7.0, 8.0, 10.0, 14.0];
        let pts: Vec<Vec2> = xs.iter().map(|&x| Vec2::new(x, 0.0)).collect();
        let d = Detector::rule_based(0.5).unwrap().detect(&pts, 1.0).unwrap();
        assert!((d.score - 0.56).abs() < 1e-12);
        assert!(d.adversarial);
        assert!(!Detector::rule_based(0.6).unwrap().detect(&pts, 1.0).unwrap().adversarial);
    }

    #[test]
    fn classifier_separates_toy_sets() {
        let normal: Vec<Vec<Vec2>> = (0..8).map(|i| straight(i as f64)).collect();
        let adv: Vec<Vec<Vec2>> = (0..8).map(|i| wobbly(1.0 + 0.2 * i as f64)).collect();
        let t = train_detector(&normal, &adv, 2.0, DetectorKind::KernelClassifier { c: 1.0 }).unwrap();
        for p in &normal {
            assert!(!t.detector.detect(p, 2.0).unwrap().adversarial);
        }
        for p in &adv {
            assert!(t.detector.detect(p, 2.0).unwrap().adversarial);
        }
        let back = Detector::from_json(&t.detector.to_json()).unwrap();
        assert_eq!(back, t.detector);
    }

    #[test]
    fn rule_training_picks_separating_threshold() {
        let normal: Vec<Vec<Vec2>> = (0..5).map(|i| straight(i as f64)).collect();
        let adv: Vec<Vec<Vec2>> = (0..5).map(|i| wobbly(1.0 + i as f64)).collect();
        let t = train_detector(&normal, &adv, 2.0, DetectorKind::RuleBased).unwrap();
        assert_eq!(t.roc.auc, 1.0);
        assert!(t.threshold > 0.0);
        assert!(matches!(train_detector(&[], &adv, 2.0, DetectorKind::RuleBased), Err(MitigationError::EmptyClass)));
    }
}
