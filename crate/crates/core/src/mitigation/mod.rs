//! Defenses: smoothing, augmentation, and adversarial-history detection.

mod augment;
mod detector;
mod features;
mod pipeline;
mod roc;
mod smoothing;
mod svm;

use thiserror::Error;

use crate::predictors::PredictError;

pub use augment::{augment, augment_points, Augmenter};
pub use detector::{train_detector, Detection, Detector, DetectorKind, TrainedDetector};
pub use features::{extract_features, TrajectoryFeatures, FEATURE_COUNT};
pub use pipeline::{defended_predict, DefendedPrediction, DefensePipeline};
pub use roc::{Roc, RocPoint};
pub use smoothing::{smooth, SmootherSpec};
pub use svm::{FeatureVector, KernelClassifier};

#[derive(Debug, Error, PartialEq)]
pub enum MitigationError {
    #[error("invalid smoothing kernel: {0}")]
    InvalidKernel(String),
    #[error("trajectory has {got} points, at least {need} are required")]
    TooShort { got: usize, need: usize },
    #[error("both the normal and the adversarial set need at least one history")]
    EmptyClass,
    #[error("invalid detector: {0}")]
    InvalidDetector(String),
    #[error(transparent)]
    Predict(#[from] PredictError),
}
