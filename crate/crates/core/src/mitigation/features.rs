//! Summary statistics of a history used by the detectors.

use serde::{Deserialize, Serialize};

use super::MitigationError;
use crate::geometry::Vec2;
use crate::kinematics::{kinematics_of, MIN_DIRECTION_SPEED};

pub const FEATURE_COUNT: usize = 6;

/// Acceleration statistics are over magnitudes (m/s²). Heading change is
/// the signed per-step turn of the velocity direction in radians, wrapped
/// to (−π, π]; its mean is taken over absolute values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFeatures {
    pub accel_mean: f64,
    pub accel_variance: f64,
    pub accel_max: f64,
    pub heading_change_mean: f64,
    pub heading_change_variance: f64,
    pub jerk_max: f64,
}

impl TrajectoryFeatures {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.accel_mean,
            self.accel_variance,
            self.accel_max,
            self.heading_change_mean,
            self.heading_change_variance,
            self.jerk_max,
        ]
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Population variance.
pub(crate) fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn heading_changes(points: &[Vec2], frequency_hz: f64) -> Vec<f64> {
    let mut dir: Option<Vec2> = None;
    let mut out = Vec::new();
    for w in points.windows(2) {
        let v = (w[1] - w[0]) * frequency_hz;
        let Some(d) = v.normalized(MIN_DIRECTION_SPEED) else {
            if dir.is_some() {
                out.push(0.0);
            }
            continue;
        };
        if let Some(prev) = dir {
            out.push(prev.perp().dot(d).atan2(prev.dot(d)));
        }
        dir = Some(d);
    }
    out
}

pub fn extract_features(points: &[Vec2], frequency_hz: f64) -> Result<TrajectoryFeatures, MitigationError> {
    let k =
        kinematics_of(points, frequency_hz).map_err(|_| MitigationError::TooShort { got: points.len(), need: 4 })?;
    let accel = k.accel_magnitude();
    let turns = heading_changes(points, frequency_hz);
    let abs_turns: Vec<f64> = turns.iter().map(|t| t.abs()).collect();
    Ok(TrajectoryFeatures {
        accel_mean: mean(&accel),
        accel_variance: variance(&accel),
        accel_max: max(&accel),
        heading_change_mean: mean(&abs_turns),
        heading_change_variance: variance(&turns),
        jerk_max: max(&k.jerk_magnitude()),
    })
}
