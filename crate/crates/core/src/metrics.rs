//! Prediction-error metrics and the transferability score.
//!
//! ADE and FDE are Euclidean. The four directional metrics project the
//! per-frame error `p − s` onto a unit direction taken from the ground
//! truth: front is the direction of travel `s[α+1] − s[α]` (the last frame
//! reuses the previous step), left its +90° rotation, and right/rear the
//! negations. All six are averaged over the prediction horizon.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{step_directions, Vec2};

/// Ground-truth steps shorter than this have no direction of their own.
pub const MIN_DIRECTION_STEP: f64 = 1e-9;

/// Half of a 3.7 m lane; deviations beyond it likely change lanes.
pub const HALF_LANE_WIDTH: f64 = 1.85;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("prediction has {pred} frames but ground truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("cannot evaluate an empty trajectory")]
    Empty,
    #[error("every source metric is zero; transferability is undefined")]
    AllDenominatorsZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ade,
    Fde,
    Left,
    Right,
    Front,
    Rear,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::Ade, Metric::Fde, Metric::Left, Metric::Right, Metric::Front, Metric::Rear];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ade => "ade",
            Metric::Fde => "fde",
            Metric::Left => "left",
            Metric::Right => "right",
            Metric::Front => "front",
            Metric::Rear => "rear",
        }
    }

    pub fn is_directional(self) -> bool {
        !matches!(self, Metric::Ade | Metric::Fde)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Front,
    Rear,
}

impl Direction {
    /// Unit vector for this direction given the local direction of travel.
    pub fn apply(self, forward: Vec2) -> Vec2 {
        match self {
            Direction::Front => forward,
            Direction::Rear => -forward,
            Direction::Left => forward.perp(),
            Direction::Right => -forward.perp(),
        }
    }
}

/// All six metrics for one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub ade: f64,
    pub fde: f64,
    pub left: f64,
    pub right: f64,
    pub front: f64,
    pub rear: f64,
}

impl ErrorReport {
    pub fn compute(pred: &[Vec2], truth: &[Vec2]) -> Result<Self, MetricError> {
        check_lengths(pred, truth)?;
        let forward = step_directions(truth, MIN_DIRECTION_STEP);
        let n = pred.len() as f64;
        let mut ade = 0.0;
        let mut lateral = 0.0;
        let mut longitudinal = 0.0;
        for ((p, s), fw) in pred.iter().zip(truth).zip(&forward) {
            let e = *p - *s;
            ade += e.norm();
            lateral += e.dot(fw.perp());
            longitudinal += e.dot(*fw);
        }
        let last = pred.len() - 1;
        let lateral = lateral / n;
        let longitudinal = longitudinal / n;
        Ok(Self {
            ade: ade / n,
            fde: (pred[last] - truth[last]).norm(),
            left: lateral,
            right: -lateral,
            front: longitudinal,
            rear: -longitudinal,
        })
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Ade => self.ade,
            Metric::Fde => self.fde,
            Metric::Left => self.left,
            Metric::Right => self.right,
            Metric::Front => self.front,
            Metric::Rear => self.rear,
        }
    }

    /// Component-wise mean of several reports.
    pub fn mean(reports: &[ErrorReport]) -> ErrorReport {
        if reports.is_empty() {
            return ErrorReport::default();
        }
        let n = reports.len() as f64;
        let sum = |m: Metric| reports.iter().map(|r| r.get(m)).sum::<f64>() / n;
        ErrorReport {
            ade: sum(Metric::Ade),
            fde: sum(Metric::Fde),
            left: sum(Metric::Left),
            right: sum(Metric::Right),
            front: sum(Metric::Front),
            rear: sum(Metric::Rear),
        }
    }
}

fn check_lengths(pred: &[Vec2], truth: &[Vec2]) -> Result<(), MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Average displacement error: mean per-frame Euclidean distance.
pub fn ade(pred: &[Vec2], truth: &[Vec2]) -> Result<f64, MetricError> {
    check_lengths(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, s)| (*p - *s).norm()).sum::<f64>() / pred.len() as f64)
}

/// Final displacement error.
pub fn fde(pred: &[Vec2], truth: &[Vec2]) -> Result<f64, MetricError> {
    check_lengths(pred, truth)?;
    let last = pred.len() - 1;
    Ok((pred[last] - truth[last]).norm())
}

/// Mean signed projection of the error onto `direction`.
pub fn directional_deviation(pred: &[Vec2], truth: &[Vec2], direction: Direction) -> Result<f64, MetricError> {
    check_lengths(pred, truth)?;
    let forward = step_directions(truth, MIN_DIRECTION_STEP);
    Ok(pred.iter().zip(truth).zip(&forward).map(|((p, s), fw)| (*p - *s).dot(direction.apply(*fw))).sum::<f64>()
        / pred.len() as f64)
}

/// Result of [`transferability`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transferability {
    /// Mean target/source ratio, in percent.
    pub score_percent: f64,
    /// Metrics left out because the source value was zero.
    pub dropped: Vec<Metric>,
}

/// Mean over the six metrics of `target / source`, as a percentage. Metrics
/// whose source value is exactly zero are dropped and listed.
pub fn transferability(source: &ErrorReport, target: &ErrorReport) -> Result<Transferability, MetricError> {
    let mut ratios = Vec::with_capacity(6);
    let mut dropped = Vec::new();
    for m in Metric::ALL {
        let s = source.get(m);
        if s == 0.0 {
            dropped.push(m);
        } else {
            ratios.push(target.get(m) / s);
        }
    }
    if ratios.is_empty() {
        return Err(MetricError::AllDenominatorsZero);
    }
    Ok(Transferability { score_percent: 100.0 * ratios.iter().sum::<f64>() / ratios.len() as f64, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn along_x(n: usize) -> Vec<Vec2> {
        (0..n).map(|i| Vec2::new(i as f64, 0.0)).collect()
    }

    fn offset(v: &[Vec2], d: Vec2) -> Vec<Vec2> {
        v.iter().map(|&p| p + d).collect()
    }

    #[test]
    fn ade_cases() {
        let t = along_x(4);
        assert_eq!(ade(&t, &t).unwrap(), 0.0);
        assert_eq!(ade(&offset(&t, Vec2::new(0.0, 1.0)), &t).unwrap(), 1.0);
        let truth = along_x(2);
        let pred = vec![truth[0] + Vec2::new(3.0, 4.0), truth[1]];
        assert_eq!(ade(&pred, &truth).unwrap(), 2.5);
    }

    #[test]
    fn fde_cases() {
        let t = along_x(3);
        assert_eq!(fde(&t, &t).unwrap(), 0.0);
        let pred = vec![t[0] + Vec2::new(9.0, 9.0), t[1], t[2] + Vec2::new(3.0, 4.0)];
        assert_eq!(fde(&pred, &t).unwrap(), 5.0);
        let t2 = along_x(2);
        let pred = vec![t2[0] + Vec2::new(1.0, 0.0), t2[1] + Vec2::new(0.0, 2.0)];
        assert_eq!(fde(&pred, &t2).unwrap(), 2.0);
    }

    #[test]
    fn lateral_offset_is_left() {
        let t = along_x(5);
        let p = offset(&t, Vec2::new(0.0, 1.0));
        assert_eq!(directional_deviation(&p, &t, Direction::Left).unwrap(), 1.0);
        assert_eq!(directional_deviation(&p, &t, Direction::Right).unwrap(), -1.0);
        assert_eq!(directional_deviation(&p, &t, Direction::Front).unwrap(), 0.0);
        for d in [Direction::Left, Direction::Right, Direction::Front, Direction::Rear] {
            assert_eq!(directional_deviation(&t, &t, d).unwrap(), 0.0);
        }
    }

    #[test]
    fn lagging_prediction_is_rear() {
        let t = along_x(6);
        let p = offset(&t, Vec2::new(-0.5, 0.0));
        assert_eq!(directional_deviation(&p, &t, Direction::Rear).unwrap(), 0.5);
        assert_eq!(directional_deviation(&p, &t, Direction::Front).unwrap(), -0.5);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(ade(&along_x(2), &along_x(3)).unwrap_err(), MetricError::LengthMismatch { pred: 2, truth: 3 });
    }

    #[test]
    fn report_matches_individual_metrics() {
        let t: Vec<Vec2> = (0..6).map(|i| Vec2::new(i as f64, 0.1 * (i * i) as f64)).collect();
        let p: Vec<Vec2> = t.iter().enumerate().map(|(i, &q)| q + Vec2::new(0.3 * i as f64, -0.2)).collect();
        let r = ErrorReport::compute(&p, &t).unwrap();
        assert_eq!(r.ade, ade(&p, &t).unwrap());
        assert_eq!(r.fde, fde(&p, &t).unwrap());
        assert!((r.left - directional_deviation(&p, &t, Direction::Left).unwrap()).abs() < 1e-12);
        assert_eq!(r.left, -r.right);
        assert_eq!(r.front, -r.rear);
    }

    fn report(v: [f64; 6]) -> ErrorReport {
        ErrorReport { ade: v[0], fde: v[1], left: v[2], right: v[3], front: v[4], rear: v[5] }
    }

    #[test]
    fn transferability_cases() {
        let s = report([2.0, 4.0, 1.0, -1.0, 2.0, -2.0]);
        assert_eq!(transferability(&s, &s).unwrap().score_percent, 100.0);
        let half = report([1.0, 2.0, 0.5, -0.5, 1.0, -1.0]);
        assert_eq!(transferability(&s, &half).unwrap().score_percent, 50.0);
        let t = report([1.0, 4.0, 1.0, -1.0, 1.0, -2.0]);
        let got = transferability(&s, &t).unwrap().score_percent;
        assert!((got - 500.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn transferability_drops_zero_denominators() {
        let s = report([2.0, 0.0, 0.0, 0.0, 1.0, -1.0]);
        let t = report([1.0, 5.0, 5.0, 5.0, 1.0, -1.0]);
        let tr = transferability(&s, &t).unwrap();
        assert_eq!(tr.dropped, vec![Metric::Fde, Metric::Left, Metric::Right]);
        assert!((tr.score_percent - 250.0 / 3.0).abs() < 1e-9);
        assert_eq!(transferability(&ErrorReport::default(), &t).unwrap_err(), MetricError::AllDenominatorsZero);
    }
}
