//! Kinematic downstream impact: does a predicted trajectory force the AV
//! to brake, and how hard?
//!
//! The AV drives a straight lane at constant speed. A predicted OV point
//! conflicts with it when the point lies inside the AV's lane corridor,
//! ahead of the AV, and no farther ahead than where the AV will be at that
//! time plus the safety margin. The AV then has to stop behind the first
//! conflict point.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::AttackResult;
use crate::generator::LANE_WIDTH;
use crate::geometry::Vec2;
use crate::metrics::HALF_LANE_WIDTH;
use crate::scene::Scene;

/// Upper bound of the comfortable class, m/s².
pub const COMFORTABLE_DECEL: f64 = 4.0;
/// Upper bound of the hard-brake class, m/s².
pub const HARD_BRAKE_DECEL: f64 = 10.0;
pub const DEFAULT_SAFETY_MARGIN: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum PlanningError {
    #[error("invalid AV state: {0}")]
    InvalidAv(String),
    #[error("attack result for scene `{result}` does not belong to scene `{scene}`")]
    SceneMismatch { result: String, scene: String },
    #[error("the OV does not move in the last history step, so its lane direction is unknown")]
    NoHeading,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvState {
    pub position: Vec2,
    /// Direction of the lane the AV drives, radians.
    pub heading: f64,
    /// Speed along the lane, m/s.
    pub velocity: f64,
    pub lane_width: f64,
    pub safety_margin: f64,
}

impl AvState {
    pub fn new(position: Vec2, heading: f64, velocity: f64) -> Self {
        Self { position, heading, velocity, lane_width: LANE_WIDTH, safety_margin: DEFAULT_SAFETY_MARGIN }
    }

    pub fn validate(&self) -> Result<(), PlanningError> {
        if !(self.velocity >= 0.0 && self.velocity.is_finite()) {
            return Err(PlanningError::InvalidAv(format!("velocity {} must be non-negative", self.velocity)));
        }
        if !(self.lane_width > 0.0) {
            return Err(PlanningError::InvalidAv(format!("lane width {} must be positive", self.lane_width)));
        }
        if !(self.safety_margin >= 0.0) {
            return Err(PlanningError::InvalidAv(format!("safety margin {} is negative", self.safety_margin)));
        }
        Ok(())
    }

    /// Distance along the lane and signed lateral offset (left positive).
    pub fn lane_coordinates(&self, p: Vec2) -> (f64, f64) {
        let forward = Vec2::from_angle(self.heading);
        let rel = p - self.position;
        (rel.dot(forward), rel.dot(forward.perp()))
    }
}

/// Where the AV sits relative to the OV at the moment of prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AvPlacement {
    /// Lanes to the OV's left (negative: right).
    pub lateral_lanes: f64,
    /// Meters ahead of the OV along its heading (negative: behind).
    pub longitudinal: f64,
    pub velocity: f64,
    pub lane_width: f64,
    pub safety_margin: f64,
}

impl Default for AvPlacement {
    /// Right behind the OV in its own lane at 10 m/s.
    fn default() -> Self {
        Self {
            lateral_lanes: 0.0,
            longitudinal: -10.0,
            velocity: 10.0,
            lane_width: LANE_WIDTH,
            safety_margin: DEFAULT_SAFETY_MARGIN,
        }
    }
}

impl AvPlacement {
    /// AV state for an OV whose last two observed points are `prev`, `now`.
    pub fn resolve(&self, prev: Vec2, now: Vec2) -> Result<AvState, PlanningError> {
        let forward = (now - prev).normalized(1e-9).ok_or(PlanningError::NoHeading)?;
        let position = now + forward * self.longitudinal + forward.perp() * (self.lateral_lanes * self.lane_width);
        let av = AvState {
            position,
            heading: forward.angle(),
            velocity: self.velocity,
            lane_width: self.lane_width,
            safety_margin: self.safety_margin,
        };
        av.validate()?;
        Ok(av)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// 1-based index of the first conflicting predicted frame.
    pub frame: usize,
    /// Conflict point; lateral entries are interpolated onto the corridor
    /// edge.
    pub point: Vec2,
    /// Distance from the AV to the conflict point along the lane.
    pub distance: f64,
}

/// First predicted point that conflicts with the AV's path. `pred[k - 1]`
/// is the OV's position `k / frequency_hz` seconds ahead.
pub fn find_crossing(pred: &[Vec2], av: &AvState, frequency_hz: f64) -> Option<Crossing> {
    let half = av.lane_width / 2.0;
    for (i, &p) in pred.iter().enumerate() {
        let frame = i + 1;
        let (s, lat) = av.lane_coordinates(p);
        let reach = av.velocity * frame as f64 / frequency_hz + av.safety_margin;
        if lat.abs() > half || s < 0.0 || s > reach {
            continue;
        }
        let mut point = p;
        if i > 0 {
            let (_, prev_lat) = av.lane_coordinates(pred[i - 1]);
            if prev_lat.abs() > half {
                let edge = half * prev_lat.signum();
                let t = (prev_lat - edge) / (prev_lat - lat);
                point = pred[i - 1] + (p - pred[i - 1]) * t;
            }
        }
        let distance = av.lane_coordinates(point).0;
        return Some(Crossing { frame, point, distance });
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Deceleration {
    Required(f64),
    /// The conflict point is within the safety margin.
    CannotStop,
}

impl Deceleration {
    /// Magnitude in m/s²; infinite when the AV cannot stop.
    pub fn magnitude(self) -> f64 {
        match self {
            Deceleration::Required(a) => a,
            Deceleration::CannotStop => f64::INFINITY,
        }
    }
}

/// `v² / (2 (d − margin))`, the constant deceleration that stops the AV
/// `margin` meters before a point `d` meters ahead.
pub fn required_deceleration(av: &AvState, crossing_distance: f64) -> Deceleration {
    if av.velocity == 0.0 {
        return Deceleration::Required(0.0);
    }
    let room = crossing_distance - av.safety_margin;
    if room <= 0.0 {
        return Deceleration::CannotStop;
    }
    Deceleration::Required(av.velocity * av.velocity / (2.0 * room))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    None,
    Comfortable,
    HardBrake,
    Emergency,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::None, Severity::Comfortable, Severity::HardBrake, Severity::Emergency];

    pub fn name(self) -> &'static str {
        match self {
            Severity::None => "none",
            Severity::Comfortable => "comfortable",
            Severity::HardBrake => "hard_brake",
            Severity::Emergency => "emergency",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Severity of a required deceleration; `None` means no conflict.
pub fn classify_severity(decel: Option<Deceleration>) -> Severity {
    match decel.map(Deceleration::magnitude) {
        None => Severity::None,
        Some(a) if a <= COMFORTABLE_DECEL => Severity::Comfortable,
        Some(a) if a <= HARD_BRAKE_DECEL => Severity::HardBrake,
        Some(_) => Severity::Emergency,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactVerdict {
    pub crossing: Option<Crossing>,
    pub required_decel: Option<Deceleration>,
    pub severity: Severity,
    /// Whether the targeted metric exceeds half a lane width.
    pub lane_deviation_flag: bool,
}

impl ImpactVerdict {
    pub fn evaluate(pred: &[Vec2], av: &AvState, frequency_hz: f64, targeted_value: f64) -> Self {
        let crossing = find_crossing(pred, av, frequency_hz);
        let required_decel = crossing.map(|c| required_deceleration(av, c.distance));
        Self {
            crossing,
            required_decel,
            severity: classify_severity(required_decel),
            lane_deviation_flag: targeted_value > HALF_LANE_WIDTH,
        }
    }

    fn worse_than(&self, other: &Self) -> bool {
        let mag = |v: &Self| v.required_decel.map_or(-1.0, Deceleration::magnitude);
        (self.severity, mag(self)) > (other.severity, mag(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub placement: AvPlacement,
    pub before: ImpactVerdict,
    pub after: ImpactVerdict,
}

/// Planning verdicts for the predictions before and after an attack. For
/// multi-frame attacks the AV is placed relative to the OV at each
/// prediction time and the worst window is reported.
pub fn impact_report(
    result: &AttackResult,
    scene: &Scene,
    placement: &AvPlacement,
) -> Result<ImpactReport, PlanningError> {
    if result.scene_id != scene.id() {
        return Err(PlanningError::SceneMismatch { result: result.scene_id.clone(), scene: scene.id().to_string() });
    }
    let truth = scene.target().positions();
    let l_i = scene.l_i();
    let f = scene.frequency_hz();
    let offsets = result.perturbation.offsets();
    let observed = |i: usize| truth[i] + offsets.get(i).copied().unwrap_or(Vec2::ZERO);

    let side = |preds: &[Vec<Vec2>], targeted: f64, perturbed: bool| -> Result<ImpactVerdict, PlanningError> {
        let mut worst: Option<ImpactVerdict> = None;
        for (alpha, pred) in preds.iter().enumerate() {
            let now = alpha + l_i - 1;
            let (prev, cur) = if perturbed { (observed(now - 1), observed(now)) } else { (truth[now - 1], truth[now]) };
            let av = placement.resolve(prev, cur)?;
            let v = ImpactVerdict::evaluate(pred, &av, f, targeted);
            if worst.as_ref().is_none_or(|w| v.worse_than(w)) {
                worst = Some(v);
            }
        }
        worst.ok_or_else(|| PlanningError::InvalidAv("attack result has no predictions".into()))
    };
    Ok(ImpactReport {
        placement: *placement,
        before: side(&result.before_predictions, result.targeted_before(), false)?,
        after: side(&result.after_predictions, result.targeted_after(), true)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn av(v: f64) -> AvState {
        AvState::new(Vec2::ZERO, 0.0, v)
    }

    #[test]
    fn deceleration_examples() {
        assert_eq!(required_deceleration(&av(0.0), 27.0), Deceleration::Required(0.0));
        assert_eq!(required_deceleration(&av(10.0), 27.0), Deceleration::Required(2.0));
        let Deceleration::Required(a) = required_deceleration(&av(20.0), 2.0 + 50.0 / 3.0) else {
            panic!("expected a finite deceleration");
        };
        assert!((a - 12.0).abs() < 1e-9);
        assert_eq!(required_deceleration(&av(5.0), 2.0), Deceleration::CannotStop);
    }

    #[test]
    fn severity_classes() {
        let c = |a| classify_severity(Some(Deceleration::Required(a)));
        assert_eq!(classify_severity(None), Severity::None);
        assert_eq!(c(2.0), Severity::Comfortable);
        assert_eq!(c(4.0), Severity::Comfortable);
        assert_eq!(c(6.0), Severity::HardBrake);
        assert_eq!(c(12.0), Severity::Emergency);
        assert_eq!(classify_severity(Some(Deceleration::CannotStop)), Severity::Emergency);
    }

    #[test]
    fn parallel_ov_in_next_lane_never_crosses() {
        let pred: Vec<Vec2> = (1..=6).map(|k| Vec2::new(5.0 * k as f64, 3.7)).collect();
        assert_eq!(find_crossing(&pred, &av(10.0), 2.0), None);
    }

    #[test]
    fn lateral_entry_is_interpolated_at_the_corridor_edge() {
        // Lateral offsets 3.7, 2.7, 1.7, 0.7: the edge 1.85 lies 85% of the
        // way from frame 2 to frame 3.
        let pred: Vec<Vec2> = (0..4).map(|k| Vec2::new(10.0 + k as f64, 3.7 - k as f64)).collect();
        let c = find_crossing(&pred, &av(10.0), 2.0).unwrap();
        assert_eq!(c.frame, 3);
        assert!((c.point.y - 1.85).abs() < 1e-12);
        assert!((c.point.x - 11.85).abs() < 1e-12);
        assert!((c.distance - 11.85).abs() < 1e-12);
    }

    #[test]
    fn ov_inside_the_corridor_at_first_frame() {
        let pred = vec![Vec2::new(4.0, 0.5), Vec2::new(4.5, 0.5)];
        assert_eq!(find_crossing(&pred, &av(10.0), 2.0).unwrap().frame, 1);
    }

    #[test]
    fn lead_vehicle_keeping_its_distance_is_no_conflict() {
        let pred: Vec<Vec2> = (1..=6).map(|k| Vec2::new(10.0 + 5.0 * k as f64, 0.0)).collect();
        assert_eq!(find_crossing(&pred, &av(10.0), 2.0), None);
        let braking: Vec<Vec2> = (1..=6).map(|k| Vec2::new(10.0 + 0.5 * k as f64, 0.0)).collect();
        let c = find_crossing(&braking, &av(10.0), 2.0).unwrap();
        assert_eq!(c.frame, 2);
    }

    #[test]
    fn placement_is_relative_to_the_ov_heading() {
        let p = AvPlacement { lateral_lanes: 1.0, longitudinal: -5.0, ..AvPlacement::default() };
        let av = p.resolve(Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0)).unwrap();
        assert!((av.position - Vec2::new(-3.7, -4.0)).norm() < 1e-12);
        assert!((av.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(p.resolve(Vec2::ZERO, Vec2::ZERO), Err(PlanningError::NoHeading));
    }
}
