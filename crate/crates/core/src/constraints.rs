//! Physical feasibility of perturbed trajectories.
//!
//! A perturbation is a per-frame displacement added to the first frames of
//! the target's trajectory. It is feasible when every per-frame displacement
//! stays within the deviation cap and the perturbed trajectory, together
//! with a few unperturbed context frames on each side, keeps speed,
//! longitudinal/lateral acceleration, and longitudinal/lateral jerk within
//! the dataset's physical bounds.
//!
//! [`project`] shrinks an infeasible perturbation along its own ray to the
//! largest feasible multiple `θ·Δ`, `0 ≤ θ ≤ 1`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::DatasetPreset;
use crate::geometry::Vec2;
use crate::kinematics::{kinematics, profile_unchecked, KinematicProfile};
use crate::scene::{ObjectKind, Scene};

/// Absolute slack applied to every bound comparison.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Number of evenly spaced θ values in the coarse projection scan.
pub const PROJECTION_GRID: usize = 64;

/// Bisection stops once the bracket is narrower than this.
pub const PROJECTION_TOLERANCE: f64 = 1e-3;

/// Estimated bounds are floored here so they stay strictly positive.
pub const MIN_ESTIMATED_BOUND: f64 = 1e-6;

const PRESETS_JSON: &str = include_str!("../presets/physical_bounds.json");

#[derive(Debug, Error, PartialEq)]
pub enum ConstraintError {
    #[error("bounds estimation needs at least one vehicle trajectory with 4 or more frames")]
    EmptyDataset,
    #[error("invalid bound `{name}`: {value}")]
    InvalidBound { name: &'static str, value: f64 },
    #[error("perturbation has {got} frames but the scene supports at most {max}")]
    PerturbationTooLong { got: usize, max: usize },
    #[error("bounds file: {0}")]
    Parse(String),
}

/// Magnitude bounds on the five kinematic properties, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalBounds {
    pub max_speed: f64,
    pub max_long_accel: f64,
    pub max_lat_accel: f64,
    pub max_long_jerk: f64,
    pub max_lat_jerk: f64,
}

impl PhysicalBounds {
    pub fn new(
        max_speed: f64,
        max_long_accel: f64,
        max_lat_accel: f64,
        max_long_jerk: f64,
        max_lat_jerk: f64,
    ) -> Result<Self, ConstraintError> {
        Self { max_speed, max_long_accel, max_lat_accel, max_long_jerk, max_lat_jerk }.validated()
    }

    pub fn validated(self) -> Result<Self, ConstraintError> {
        for (name, value) in self.named() {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConstraintError::InvalidBound { name, value });
            }
        }
        Ok(self)
    }

    /// Shipped bounds for each dataset preset.
    pub fn preset(preset: DatasetPreset) -> Self {
        let mut all = Self::load_preset_table(PRESETS_JSON).expect("shipped presets parse");
        all.remove(preset.name()).expect("every preset has bounds")
    }

    /// Parses a `{name: bounds}` table such as the shipped presets file.
    pub fn load_preset_table(json: &str) -> Result<BTreeMap<String, Self>, ConstraintError> {
        let table: BTreeMap<String, Self> =
            serde_json::from_str(json).map_err(|e| ConstraintError::Parse(e.to_string()))?;
        table.into_iter().map(|(k, v)| v.validated().map(|v| (k, v))).collect()
    }

    pub fn presets_json() -> &'static str {
        PRESETS_JSON
    }

    /// Bounds so loose that only the deviation cap can bind.
    pub fn unbounded() -> Self {
        Self { max_speed: 1e12, max_long_accel: 1e12, max_lat_accel: 1e12, max_long_jerk: 1e12, max_lat_jerk: 1e12 }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            max_speed: self.max_speed * factor,
            max_long_accel: self.max_long_accel * factor,
            max_lat_accel: self.max_lat_accel * factor,
            max_long_jerk: self.max_long_jerk * factor,
            max_lat_jerk: self.max_lat_jerk * factor,
        }
    }

    fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("max_speed", self.max_speed),
            ("max_long_accel", self.max_long_accel),
            ("max_lat_accel", self.max_lat_accel),
            ("max_long_jerk", self.max_long_jerk),
            ("max_lat_jerk", self.max_lat_jerk),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConstraints {
    pub bounds: PhysicalBounds,
    /// Per-frame displacement cap, meters.
    pub max_deviation: f64,
    /// Unperturbed frames included on each side when checking kinematics.
    pub context_frames: usize,
}

impl PerturbationConstraints {
    pub fn new(bounds: PhysicalBounds, max_deviation: f64) -> Self {
        Self { bounds, max_deviation, context_frames: 3 }
    }

    pub fn with_max_deviation(mut self, max_deviation: f64) -> Self {
        self.max_deviation = max_deviation;
        self
    }
}

/// Per-frame displacement applied to a prefix of the target trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Perturbation(Vec<Vec2>);

impl Perturbation {
    pub fn new(offsets: Vec<Vec2>) -> Self {
        Self(offsets)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![Vec2::ZERO; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn offsets(&self) -> &[Vec2] {
        &self.0
    }

    pub fn into_offsets(self) -> Vec<Vec2> {
        self.0
    }

    pub fn scaled(&self, theta: f64) -> Self {
        Self(self.0.iter().map(|&d| d * theta).collect())
    }

    /// Largest per-frame displacement magnitude.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Speed,
    LongAccel,
    LatAccel,
    LongJerk,
    LatJerk,
    Deviation,
}

/// One bound violation. `frame` is the scene frame of the first point the
/// offending finite difference uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub frame: usize,
    pub property: Property,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub violations: Vec<Violation>,
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Result of [`project`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub perturbation: Perturbation,
    pub theta: f64,
}

/// μ ± 3σ magnitude bounds pooled over every vehicle trajectory.
pub fn estimate_bounds(scenes: &[Scene]) -> Result<PhysicalBounds, ConstraintError> {
    let mut pools: [Vec<f64>; 5] = Default::default();
    for scene in scenes {
        for traj in scene.trajectories() {
            if traj.kind() != ObjectKind::Vehicle {
                continue;
            }
            let Ok(k) = kinematics(traj, scene.frequency_hz()) else {
                continue;
            };
            pools[0].extend(&k.speed);
            pools[1].extend(&k.long_accel);
            pools[2].extend(&k.lat_accel);
            pools[3].extend(&k.long_jerk);
            pools[4].extend(&k.lat_jerk);
        }
    }
    if pools.iter().any(|p| p.is_empty()) {
        return Err(ConstraintError::EmptyDataset);
    }
    let bound = |values: &[f64]| {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        (mean + 3.0 * sd).abs().max((mean - 3.0 * sd).abs()).max(MIN_ESTIMATED_BOUND)
    };
    Ok(PhysicalBounds {
        max_speed: bound(&pools[0]),
        max_long_accel: bound(&pools[1]),
        max_lat_accel: bound(&pools[2]),
        max_long_jerk: bound(&pools[3]),
        max_lat_jerk: bound(&pools[4]),
    })
}

/// Full verdict for `delta` applied to the target's first `delta.len()`
/// frames.
pub fn check_feasible(scene: &Scene, delta: &Perturbation, cons: &PerturbationConstraints) -> FeasibilityVerdict {
    let points = scene.target().positions();
    check_window(&points, scene.frequency_hz(), 0, delta.offsets(), cons)
}

/// Verdict for `delta` applied to `points[start..start + delta.len()]`.
pub fn check_window(
    points: &[Vec2],
    frequency_hz: f64,
    start: usize,
    delta: &[Vec2],
    cons: &PerturbationConstraints,
) -> FeasibilityVerdict {
    let mut violations = Vec::new();
    scan_window(points, frequency_hz, start, delta, 1.0, cons, &mut |v| {
        violations.push(v);
        true
    });
    FeasibilityVerdict { violations }
}

/// Fast yes/no feasibility of `theta * delta`.
pub fn window_is_feasible(
    points: &[Vec2],
    frequency_hz: f64,
    start: usize,
    delta: &[Vec2],
    theta: f64,
    cons: &PerturbationConstraints,
) -> bool {
    let mut ok = true;
    scan_window(points, frequency_hz, start, delta, theta, cons, &mut |_| {
        ok = false;
        false
    });
    ok
}

/// Walks every constraint, handing violations to `sink`; stops early once
/// `sink` returns false.
fn scan_window(
    points: &[Vec2],
    frequency_hz: f64,
    start: usize,
    delta: &[Vec2],
    theta: f64,
    cons: &PerturbationConstraints,
    sink: &mut dyn FnMut(Violation) -> bool,
) {
    assert!(start + delta.len() <= points.len(), "perturbation runs past the end of the trajectory");
    for (i, d) in delta.iter().enumerate() {
        let dev = (*d * theta).norm();
        if !(dev <= cons.max_deviation + FEASIBILITY_SLACK) {
            let v =
                Violation { frame: start + i, property: Property::Deviation, value: dev, limit: cons.max_deviation };
            if !sink(v) {
                return;
            }
        }
    }
    let w0 = start.saturating_sub(cons.context_frames);
    let w1 = (start + delta.len() + cons.context_frames).min(points.len());
    let mut window = points[w0..w1].to_vec();
    for (i, d) in delta.iter().enumerate() {
        window[start - w0 + i] += *d * theta;
    }
    let profile = profile_unchecked(&window, frequency_hz);
    scan_profile(&profile, w0, &cons.bounds, sink);
}

fn scan_profile(k: &KinematicProfile, offset: usize, b: &PhysicalBounds, sink: &mut dyn FnMut(Violation) -> bool) {
    let series: [(&[f64], Property, f64); 5] = [
        (&k.speed, Property::Speed, b.max_speed),
        (&k.long_accel, Property::LongAccel, b.max_long_accel),
        (&k.lat_accel, Property::LatAccel, b.max_lat_accel),
        (&k.long_jerk, Property::LongJerk, b.max_long_jerk),
        (&k.lat_jerk, Property::LatJerk, b.max_lat_jerk),
    ];
    for (values, property, limit) in series {
        for (i, &value) in values.iter().enumerate() {
            if !(value.abs() <= limit + FEASIBILITY_SLACK) {
                let v = Violation { frame: offset + i, property, value, limit };
                if !sink(v) {
                    return;
                }
            }
        }
    }
}

/// Shrinks `delta` to the largest feasible `θ·delta` on the target's prefix.
pub fn project(scene: &Scene, delta: &Perturbation, cons: &PerturbationConstraints) -> Projection {
    let points = scene.target().positions();
    project_window(&points, scene.frequency_hz(), 0, delta, cons)
}

/// Projection of a perturbation applied at `points[start..]`.
///
/// The deviation cap is linear in θ and is applied in closed form,
/// `θ_cap = min(1, max_deviation / max|Δ|)`. If `θ_cap·Δ` violates a
/// kinematic bound, `[0, θ_cap]` is scanned at [`PROJECTION_GRID`] evenly
/// spaced points from the top down, and the bracket above the largest
/// feasible grid point is bisected to [`PROJECTION_TOLERANCE`]. When even
/// θ = 0 fails (the unperturbed trajectory itself breaks a bound) the
/// result is θ = 0.
pub fn project_window(
    points: &[Vec2],
    frequency_hz: f64,
    start: usize,
    delta: &Perturbation,
    cons: &PerturbationConstraints,
) -> Projection {
    let d = delta.offsets();
    let max_norm = delta.max_norm();
    let cap = if max_norm > cons.max_deviation { cons.max_deviation / max_norm } else { 1.0 };
    let feasible = |theta: f64| window_is_feasible(points, frequency_hz, start, d, theta, cons);
    let theta = if max_norm == 0.0 || feasible(cap) {
        cap
    } else {
        let step = cap / (PROJECTION_GRID - 1) as f64;
        let lowest = (0..PROJECTION_GRID - 1).rev().find(|&j| feasible(j as f64 * step));
        match lowest {
            None => 0.0,
            Some(j) => {
                let mut lo = j as f64 * step;
                let mut hi = (j + 1) as f64 * step;
                while hi - lo > PROJECTION_TOLERANCE {
                    let mid = 0.5 * (lo + hi);
                    if feasible(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
        }
    };
    Projection { perturbation: delta.scaled(theta), theta }
}
