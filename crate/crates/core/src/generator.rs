//! Synthetic scenarios with dataset-like timing.
//!
//! Each preset fixes the history length, future length, and sample rate of
//! a well-known driving dataset, and ships physical bounds for it. Scenes
//! are long enough for a three-second multi-frame attack. The target's
//! motion is generated well inside the preset's bounds (half of every
//! limit) so that the unperturbed scene is always feasible and attacks
//! have room to move.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::PhysicalBounds;
use crate::geometry::Vec2;
use crate::scene::{ObjectKind, Scene, Trajectory};

/// Lane width used for lane changes and neighbor placement, meters.
pub const LANE_WIDTH: f64 = 3.7;

/// Fraction of each physical bound the generated target may use.
const BOUND_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetPreset {
    ApolloscapeLike,
    NgsimLike,
    NuscenesLike,
}

impl DatasetPreset {
    pub const ALL: [DatasetPreset; 3] =
        [DatasetPreset::ApolloscapeLike, DatasetPreset::NgsimLike, DatasetPreset::NuscenesLike];

    pub fn name(self) -> &'static str {
        match self {
            Self::ApolloscapeLike => "apolloscape_like",
            Self::NgsimLike => "ngsim_like",
            Self::NuscenesLike => "nuscenes_like",
        }
    }

    /// `(l_i, l_o, frequency_hz)`.
    pub fn timing(self) -> (usize, usize, f64) {
        match self {
            Self::ApolloscapeLike => (6, 6, 2.0),
            Self::NgsimLike => (15, 25, 5.0),
            Self::NuscenesLike => (4, 12, 2.0),
        }
    }

    /// Number of predictions covering three seconds.
    pub fn three_second_l_p(self) -> usize {
        let (_, _, f) = self.timing();
        (3.0 * f).round() as usize
    }

    /// Frames per generated scene: enough for the longest multi-frame attack.
    pub fn frame_count(self) -> usize {
        let (l_i, l_o, _) = self.timing();
        l_i + l_o + self.three_second_l_p() - 1
    }

    pub fn bounds(self) -> PhysicalBounds {
        PhysicalBounds::preset(self)
    }
}

impl fmt::Display for DatasetPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioFamily {
    Straight,
    LaneChange,
    Turn,
    Stop,
    Accelerate,
}

impl ScenarioFamily {
    pub const ALL: [ScenarioFamily; 5] = [
        ScenarioFamily::Straight,
        ScenarioFamily::LaneChange,
        ScenarioFamily::Turn,
        ScenarioFamily::Stop,
        ScenarioFamily::Accelerate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Straight => "straight",
            Self::LaneChange => "lane_change",
            Self::Turn => "turn",
            Self::Stop => "stop",
            Self::Accelerate => "accelerate",
        }
    }
}

impl FromStr for ScenarioFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown scenario family `{s}`"))
    }
}

/// Minimum-jerk blend from 0 to 1 over `tau ∈ [0, 1]`.
fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// `∫₀^τ min_jerk`, continued linearly past τ = 1.
fn min_jerk_integral(tau: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else if tau >= 1.0 {
        0.5 + (tau - 1.0)
    } else {
        tau.powi(4) * (2.5 - 3.0 * tau + tau * tau)
    }
}

// Peak |d²/dτ²| and |d³/dτ³| of `min_jerk`.
const MIN_JERK_PEAK_ACCEL: f64 = 5.773_502_691_896_258;
const MIN_JERK_PEAK_JERK: f64 = 60.0;
// Peak |d/dτ| of `min_jerk`.
const MIN_JERK_PEAK_RATE: f64 = 1.875;

fn seed_for(preset: DatasetPreset, family: ScenarioFamily, seed: u64) -> u64 {
    let p = preset as u64;
    let f = family as u64;
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (p << 56) ^ (f << 48)
}

/// Target path in a local frame: +x forward, +y left.
fn target_path(
    family: ScenarioFamily,
    bounds: &PhysicalBounds,
    frames: usize,
    f: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec2> {
    let duration = (frames - 1) as f64 / f;
    let v_max = 0.55 * bounds.max_speed;
    let a_lat = BOUND_MARGIN * bounds.max_lat_accel;
    let j_lat = BOUND_MARGIN * bounds.max_lat_jerk;
    let a_long = BOUND_MARGIN * bounds.max_long_accel;
    let j_long = BOUND_MARGIN * bounds.max_long_jerk;
    let times = (0..frames).map(|i| i as f64 / f);
    match family {
        ScenarioFamily::Straight => {
            let v = rng.gen_range(3.0..v_max);
            times.map(|t| Vec2::new(v * t, 0.0)).collect()
        }
        ScenarioFamily::LaneChange => {
            let v = rng.gen_range(4.0..v_max);
            let by_accel = (MIN_JERK_PEAK_ACCEL * LANE_WIDTH / a_lat).sqrt();
            let by_jerk = (MIN_JERK_PEAK_JERK * LANE_WIDTH / j_lat).cbrt();
            let span = (1.15 * by_accel.max(by_jerk)).min(duration);
            let t0 = rng.gen_range(0.0..=(duration - span));
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            times.map(|t| Vec2::new(v * t, side * LANE_WIDTH * min_jerk((t - t0) / span))).collect()
        }
        ScenarioFamily::Turn => {
            let v = rng.gen_range(3.0..0.8 * v_max);
            let curvature = rng.gen_range(0.6..1.0) * a_lat / (v * v);
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            times
                .map(|t| {
                    let phi = curvature * v * t;
                    Vec2::new(phi.sin() / curvature, side * (1.0 - phi.cos()) / curvature)
                })
                .collect()
        }
        ScenarioFamily::Stop | ScenarioFamily::Accelerate => {
            let t0 = rng.gen_range(0.0..0.3 * duration);
            let span = rng.gen_range(0.6..0.95) * (duration - t0);
            let dv_limit = (a_long * span / MIN_JERK_PEAK_RATE).min(j_long * span * span / MIN_JERK_PEAK_ACCEL);
            let (v0, dv) = if family == ScenarioFamily::Stop {
                let v0 = rng.gen_range(0.6..1.0) * dv_limit.min(v_max);
                (v0, -v0)
            } else {
                let v0 = rng.gen_range(2.0..0.5 * v_max);
                let dv = rng.gen_range(0.6..1.0) * dv_limit.min(v_max - v0);
                (v0, dv)
            };
            times
                .map(|t| {
                    let tau = (t - t0) / span;
                    Vec2::new(v0 * t + dv * span * min_jerk_integral(tau), 0.0)
                })
                .collect()
        }
    }
}

/// One synthetic scene. Deterministic in `(preset, family, seed)`.
pub fn generate_scene(preset: DatasetPreset, family: ScenarioFamily, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(preset, family, seed));
    let (l_i, l_o, f) = preset.timing();
    let frames = preset.frame_count();
    let bounds = preset.bounds();

    let heading = rng.gen_range(0.0..std::f64::consts::TAU);
    let origin = Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
    let place = |p: Vec2| origin + p.rotated(heading);

    let local = target_path(family, &bounds, frames, f, &mut rng);
    let target: Vec<Vec2> = local.into_iter().map(place).collect();
    let mut trajectories = vec![Trajectory::from_positions("0", ObjectKind::Vehicle, 0, &target).expect("valid")];

    let neighbors = rng.gen_range(0..=5);
    for k in 0..neighbors {
        let lane: i32 = rng.gen_range(-2..=2);
        let x0 = if lane == 0 {
            let gap = rng.gen_range(15.0..40.0);
            if rng.gen_bool(0.5) {
                gap
            } else {
                -gap
            }
        } else {
            rng.gen_range(-30.0..30.0)
        };
        let v = rng.gen_range(3.0..0.55 * bounds.max_speed);
        let pts: Vec<Vec2> =
            (0..frames).map(|i| place(Vec2::new(x0 + v * i as f64 / f, lane as f64 * LANE_WIDTH))).collect();
        trajectories
            .push(Trajectory::from_positions((k + 1).to_string(), ObjectKind::Vehicle, 0, &pts).expect("valid"));
    }
    Scene::new(format!("{}-{}-{}", preset.name(), family.name(), seed), f, l_i, l_o, "0", trajectories)
        .expect("generator produces valid scenes")
}

/// `count` scenes cycling through every family, with ids `scene_0000`, ...
pub fn generate_corpus(preset: DatasetPreset, count: usize, seed: u64) -> Vec<Scene> {
    generate_corpus_of(preset, &ScenarioFamily::ALL, count, seed)
}

pub fn generate_corpus_of(preset: DatasetPreset, families: &[ScenarioFamily], count: usize, seed: u64) -> Vec<Scene> {
    (0..count)
        .map(|i| {
            let family = families[i % families.len()];
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            generate_scene(preset, family, s).with_id(format!("scene_{i:04}"))
        })
        .collect()
}
