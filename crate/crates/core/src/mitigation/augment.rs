//! Random feasible perturbations for training-data augmentation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::constraints::{project_window, Perturbation, PerturbationConstraints};
use crate::geometry::Vec2;
use crate::predictors::SampleHook;
use crate::scene::Trajectory;

/// With probability `probability`, adds a perturbation drawn uniformly from
/// the per-coordinate box `[−max_deviation, max_deviation]` and projected
/// onto the feasible set. Returns the new points and whether a draw
/// happened.
pub fn augment_points(
    points: &[Vec2],
    frequency_hz: f64,
    cons: &PerturbationConstraints,
    probability: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec2>, bool) {
    if !rng.gen_bool(probability.clamp(0.0, 1.0)) {
        return (points.to_vec(), false);
    }
    let r = cons.max_deviation;
    let delta: Vec<Vec2> = points
        .iter()
        .map(|_| if r > 0.0 { Vec2::new(rng.gen_range(-r..=r), rng.gen_range(-r..=r)) } else { Vec2::ZERO })
        .collect();
    let proj = project_window(points, frequency_hz, 0, &Perturbation::new(delta), cons);
    let out = points.iter().zip(proj.perturbation.offsets()).map(|(p, d)| *p + *d).collect();
    (out, true)
}

pub fn augment(
    traj: &Trajectory,
    frequency_hz: f64,
    cons: &PerturbationConstraints,
    probability: f64,
    rng: &mut ChaCha8Rng,
) -> (Trajectory, bool) {
    let (points, changed) = augment_points(&traj.positions(), frequency_hz, cons, probability, rng);
    let out = traj.with_positions(&points).expect("projected perturbations are finite").with_reconstructed_headings();
    (out, changed)
}

/// Training hook that augments each history window.
#[derive(Debug, Clone)]
pub struct Augmenter {
    pub constraints: PerturbationConstraints,
    pub probability: f64,
}

impl Augmenter {
    pub const DEFAULT_PROBABILITY: f64 = 0.5;

    pub fn new(constraints: PerturbationConstraints) -> Self {
        Self { constraints, probability: Self::DEFAULT_PROBABILITY }
    }
}

impl SampleHook for Augmenter {
    fn apply(&self, history: &mut Vec<Vec2>, frequency_hz: f64, rng: &mut ChaCha8Rng) {
        let (out, _) = augment_points(history, frequency_hz, &self.constraints, self.probability, rng);
        *history = out;
    }
}
