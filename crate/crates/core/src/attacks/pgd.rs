//! White-box projected gradient attack.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finish, AttackConfig, AttackError, AttackProblem, AttackResult, Optimizer, SearchOutcome};
use crate::constraints::{project_window, Perturbation};
use crate::geometry::Vec2;
use crate::optim::{Adam, AdamConfig};
use crate::predictors::Predictor;
use crate::scene::Scene;

fn to_flat(v: &[Vec2]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn from_flat(v: &[f64]) -> Vec<Vec2> {
    v.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

/// Starts from a small random perturbation, and at every iteration
/// replaces it by its projection onto the feasible set, evaluates the loss
/// and its gradient there, and takes an Adam step. The all-zero perturbation is scored first, so the result is
/// never worse than no attack.
pub fn pgd_attack(scene: &Scene, model: &dyn Predictor, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    let Optimizer::Pgd(pgd) = cfg.optimizer else {
        return Err(AttackError::InvalidConfig("pgd_attack needs a pgd optimizer".into()));
    };
    let problem = AttackProblem::from_config(scene, model, cfg)?;
    let n = problem.perturbation_len();
    let base = problem.base_points();
    let f = problem.frequency_hz();

    let mut best_delta = vec![Vec2::ZERO; n];
    let mut best_loss = problem.loss(&best_delta)?;
    let mut best_theta = 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = pgd.init_range;
    let mut raw: Vec<f64> = (0..2 * n).map(|_| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 }).collect();
    let mut adam = Adam::new(2 * n, AdamConfig::with_learning_rate(pgd.learning_rate));
    let mut trace = Vec::with_capacity(pgd.max_iter);
    let mut raw_trace = Vec::with_capacity(pgd.max_iter);
    let mut thetas = Vec::with_capacity(pgd.max_iter);

    for _ in 0..pgd.max_iter {
        let proj = project_window(base, f, 0, &Perturbation::new(from_flat(&raw)), &cfg.constraints);
        let delta = proj.perturbation.into_offsets();
        raw = to_flat(&delta);
        let (loss, grad) = problem.loss_and_gradient(&delta)?;
        if loss < best_loss {
            best_loss = loss;
            best_delta = delta;
            best_theta = proj.theta;
        }
        trace.push(best_loss);
        raw_trace.push(loss);
        thetas.push(proj.theta);
        adam.step(&mut raw, &to_flat(&grad));
    }

    finish(
        scene,
        model,
        cfg,
        SearchOutcome { delta: best_delta, theta: best_theta, best_loss, trace, raw_trace, thetas },
    )
}
