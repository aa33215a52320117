//! Black-box particle swarm attack; only model predictions are queried.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finish, AttackConfig, AttackError, AttackProblem, AttackResult, Optimizer, SearchOutcome};
use crate::constraints::{project_window, Perturbation};
use crate::geometry::Vec2;
use crate::predictors::Predictor;
use crate::scene::Scene;

/// Particle 0 starts at zero and the rest uniformly in the per-coordinate
/// deviation box, all at rest. Each step applies
/// `v ← w v + c1 r1 (pbest − x) + c2 r2 (gbest − x)` with fresh uniform
/// `r1, r2` per coordinate, clamps every velocity coordinate to
/// `±max_deviation`, moves, and replaces the particle by its projection
/// before scoring it.
pub fn pso_attack(scene: &Scene, model: &dyn Predictor, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    let Optimizer::Pso(pso) = cfg.optimizer else {
        return Err(AttackError::InvalidConfig("pso_attack needs a pso optimizer".into()));
    };
    let problem = AttackProblem::from_config(scene, model, cfg)?;
    let n = problem.perturbation_len();
    let base = problem.base_points();
    let f = problem.frequency_hz();
    let r = cfg.constraints.max_deviation;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let project = |x: Vec<Vec2>| {
        let p = project_window(base, f, 0, &Perturbation::new(x), &cfg.constraints);
        (p.perturbation.into_offsets(), p.theta)
    };

    let mut pos = Vec::with_capacity(pso.particles);
    let mut thetas = Vec::new();
    for k in 0..pso.particles {
        let x: Vec<Vec2> = if k == 0 || r == 0.0 {
            vec![Vec2::ZERO; n]
        } else {
            (0..n).map(|_| Vec2::new(rng.gen_range(-r..=r), rng.gen_range(-r..=r))).collect()
        };
        let (x, theta) = project(x);
        thetas.push(theta);
        pos.push(x);
    }
    let mut vel = vec![vec![Vec2::ZERO; n]; pso.particles];
    let mut p_best = pos.clone();
    let mut p_loss = pos.iter().map(|x| problem.loss(x)).collect::<Result<Vec<_>, _>>()?;
    let mut p_theta = thetas.clone();
    let mut g = 0;
    for k in 1..pso.particles {
        if p_loss[k] < p_loss[g] {
            g = k;
        }
    }
    let (mut g_best, mut g_loss, mut g_theta) = (p_best[g].clone(), p_loss[g], p_theta[g]);

    let mut trace = Vec::with_capacity(pso.max_iter);
    let mut raw_trace = Vec::with_capacity(pso.max_iter);
    for _ in 0..pso.max_iter {
        let mut iter_best = f64::INFINITY;
        for k in 0..pso.particles {
            for d in 0..n {
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                let (s1, s2): (f64, f64) = (rng.gen(), rng.gen());
                let v = &mut vel[k][d];
                let x = pos[k][d];
                v.x = pso.inertia * v.x
                    + pso.cognitive * r1 * (p_best[k][d].x - x.x)
                    + pso.social * r2 * (g_best[d].x - x.x);
                v.y = pso.inertia * v.y
                    + pso.cognitive * s1 * (p_best[k][d].y - x.y)
                    + pso.social * s2 * (g_best[d].y - x.y);
                v.x = v.x.clamp(-r, r);
                v.y = v.y.clamp(-r, r);
            }
            let moved: Vec<Vec2> = pos[k].iter().zip(&vel[k]).map(|(x, v)| *x + *v).collect();
            let (x, theta) = project(moved);
            thetas.push(theta);
            let loss = problem.loss(&x)?;
            iter_best = iter_best.min(loss);
            if loss < p_loss[k] {
                p_loss[k] = loss;
                p_best[k] = x.clone();
                p_theta[k] = theta;
            }
            if loss < g_loss {
                g_loss = loss;
                g_best = x.clone();
                g_theta = theta;
            }
            pos[k] = x;
        }
        trace.push(g_loss);
        raw_trace.push(iter_best);
    }

    finish(
        scene,
        model,
        cfg,
        SearchOutcome { delta: g_best, theta: g_theta, best_loss: g_loss, trace, raw_trace, thetas },
    )
}
