use advtraj::constraints::{
    check_feasible, estimate_bounds, project, Perturbation, PerturbationConstraints, PhysicalBounds, FEASIBILITY_SLACK,
};
use advtraj::generator::{generate_corpus, generate_scene, DatasetPreset, ScenarioFamily};
use advtraj::geometry::Vec2;
use advtraj::scene::{ObjectKind, Scene, Trajectory};
use proptest::prelude::*;

/// Feasibility recomputed with plain arithmetic on coordinate pairs: a
/// window of context frames around the perturbed prefix, forward
/// differences, and accelerations split along the current step.
fn oracle_feasible(points: &[(f64, f64)], delta: &[(f64, f64)], f: f64, cons: &PerturbationConstraints) -> bool {
    let slack = FEASIBILITY_SLACK;
    if delta.iter().any(|d| (d.0 * d.0 + d.1 * d.1).sqrt() > cons.max_deviation + slack) {
        return false;
    }
    let end = (delta.len() + cons.context_frames).min(points.len());
    let p: Vec<(f64, f64)> = (0..end)
        .map(|i| match delta.get(i) {
            Some(d) => (points[i].0 + d.0, points[i].1 + d.1),
            None => points[i],
        })
        .collect();
    let v: Vec<(f64, f64)> = p.windows(2).map(|w| ((w[1].0 - w[0].0) * f, (w[1].1 - w[0].1) * f)).collect();
    let b = &cons.bounds;
    if v.iter().any(|v| (v.0 * v.0 + v.1 * v.1).sqrt() > b.max_speed + slack) {
        return false;
    }
    let mut long = Vec::new();
    let mut lat = Vec::new();
    for i in 0..v.len().saturating_sub(1) {
        let n = (v[i].0 * v[i].0 + v[i].1 * v[i].1).sqrt();
        let (ux, uy) = (v[i].0 / n, v[i].1 / n);
        let (ax, ay) = ((v[i + 1].0 - v[i].0) * f, (v[i + 1].1 - v[i].1) * f);
        long.push(ax * ux + ay * uy);
        lat.push(-ax * uy + ay * ux);
    }
    let jerk = |a: &[f64]| a.windows(2).map(|w| (w[1] - w[0]) * f).collect::<Vec<_>>();
    let within = |xs: &[f64], lim: f64| xs.iter().all(|x| x.abs() <= lim + slack);
    within(&long, b.max_long_accel)
        && within(&lat, b.max_lat_accel)
        && within(&jerk(&long), b.max_long_jerk)
        && within(&jerk(&lat), b.max_lat_jerk)
}

#[test]
fn alternating_lateral_delta_matches_the_oracle() {
    let preset = DatasetPreset::ApolloscapeLike;
    let cons = PerturbationConstraints::new(preset.bounds(), 1.0);
    let mut agreed = 0;
    let mut infeasible = 0;
    for seed in 0..40 {
        let scene = generate_scene(preset, ScenarioFamily::Straight, seed);
        let pts = scene.target().positions();
        let fwd = (pts[1] - pts[0]).normalized(1e-9).unwrap();
        for amp in [0.001, 0.01, 0.05, 0.1, 0.2, 0.4] {
            let delta: Vec<Vec2> = (0..scene.l_i()).map(|i| fwd.perp() * if i % 2 == 0 { amp } else { -amp }).collect();
            let verdict = check_feasible(&scene, &Perturbation::new(delta.clone()), &cons).is_feasible();
            let tuples: Vec<(f64, f64)> = pts.iter().map(|p| (p.x, p.y)).collect();
            let d: Vec<(f64, f64)> = delta.iter().map(|p| (p.x, p.y)).collect();
            assert_eq!(verdict, oracle_feasible(&tuples, &d, scene.frequency_hz(), &cons), "seed {seed} amp {amp}");
            agreed += 1;
            infeasible += usize::from(!verdict);
        }
    }
    // Both verdicts occur, so the comparison is not vacuous.
    assert!(infeasible > 0 && infeasible < agreed, "{infeasible} of {agreed} infeasible");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_is_sound_and_maximal(
        preset in prop::sample::select(DatasetPreset::ALL.to_vec()),
        family in prop::sample::select(ScenarioFamily::ALL.to_vec()),
        seed in any::<u64>(),
        raw in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..8),
        bound in 0.05..2.0f64,
    ) {
        let scene = generate_scene(preset, family, seed);
        let delta = Perturbation::new(raw.iter().map(|&(x, y)| Vec2::new(x, y)).collect());
        let cons = PerturbationConstraints::new(preset.bounds(), bound);
        let p = project(&scene, &delta, &cons);
        prop_assert!((0.0..=1.0).contains(&p.theta));
        prop_assert!(check_feasible(&scene, &p.perturbation, &cons).is_feasible());
        prop_assert!(p.theta == 1.0 || !check_feasible(&scene, &delta.scaled(p.theta + 2e-3), &cons).is_feasible());
    }
}

#[test]
fn estimated_bounds_follow_mean_plus_three_sigma() {
    let line = |id: &str, speed: f64| {
        let pts: Vec<Vec2> = (0..10).map(|k| Vec2::new(k as f64 * speed, 0.0)).collect();
        Trajectory::from_positions(id, ObjectKind::Vehicle, 0, &pts).unwrap()
    };
    let scene = Scene::new("s", 1.0, 4, 4, "a", vec![line("a", 4.0), line("b", 6.0)]).unwrap();
    let b = estimate_bounds(&[scene]).unwrap();
    assert!((b.max_speed - 8.0).abs() < 1e-9);

    let corpus = generate_corpus(DatasetPreset::ApolloscapeLike, 100, 0);
    let est = estimate_bounds(&corpus).unwrap();
    let preset = PhysicalBounds::preset(DatasetPreset::ApolloscapeLike);
    // Same order of magnitude as the shipped preset.
    let pairs = [
        (est.max_speed, preset.max_speed),
        (est.max_long_accel, preset.max_long_accel),
        (est.max_lat_accel, preset.max_lat_accel),
        (est.max_long_jerk, preset.max_long_jerk),
        (est.max_lat_jerk, preset.max_lat_jerk),
    ];
    for (a, b) in pairs {
        assert!(a > b / 20.0 && a < b * 20.0, "{a} vs {b}");
    }
}
