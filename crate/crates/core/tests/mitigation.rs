use advtraj::constraints::{check_window, PerturbationConstraints};
use advtraj::generator::{generate_corpus, DatasetPreset};
use advtraj::geometry::Vec2;
use advtraj::mitigation::{
    augment_points, defended_predict, extract_features, DefensePipeline, Detector, Roc, SmootherSpec,
};
use advtraj::predictors::{ConstantVelocity, PredictionRequest};
use advtraj::scene::Scene;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PRESET: DatasetPreset = DatasetPreset::ApolloscapeLike;

fn corpus() -> Vec<Scene> {
    generate_corpus(PRESET, 60, 17)
}

fn target_histories(scenes: &[Scene]) -> Vec<Vec<Vec2>> {
    scenes.iter().map(|s| s.target().positions()[..s.l_i()].to_vec()).collect()
}

fn accel_variance(points: &[Vec2], f: f64) -> f64 {
    extract_features(points, f).unwrap().accel_variance
}

proptest! {
    #[test]
    fn roc_is_monotone_and_auc_is_a_probability(
        neg in prop::collection::vec(-5.0..5.0f64, 1..60),
        pos in prop::collection::vec(-5.0..5.0f64, 1..60),
    ) {
        let roc = Roc::from_scores(&neg, &pos);
        prop_assert!((0.0..=1.0).contains(&roc.auc));
        for w in roc.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        // Area equals the share of correctly ordered pairs, ties counting half.
        let mut wins = 0.0;
        for p in &pos {
            for n in &neg {
                wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        prop_assert!((roc.auc - wins / (pos.len() * neg.len()) as f64).abs() < 1e-9);
    }
}

#[test]
fn smoothing_lowers_acceleration_variance_on_average() {
    let f = PRESET.timing().2;
    let spec = SmootherSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cons = PerturbationConstraints::new(PRESET.bounds(), 1.0);
    let (mut raw, mut once, mut twice) = (0.0, 0.0, 0.0);
    for scene in corpus() {
        let pts = scene.target().positions();
        let (noisy, _) = augment_points(&pts, f, &cons, 1.0, &mut rng);
        let s1 = spec.smooth_points(&noisy).unwrap();
        let s2 = spec.smooth_points(&s1).unwrap();
        raw += accel_variance(&noisy, f);
        once += accel_variance(&s1, f);
        twice += accel_variance(&s2, f);
    }
    assert!(once <= raw, "{once} > {raw}");
    assert!(twice <= once, "{twice} > {once}");
}

#[test]
fn a_detector_without_false_positives_leaves_normal_predictions_alone() {
    let scenes = corpus();
    let f = PRESET.timing().2;
    let highest = scenes
        .iter()
        .flat_map(|s| s.trajectories().iter().map(|t| accel_variance(&t.positions()[..s.l_i()], f)))
        .fold(0.0, f64::max);
    let pipeline = DefensePipeline::DetectThenSmooth {
        detector: Detector::rule_based(highest.max(1e-9)).unwrap(),
        smoother: SmootherSpec::default(),
    };
    let cv = ConstantVelocity::new(6, 6);
    for scene in &scenes {
        let req = PredictionRequest::from_scene(scene, scene.l_i() - 1, scene.l_i(), scene.l_o()).unwrap();
        let plain = defended_predict(&cv, &req, None, f).unwrap();
        let defended = defended_predict(&cv, &req, Some(&pipeline), f).unwrap();
        assert!(defended.flags.iter().all(|&x| !x));
        assert_eq!(plain.predictions, defended.predictions);
    }
}

#[test]
fn augmentation_rate_and_feasibility() {
    let f = PRESET.timing().2;
    let cons = PerturbationConstraints::new(PRESET.bounds(), 0.5);
    let histories = target_histories(&corpus());
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let p = 0.3;
    let n = 10_000;
    let drawn = (0..n).filter(|i| augment_points(&histories[i % histories.len()], f, &cons, p, &mut rng).1).count();
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((drawn as f64 - n as f64 * p).abs() < 4.0 * sd, "{drawn} draws");

    for i in 0..1000 {
        let h = &histories[i % histories.len()];
        let (out, changed) = augment_points(h, f, &cons, 1.0, &mut rng);
        assert!(changed);
        let delta: Vec<Vec2> = out.iter().zip(h).map(|(a, b)| *a - *b).collect();
        assert!(check_window(h, f, 0, &delta, &cons).is_feasible(), "draw {i}");
    }
}

#[test]
fn rule_based_scores_separate_random_perturbations() {
    let f = PRESET.timing().2;
    let cons = PerturbationConstraints::new(PRESET.bounds(), 1.0);
    let histories = target_histories(&corpus());
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let detector = Detector::rule_based(1.0).unwrap();
    let normal: Vec<f64> = histories.iter().map(|h| detector.score(h, f).unwrap()).collect();
    let perturbed: Vec<f64> =
        histories.iter().map(|h| detector.score(&augment_points(h, f, &cons, 1.0, &mut rng).0, f).unwrap()).collect();
    let auc = Roc::from_scores(&normal, &perturbed).auc;
    assert!(auc > 0.8, "AUC {auc}");
}
