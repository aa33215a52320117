use advtraj::constraints::PerturbationConstraints;
use advtraj::generator::{generate_corpus, generate_scene, DatasetPreset, ScenarioFamily};
use advtraj::geometry::Vec2;
use advtraj::metrics::ErrorReport;
use advtraj::mitigation::Augmenter;
use advtraj::predictors::{
    train, ConstantAcceleration, ConstantVelocity, Model, NeuralPredictor, PredictionRequest, Predictor, TrainOptions,
};
use advtraj::scene::{ObjectKind, Scene, Trajectory};
use proptest::prelude::*;

const L_I: usize = 6;
const L_O: usize = 6;

fn models() -> Vec<Model> {
    let corpus = generate_corpus(DatasetPreset::ApolloscapeLike, 8, 3);
    vec![
        ConstantVelocity::new(L_I, L_O).into(),
        ConstantAcceleration::new(L_I, L_O).into(),
        NeuralPredictor::for_dataset(&corpus, L_I, L_O, 16, 5).into(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_move_with_the_scene_and_are_pure(
        family in prop::sample::select(ScenarioFamily::ALL.to_vec()),
        seed in any::<u64>(),
        shift in (-500.0..500.0f64, -500.0..500.0f64),
    ) {
        let scene = generate_scene(DatasetPreset::ApolloscapeLike, family, seed);
        let req = PredictionRequest::from_scene(&scene, L_I - 1, L_I, L_O).unwrap();
        let t = Vec2::new(shift.0, shift.1);
        let moved = req.map_histories(|pts| pts.iter().map(|p| *p + t).collect());
        for model in models() {
            let a = model.predict(&req).unwrap();
            prop_assert_eq!(&a, &model.predict(&req).unwrap());
            let b = model.predict(&moved).unwrap();
            for (pa, pb) in a.iter().zip(&b) {
                for (x, y) in pa.points.iter().zip(&pb.points) {
                    prop_assert!((*x + t - *y).norm() <= 1e-9 * (1.0 + t.norm()), "{}", model.kind());
                }
            }
        }
    }
}

/// One vehicle driving a straight line at constant speed, sampled at 2 Hz for 15 s.
fn straight_line(i: u64) -> Scene {
    let heading = i as f64 * 0.7;
    let speed = 4.0 + (i % 9) as f64 * 1.5;
    let start = Vec2::new(i as f64 * 13.0 - 200.0, 50.0 - i as f64 * 7.0);
    let step = Vec2::from_angle(heading) * (speed / 2.0);
    let pts: Vec<Vec2> = (0..30).map(|k| start + step * k as f64).collect();
    let traj = Trajectory::from_positions("ov", ObjectKind::Vehicle, 0, &pts).unwrap();
    Scene::new(format!("line_{i}"), 2.0, L_I, L_O, "ov", vec![traj]).unwrap()
}

#[test]
fn training_learns_constant_speed_motion() {
    let scenes: Vec<Scene> = (0..48).map(straight_line).collect();
    let (fit, held_out) = scenes.split_at(40);
    let model = NeuralPredictor::for_dataset(fit, L_I, L_O, 16, 0);
    let out = train(model, fit, &TrainOptions { epochs: 400, ..TrainOptions::default() }).unwrap();
    assert!(out.loss_history.last().unwrap() < &out.loss_history[0]);
    let mut total = 0.0;
    for scene in held_out {
        let req = PredictionRequest::from_scene(scene, L_I - 1, L_I, L_O).unwrap();
        let pred = out.model.predict_target(&req).unwrap();
        let truth = &scene.target().positions()[L_I..L_I + L_O];
        total += ErrorReport::compute(&pred, truth).unwrap().ade;
    }
    let ade = total / held_out.len() as f64;
    assert!(ade < 0.1, "held-out ADE {ade}");
}

#[test]
fn zero_radius_augmentation_changes_nothing() {
    let scenes = generate_corpus(DatasetPreset::ApolloscapeLike, 6, 1);
    let model = NeuralPredictor::for_dataset(&scenes, L_I, L_O, 8, 2);
    let mut aug = Augmenter::new(PerturbationConstraints::new(DatasetPreset::ApolloscapeLike.bounds(), 0.0));
    aug.probability = 1.0;
    let base = TrainOptions { epochs: 5, ..TrainOptions::default() };
    let with = TrainOptions { augmentation: Some(&aug), ..TrainOptions { epochs: 5, ..TrainOptions::default() } };
    let a = train(model.clone(), &scenes, &base).unwrap();
    let b = train(model, &scenes, &with).unwrap();
    assert_eq!(a.loss_history, b.loss_history);
}
