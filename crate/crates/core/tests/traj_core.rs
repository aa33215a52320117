use advtraj::constraints::{check_feasible, Perturbation, PerturbationConstraints};
use advtraj::generator::{generate_scene, DatasetPreset, ScenarioFamily};
use advtraj::geometry::Vec2;
use advtraj::kinematics::{kinematics, kinematics_of};
use advtraj::scene::{load_scene, save_scene, SceneFormat, SceneParams};
use proptest::prelude::*;

fn preset() -> impl Strategy<Value = DatasetPreset> {
    prop::sample::select(DatasetPreset::ALL.to_vec())
}

fn family() -> impl Strategy<Value = ScenarioFamily> {
    prop::sample::select(ScenarioFamily::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn json_round_trip_keeps_coordinates(p in preset(), f in family(), seed in any::<u64>()) {
        let scene = generate_scene(p, f, seed);
        let mut buf = Vec::new();
        save_scene(&scene, &mut buf, &SceneFormat::Json).unwrap();
        let back = load_scene(buf.as_slice(), SceneFormat::Json).unwrap();
        prop_assert_eq!(back.object_count(), scene.object_count());
        for (a, b) in scene.trajectories().iter().zip(back.trajectories()) {
            prop_assert_eq!(a.id(), b.id());
            for (x, y) in a.positions().iter().zip(b.positions()) {
                prop_assert!((*x - y).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn csv_round_trip_keeps_coordinates(p in preset(), f in family(), seed in any::<u64>()) {
        let scene = generate_scene(p, f, seed);
        let params = SceneParams {
            id: scene.id().to_string(),
            frequency_hz: scene.frequency_hz(),
            l_i: scene.l_i(),
            l_o: scene.l_o(),
            target_id: scene.target_id().to_string(),
        };
        let mut buf = Vec::new();
        save_scene(&scene, &mut buf, &SceneFormat::Csv(params.clone())).unwrap();
        let back = load_scene(buf.as_slice(), SceneFormat::Csv(params)).unwrap();
        for (a, b) in scene.trajectories().iter().zip(back.trajectories()) {
            for (x, y) in a.positions().iter().zip(b.positions()) {
                prop_assert!((*x - y).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn reversal_reverses_speeds(points in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 4..20)) {
        let pts: Vec<Vec2> = points.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
        let mut rev = pts.clone();
        rev.reverse();
        let mut forward = kinematics_of(&pts, 2.0).unwrap().speed;
        forward.reverse();
        let backward = kinematics_of(&rev, 2.0).unwrap().speed;
        for (a, b) in forward.iter().zip(&backward) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn straight_constant_speed_has_no_lateral_acceleration(
        speed in 0.5..30.0f64,
        f in prop::sample::select(vec![2.0, 5.0, 10.0]),
        n in 4usize..30,
    ) {
        let pts: Vec<Vec2> = (0..n).map(|k| Vec2::new(k as f64 * speed / f, 7.5)).collect();
        let k = kinematics_of(&pts, f).unwrap();
        prop_assert!(k.lat_accel.iter().all(|&a| a == 0.0));
        prop_assert!(k.lat_jerk.iter().all(|&j| j == 0.0));
    }

    #[test]
    fn generated_scenes_are_feasible_under_their_preset(p in preset(), f in family(), seed in any::<u64>()) {
        let scene = generate_scene(p, f, seed);
        let cons = PerturbationConstraints::new(p.bounds(), 1.0);
        let zero = Perturbation::zeros(scene.frame_count());
        prop_assert!(check_feasible(&scene, &zero, &cons).is_feasible());
    }
}

#[test]
fn generator_examples() {
    let straight = generate_scene(DatasetPreset::ApolloscapeLike, ScenarioFamily::Straight, 0);
    let speed = kinematics(straight.target(), straight.frequency_hz()).unwrap().speed;
    assert!(speed.iter().all(|v| (v - speed[0]).abs() < 1e-9));
    assert!(speed[0] > 0.0 && speed[0] <= DatasetPreset::ApolloscapeLike.bounds().max_speed);

    let a = generate_scene(DatasetPreset::NgsimLike, ScenarioFamily::LaneChange, 1);
    let b = generate_scene(DatasetPreset::NgsimLike, ScenarioFamily::LaneChange, 1);
    let (mut ja, mut jb) = (Vec::new(), Vec::new());
    save_scene(&a, &mut ja, &SceneFormat::Json).unwrap();
    save_scene(&b, &mut jb, &SceneFormat::Json).unwrap();
    assert_eq!(ja, jb);
}
