mod common;

use common::{gauss_newton, value_gap};
use langslam::association::HashedNgramProvider;
use langslam::factor_graph::{Namespace, Value, Values, VariableId};
use langslam::inferred::{build, prior_marginals, InferredGraph, TemplateTable};
use langslam::instruction::parse_constrained;
use langslam::runtime::{RuntimeConfig, RuntimeState};
use langslam::se2::Pose2;
use langslam::sim::{apply_action, sense, AgentAction, MotionConfig, Scene, SensorConfig};
use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

fn scene() -> Scene {
    Scene::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/piano_table_scene.json")).unwrap()
}

fn piano_table() -> InferredGraph {
    build(
        &parse_constrained("go forward to the piano. turn right. stop at the table.").unwrap(),
        &TemplateTable::default(),
    )
    .unwrap()
}

/// Dead-reckoned values for every variable of the runtime graph.
fn scratch_init(ig: &InferredGraph, start: Pose2, odometry: &[Pose2]) -> Values {
    let mut v = Values::new();
    for (k, val) in ig.initial.iter() {
        match val {
            Value::Pose(p) => v.insert_pose(*k, start.compose(p)).unwrap(),
            Value::Point(p) => v.insert_point(*k, start.transform_from(p)).unwrap(),
        }
    }
    let mut pose = start;
    v.insert_pose(VariableId::robot_pose(0), pose).unwrap();
    for (i, o) in odometry.iter().enumerate() {
        pose = pose.compose(o);
        v.insert_pose(VariableId::robot_pose(i as u32 + 1), pose).unwrap();
    }
    v
}

const SCRIPT: [AgentAction; 10] = [
    AgentAction::Forward,
    AgentAction::Forward,
    AgentAction::Forward,
    AgentAction::Forward,
    AgentAction::Forward,
    AgentAction::Forward,
    AgentAction::Forward,
    AgentAction::Forward,
    AgentAction::TurnRight,
    AgentAction::TurnRight,
];

struct Scripted {
    ig: InferredGraph,
    rt: RuntimeState,
    odometry: Vec<Pose2>,
    associated: usize,
}

fn run_script(seed: u64) -> Scripted {
    let scene = scene();
    let ig = piano_table();
    let provider = HashedNgramProvider::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rt = RuntimeState::init(&ig, Pose2::identity(), &provider, RuntimeConfig::default()).unwrap();
    let (mut truth, mut odometry, mut associated) = (Pose2::identity(), Vec::new(), 0);
    let sensor = SensorConfig {
        misclassify_prob: 0.0,
        ..Default::default()
    };
    for action in SCRIPT {
        let out = apply_action(&truth, action, &scene, &MotionConfig::default(), &mut rng);
        truth = out.pose;
        odometry.push(out.odometry);
        let dets = sense(&truth, &scene, &sensor, &provider, &mut rng).unwrap();
        let rec = rt.step(out.odometry, dets, 0).unwrap();
        assert!(!rec.flagged);
        associated += rec.associations.iter().filter(|a| a.matched.is_some()).count();
    }
    Scripted {
        ig,
        rt,
        odometry,
        associated,
    }
}

#[test]
fn scripted_run_matches_batch_solution() {
    for seed in [1, 2, 3] {
        let s = run_script(seed);
        assert!(s.associated > 0);
        assert_eq!(s.rt.step_count(), 10);
        let batch = gauss_newton(s.rt.graph(), &scratch_init(&s.ig, Pose2::identity(), &s.odometry));
        for w in &s.ig.waypoint_vars {
            let online = s.rt.values().pose(w).unwrap();
            let offline = batch.pose(w).unwrap();
            assert!(online.translation().distance(&offline.translation()) < 0.3, "seed {seed} {w}");
        }
        // warm-started incremental solve agrees with the batch optimum everywhere
        for (k, v) in s.rt.values().iter() {
            let gap = value_gap(v, batch.get(k).unwrap());
            assert!(gap < 1e-4, "seed {seed} {k}: {gap:e}");
        }
    }
}

#[test]
fn scripted_snapshot_is_consistent() {
    let s = run_script(5);
    let snap = s.rt.estimates();
    for w in &snap.waypoints {
        let prod = w.covariance * w.covariance.try_inverse().unwrap();
        assert!((prod - Matrix3::identity()).amax() < 1e-6);
        assert!((w.trace_information - w.covariance.try_inverse().unwrap().trace()).abs() < 1e-6 * w.trace_information);
    }
    assert!(snap.landmarks.iter().all(|l| l.grounded));
    let poses = s.rt.graph().variables().filter(|v| v.namespace == Namespace::RobotPose).count();
    assert_eq!(poses, s.rt.step_count() + 1);
}

#[test]
fn no_association_never_beats_the_language_prior() {
    let ig = piano_table();
    let prior = prior_marginals(&ig).unwrap();
    let provider = HashedNgramProvider::default();
    let mut rt = RuntimeState::init(&ig, Pose2::new(0.5, -1.0, 0.3), &provider, RuntimeConfig::default()).unwrap();
    for k in 0..15 {
        rt.step(Pose2::new(0.25, 0.0, if k % 4 == 0 { 0.26 } else { 0.0 }), vec![], 0).unwrap();
        for w in &ig.waypoint_vars {
            let now = rt.marginals().trace(w).unwrap();
            assert!(now >= prior.trace(w).unwrap() - 1e-9, "{w}");
        }
    }
}
