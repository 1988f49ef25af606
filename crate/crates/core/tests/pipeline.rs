mod common;

use common::{dense_marginals, workspace_root};
use langslam::association::{
    associate_all, inject_observation, AssociationConfig, AssociationContext, Detection, HashedNgramProvider,
    LandmarkBank, ObservationNoise,
};
use langslam::factor_graph::{optimize, marginals, SolverConfig, VariableId};
use langslam::inferred::{build, prior_marginals, TemplateTable};
use langslam::instruction::{load_ir, parse_constrained, InstructionIR};
use langslam::se2::{Point2, Pose2};
use std::path::PathBuf;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

const PIANO_TABLE: &str = "go forward to the piano. turn right. stop at the table.";

#[test]
fn piano_table_parses_to_the_golden_ir() {
    let golden = load_ir(&fixture("piano_table_ir.json")).unwrap();
    assert_eq!(parse_constrained(PIANO_TABLE).unwrap(), golden);
    assert_eq!(golden.waypoints.len(), 4);
    let labels: Vec<&str> = golden.landmarks.iter().map(|l| l.label.as_str()).collect();
    assert_eq!(labels, ["piano", "table"]);
}

#[test]
fn pass_instruction_parses_to_the_hand_built_ir() {
    let golden = load_ir(&fixture("bench_carpet_ir.json")).unwrap();
    assert_eq!(parse_constrained("go past the bench. turn left. stop at the carpet.").unwrap(), golden);
}

#[test]
fn dangling_relation_file_is_rejected() {
    let err = load_ir(&fixture("dangling_relation_ir.json")).unwrap_err();
    assert!(err.to_string().contains("landmark"), "{err}");
}

#[test]
fn saved_ir_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ir.json");
    let ir = parse_constrained(PIANO_TABLE).unwrap();
    ir.save(&path).unwrap();
    assert_eq!(load_ir(&path).unwrap(), ir);
    assert_eq!(InstructionIR::from_json_str(&ir.to_json_pretty()).unwrap(), ir);
}

#[test]
fn prior_marginals_match_dense_inverse() {
    let ig = build(&parse_constrained(PIANO_TABLE).unwrap(), &TemplateTable::default()).unwrap();
    let lib = prior_marginals(&ig).unwrap();
    let (values, _) = optimize(&ig.graph, &ig.initial, &SolverConfig::default()).unwrap();
    let oracle = dense_marginals(&ig.graph, &values);
    for (k, m) in &oracle {
        let gap = (lib.get(k).unwrap() - m).amax();
        assert!(gap < 1e-6 * m.amax().max(1.0), "{k}: {gap:e}");
    }
    let w = |i| oracle[&VariableId::waypoint(i)].trace();
    assert!(w(3) > w(1) && w(1) > w(0));
}

#[test]
fn benchmark_templates_load() {
    let t = TemplateTable::load(&workspace_root().join("configs/templates_benchmark.json")).unwrap();
    t.validate().unwrap();
}

/// Noiseless piano sighting from a known pose, checked against the dense
/// inverse of the post-injection information matrix.
#[test]
fn post_injection_marginals_match_dense_inverse() {
    let ig = build(&parse_constrained(PIANO_TABLE).unwrap(), &TemplateTable::default()).unwrap();
    let provider = HashedNgramProvider::default();
    let mut bank = LandmarkBank::new(&ig, &provider).unwrap();
    let mut graph = ig.graph.clone();
    let x0 = VariableId::robot_pose(0);
    graph.add_variable(x0).unwrap();
    graph
        .add_factor(
            langslam::factor_graph::GaussianFactor::prior_pose(
                x0,
                Pose2::identity(),
                langslam::factor_graph::GaussianNoise::isotropic(3, 1e-3).unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
    let mut init = ig.initial.clone();
    init.insert_pose(x0, Pose2::identity()).unwrap();
    let (before_values, _) = optimize(&graph, &init, &SolverConfig::default()).unwrap();
    let before = marginals(&graph, &before_values).unwrap();

    let d = Detection::new("piano", 2.5, 0.0, 0, &provider).unwrap();
    let ctx = AssociationContext {
        robot_pose: Pose2::identity(),
        current_waypoint: 0,
    };
    let decisions = associate_all(std::slice::from_ref(&d), &bank, &ctx, &AssociationConfig::default());
    assert_eq!(decisions[0].matched, Some(0));
    let vars: Vec<VariableId> = ig.landmarks.iter().map(|l| l.id).collect();
    inject_observation(&mut graph, &mut bank, &vars, &decisions[0], &d, &Pose2::identity(), &ObservationNoise::default())
        .unwrap();
    assert!(bank.is_grounded(0));

    let (v, _) = optimize(&graph, &before_values, &SolverConfig::default()).unwrap();
    let piano = v.point(&VariableId::landmark(0)).unwrap();
    assert!(piano.distance(&Point2::new(2.5, 0.0)) < 0.05, "{piano:?}");
    let lib = marginals(&graph, &v).unwrap();
    for (k, m) in dense_marginals(&graph, &v) {
        assert!((lib.get(&k).unwrap() - &m).amax() < 1e-6 * m.amax().max(1.0), "{k}");
    }
    let l0 = VariableId::landmark(0);
    assert!(lib.trace(&l0).unwrap() < before.trace(&l0).unwrap());
    // every waypoint downstream of the grounded landmark tightens
    for i in 1..4 {
        let w = VariableId::waypoint(i);
        assert!(lib.trace(&w).unwrap() < before.trace(&w).unwrap(), "{w}");
    }
}
