//! Online estimation over robot poses, the language prior and observations.

use crate::association::{
    associate_all, inject_observation, AssociationConfig, AssociationContext, AssociationDecision,
    Detection, EmbedError, EmbeddingProvider, LandmarkBank, ObservationNoise,
};
use crate::factor_graph::{
    marginals, marginals_for, optimize, FactorGraph, FactorKind, GaussianFactor, GaussianNoise,
    GraphError, MarginalCovariance, SolverConfig, SolverReport, VariableId, Values,
};
use crate::inferred::InferredGraph;
use crate::se2::{Point2, Pose2};
use nalgebra::{DMatrix, Matrix2, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    pub odometry_sigma: [f64; 3],
    /// Replaces `odometry_sigma` with a 1e-4 standard deviation.
    pub oracle_odometry: bool,
    pub start_prior_sigma: [f64; 3],
    pub association: AssociationConfig,
    pub observation_noise: ObservationNoise,
    pub solver: SolverConfig,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            odometry_sigma: [0.02, 0.02, 0.01],
            oracle_odometry: false,
            start_prior_sigma: [1e-3, 1e-3, 1e-3],
            association: AssociationConfig::default(),
            observation_noise: ObservationNoise::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl RuntimeConfig {
    pub fn odometry_noise(&self) -> Result<GaussianNoise, GraphError> {
        if self.oracle_odometry {
            GaussianNoise::isotropic(3, 1e-4)
        } else {
            GaussianNoise::from_sigmas(&self.odometry_sigma)
        }
    }
}

fn serialize_rows<S: serde::Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
    rows.serialize(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaypointEstimate {
    pub index: usize,
    pub pose: Pose2,
    #[serde(serialize_with = "serialize_rows")]
    pub covariance: Matrix3<f64>,
    pub trace_covariance: f64,
    pub trace_information: f64,
}

impl WaypointEstimate {
    pub fn position_covariance(&self) -> Matrix2<f64> {
        self.covariance.fixed_view::<2, 2>(0, 0).into_owned()
    }

    /// Position covariance in the world frame (poses perturb in their body frame).
    pub fn world_position_covariance(&self) -> Matrix2<f64> {
        let r = self.pose.rotation_matrix();
        r * self.position_covariance() * r.transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LandmarkEstimate {
    pub index: usize,
    pub label: String,
    pub point: Point2,
    pub trace_covariance: f64,
    pub grounded: bool,
}

/// Read-only view consumed by the policy and the logs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub robot_pose: Pose2,
    pub robot_trace: f64,
    pub waypoints: Vec<WaypointEstimate>,
    pub landmarks: Vec<LandmarkEstimate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    pub odometry: Pose2,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_pose: Option<Pose2>,
    pub detections: Vec<Detection>,
    pub associations: Vec<AssociationDecision>,
    pub estimates: Snapshot,
    pub solver: Option<SolverReport>,
    pub flagged: bool,
}

pub struct RuntimeState {
    graph: FactorGraph,
    values: Values,
    marginals: MarginalCovariance,
    waypoint_vars: Vec<VariableId>,
    landmark_vars: Vec<VariableId>,
    bank: LandmarkBank,
    current_pose_index: u32,
    step_count: usize,
    flagged_steps: usize,
    config: RuntimeConfig,
    odometry_noise: GaussianNoise,
    last_report: Option<SolverReport>,
}

impl RuntimeState {
    /// Places the inferred graph at `start`, adds `X0` and solves once.
    pub fn init(
        ig: &InferredGraph,
        start: Pose2,
        provider: &dyn EmbeddingProvider,
        config: RuntimeConfig,
    ) -> Result<Self, RuntimeError> {
        let mut graph = FactorGraph::new();
        for id in ig.graph.variables() {
            graph.add_variable(*id)?;
        }
        let anchor = ig.waypoint_vars[0];
        for (_, f) in ig.graph.factors() {
            match f.kind() {
                FactorKind::PriorPose { measured } if f.keys() == [anchor] => {
                    let moved = start.compose(measured);
                    graph.add_factor(GaussianFactor::prior_pose(anchor, moved, f.noise().clone())?)?;
                }
                _ => {
                    graph.add_factor(f.clone())?;
                }
            }
        }
        let mut values = Values::new();
        for (id, v) in ig.initial.iter() {
            match v {
                crate::factor_graph::Value::Pose(p) => values.insert_pose(*id, start.compose(p))?,
                crate::factor_graph::Value::Point(p) => {
                    values.insert_point(*id, start.transform_from(p))?
                }
            }
        }
        let x0 = VariableId::robot_pose(0);
        graph.add_variable(x0)?;
        graph.add_factor(GaussianFactor::prior_pose(
            x0,
            start,
            GaussianNoise::from_sigmas(&config.start_prior_sigma)?,
        )?)?;
        values.insert_pose(x0, start)?;

        let (values, report) = optimize(&graph, &values, &config.solver)?;
        let odometry_noise = config.odometry_noise()?;
        let mut state = Self {
            graph,
            values,
            marginals: MarginalCovariance::default(),
            waypoint_vars: ig.waypoint_vars.clone(),
            landmark_vars: ig.landmarks.iter().map(|l| l.id).collect(),
            bank: LandmarkBank::new(ig, provider)?,
            current_pose_index: 0,
            step_count: 0,
            flagged_steps: 0,
            config,
            odometry_noise,
            last_report: Some(report),
        };
        state.refresh_marginals()?;
        Ok(state)
    }

    fn tracked_variables(&self) -> Vec<VariableId> {
        let mut ids = self.waypoint_vars.clone();
        ids.extend(&self.landmark_vars);
        ids.push(self.current_pose());
        ids
    }

    fn refresh_marginals(&mut self) -> Result<(), GraphError> {
        self.marginals = marginals_for(&self.graph, &self.values, &self.tracked_variables())?;
        Ok(())
    }

    pub fn current_pose(&self) -> VariableId {
        VariableId::robot_pose(self.current_pose_index)
    }

    pub fn current_pose_index(&self) -> u32 {
        self.current_pose_index
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn flagged_steps(&self) -> usize {
        self.flagged_steps
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn marginals(&self) -> &MarginalCovariance {
        &self.marginals
    }

    pub fn bank(&self) -> &LandmarkBank {
        &self.bank
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    pub fn last_report(&self) -> Option<&SolverReport> {
        self.last_report.as_ref()
    }

    pub fn robot_pose(&self) -> Pose2 {
        self.values
            .pose(&self.current_pose())
            .expect("current pose always has a value")
    }

    /// Marginals of every variable, computed on demand.
    pub fn full_marginals(&self) -> Result<MarginalCovariance, GraphError> {
        marginals(&self.graph, &self.values)
    }

    /// Appends one odometry step, associates and injects `detections` (which
    /// are taken to be sensed from the new pose) and re-optimizes.
    ///
    /// A failed or non-converged solve keeps the previous estimate, with the
    /// new pose dead-reckoned, and flags the step.
    pub fn step(
        &mut self,
        odometry: Pose2,
        detections: Vec<Detection>,
        current_waypoint: usize,
    ) -> Result<StepRecord, RuntimeError> {
        let prev = self.current_pose();
        let next = VariableId::robot_pose(self.current_pose_index + 1);
        let predicted = self.robot_pose().compose(&odometry);
        self.graph.add_variable(next)?;
        self.graph.add_factor(GaussianFactor::between_pose(
            prev,
            next,
            odometry,
            self.odometry_noise.clone(),
        )?)?;
        self.values.insert_pose(next, predicted)?;
        self.current_pose_index += 1;
        self.step_count += 1;
        self.incorporate(odometry, detections, current_waypoint)
    }

    /// Associates and injects `detections` sensed from the current pose,
    /// without moving, and re-optimizes.
    pub fn observe(&mut self, detections: Vec<Detection>, current_waypoint: usize) -> Result<StepRecord, RuntimeError> {
        self.incorporate(Pose2::identity(), detections, current_waypoint)
    }

    fn incorporate(
        &mut self,
        odometry: Pose2,
        mut detections: Vec<Detection>,
        current_waypoint: usize,
    ) -> Result<StepRecord, RuntimeError> {
        let predicted = self.robot_pose();
        for d in &mut detections {
            d.pose_index = self.current_pose_index;
        }
        let ctx = AssociationContext {
            robot_pose: predicted,
            current_waypoint,
        };
        let decisions = associate_all(&detections, &self.bank, &ctx, &self.config.association);
        for decision in &decisions {
            inject_observation(
                &mut self.graph,
                &mut self.bank,
                &self.landmark_vars,
                decision,
                &detections[decision.detection],
                &predicted,
                &self.config.observation_noise,
            )?;
        }

        let mut flagged = false;
        match optimize(&self.graph, &self.values, &self.config.solver) {
            Ok((values, report)) if report.converged => {
                self.values = values;
                self.last_report = Some(report);
            }
            Ok((_, report)) => {
                flagged = true;
                self.last_report = Some(report);
            }
            Err(_) => {
                flagged = true;
                self.last_report = None;
            }
        }
        if flagged {
            self.flagged_steps += 1;
        }
        if self.refresh_marginals().is_err() {
            flagged = true;
        }

        Ok(StepRecord {
            step: self.step_count,
            action: None,
            odometry,
            true_pose: None,
            detections,
            associations: decisions,
            estimates: self.estimates(),
            solver: self.last_report.clone(),
            flagged,
        })
    }

    /// Current MAP estimates with covariance and information traces.
    pub fn estimates(&self) -> Snapshot {
        let waypoints = self
            .waypoint_vars
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let cov = self
                    .marginals
                    .get(id)
                    .cloned()
                    .unwrap_or_else(|| DMatrix::from_diagonal_element(3, 3, f64::INFINITY));
                let covariance = Matrix3::from_fn(|r, c| cov[(r, c)]);
                let trace_information = covariance
                    .try_inverse()
                    .map(|m| m.trace())
                    .unwrap_or(f64::INFINITY);
                WaypointEstimate {
                    index: i,
                    pose: self.values.pose(id).expect("waypoint value"),
                    covariance,
                    trace_covariance: covariance.trace(),
                    trace_information,
                }
            })
            .collect();
        let landmarks = self
            .landmark_vars
            .iter()
            .enumerate()
            .map(|(j, id)| LandmarkEstimate {
                index: j,
                label: self.bank.labels[j].clone(),
                point: self.values.point(id).expect("landmark value"),
                trace_covariance: self.marginals.trace(id).unwrap_or(f64::INFINITY),
                grounded: self.bank.is_grounded(j),
            })
            .collect();
        Snapshot {
            robot_pose: self.robot_pose(),
            robot_trace: self.marginals.trace(&self.current_pose()).unwrap_or(f64::INFINITY),
            waypoints,
            landmarks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::HashedNgramProvider;
    use crate::inferred::{build, prior_marginals, TemplateTable};
    use crate::instruction::parse_constrained;

    fn piano_table() -> InferredGraph {
        let ir = parse_constrained("go forward to the piano. turn right. stop at the table.").unwrap();
        build(&ir, &TemplateTable::default()).unwrap()
    }

    fn oracle_config() -> RuntimeConfig {
        RuntimeConfig {
            oracle_odometry: true,
            ..Default::default()
        }
    }

    #[test]
    fn init_matches_prior_marginals() {
        let ig = piano_table();
        let p = HashedNgramProvider::default();
        let s = RuntimeState::init(&ig, Pose2::new(1.0, -2.0, 0.7), &p, RuntimeConfig::default()).unwrap();
        let prior = prior_marginals(&ig).unwrap();
        for w in &ig.waypoint_vars {
            let a = s.marginals().get(w).unwrap();
            let b = prior.get(w).unwrap();
            assert!((a - b).amax() < 1e-9, "{w}");
        }
        let x0 = s.marginals().get(&VariableId::robot_pose(0)).unwrap();
        assert!((x0 - DMatrix::identity(3, 3) * 1e-6).amax() < 1e-9);
        let w1 = s.values().pose(&VariableId::waypoint(1)).unwrap();
        let expect = Pose2::new(1.0, -2.0, 0.7).compose(&Pose2::new(2.0, 0.0, 0.0));
        assert!(w1.vector_difference(&expect).amax() < 1e-9);
    }

    #[test]
    fn zero_noise_step_dead_reckons() {
        let ig = piano_table();
        let p = HashedNgramProvider::default();
        let mut s = RuntimeState::init(&ig, Pose2::identity(), &p, oracle_config()).unwrap();
        let rec = s.step(Pose2::new(1.0, 0.0, 0.0), vec![], 0).unwrap();
        assert!(!rec.flagged);
        assert!(s.robot_pose().vector_difference(&Pose2::new(1.0, 0.0, 0.0)).amax() < 1e-9);
        assert_eq!(s.graph().variable_count(), 6 + 2);
    }

    #[test]
    fn detecting_the_piano_shrinks_its_waypoint() {
        let ig = piano_table();
        let p = HashedNgramProvider::default();
        let mut s = RuntimeState::init(&ig, Pose2::identity(), &p, oracle_config()).unwrap();
        let before = s.estimates();
        let d = Detection::new("piano", 1.5, 0.0, 0, &p).unwrap();
        let rec = s.step(Pose2::new(0.25, 0.0, 0.0), vec![d], 0).unwrap();
        assert_eq!(rec.associations[0].matched, Some(0));
        let after = s.estimates();
        assert!(after.landmarks[0].trace_covariance < before.landmarks[0].trace_covariance);
        assert!(after.waypoints[1].trace_covariance < before.waypoints[1].trace_covariance);
        assert!(after.landmarks[0].grounded);
        let piano = after.landmarks[0].point;
        assert!(piano.distance(&Point2::new(1.75, 0.0)) < 0.05, "{piano:?}");
    }

    #[test]
    fn information_traces_invert_covariances() {
        let ig = piano_table();
        let p = HashedNgramProvider::default();
        let s = RuntimeState::init(&ig, Pose2::identity(), &p, RuntimeConfig::default()).unwrap();
        for w in s.estimates().waypoints {
            let prod = w.covariance * w.covariance.try_inverse().unwrap();
            assert!((prod - Matrix3::identity()).amax() < 1e-6);
        }
    }

    #[test]
    fn pose_chain_tracks_step_count() {
        let ig = piano_table();
        let p = HashedNgramProvider::default();
        let mut s = RuntimeState::init(&ig, Pose2::identity(), &p, RuntimeConfig::default()).unwrap();
        for k in 0..5 {
            s.step(Pose2::new(0.25, 0.0, 0.05), vec![], 0).unwrap();
            assert_eq!(s.step_count(), k + 1);
            let poses = s
                .graph()
                .variables()
                .filter(|v| v.namespace == crate::factor_graph::Namespace::RobotPose)
                .count();
            assert_eq!(poses, s.step_count() + 1);
        }
    }
}
