//! Language-inferred prior graph: waypoint and landmark variables tied
//! together by verb and relation templates.

use crate::factor_graph::{
    marginals, optimize, FactorGraph, GaussianFactor, GaussianNoise, GraphError,
    MarginalCovariance, SolverConfig, VariableId, Values,
};
use crate::instruction::{ActionVerb, InstructionIR, SpatialRelation};
use crate::se2::{Point2, Pose2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_TEMPLATES: &str = include_str!("../assets/templates.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("no template for verb {0}")]
    MissingVerb(ActionVerb),
    #[error("no template for relation {0}")]
    MissingRelation(SpatialRelation),
    #[error("invalid template table: {0}")]
    InvalidTemplates(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerbTemplate {
    pub mean: Pose2,
    pub sigma: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationTemplate {
    pub mean: Point2,
    pub sigma: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateTable {
    /// Standard deviations of the prior anchoring waypoint 0.
    pub anchor_sigma: [f64; 3],
    pub verbs: BTreeMap<ActionVerb, VerbTemplate>,
    pub relations: BTreeMap<SpatialRelation, RelationTemplate>,
}

impl Default for TemplateTable {
    fn default() -> Self {
        Self::from_json_str(DEFAULT_TEMPLATES).expect("shipped templates are valid")
    }
}

impl TemplateTable {
    pub fn from_json_str(text: &str) -> Result<Self, BuildError> {
        let table: TemplateTable =
            serde_json::from_str(text).map_err(|e| BuildError::InvalidTemplates(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, BuildError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BuildError::InvalidTemplates(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        let positive = |s: &[f64]| s.iter().all(|v| v.is_finite() && *v > 0.0);
        if !positive(&self.anchor_sigma) {
            return Err(BuildError::InvalidTemplates("anchor_sigma must be positive".into()));
        }
        for (verb, t) in &self.verbs {
            if !positive(&t.sigma) || !t.mean.is_finite() {
                return Err(BuildError::InvalidTemplates(format!(
                    "verb {verb}: sigmas must be positive and mean finite"
                )));
            }
        }
        for (rel, t) in &self.relations {
            if !positive(&t.sigma) || !t.mean.is_finite() {
                return Err(BuildError::InvalidTemplates(format!(
                    "relation {rel}: sigmas must be positive and mean finite"
                )));
            }
        }
        Ok(())
    }

    pub fn verb(&self, verb: ActionVerb) -> Result<&VerbTemplate, BuildError> {
        self.verbs.get(&verb).ok_or(BuildError::MissingVerb(verb))
    }

    pub fn relation(&self, rel: SpatialRelation) -> Result<&RelationTemplate, BuildError> {
        self.relations
            .get(&rel)
            .ok_or(BuildError::MissingRelation(rel))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferredLandmark {
    pub id: VariableId,
    pub label: String,
    /// Waypoint indices this landmark is related to, ascending.
    pub waypoints: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferredGraph {
    pub graph: FactorGraph,
    /// Dead-reckoned template means, expressed in the start frame.
    pub initial: Values,
    pub waypoint_vars: Vec<VariableId>,
    pub landmarks: Vec<InferredLandmark>,
    pub grounded: Vec<bool>,
}

impl InferredGraph {
    pub fn waypoint_count(&self) -> usize {
        self.waypoint_vars.len()
    }

    pub fn landmark_count(&self) -> usize {
        self.landmarks.len()
    }
}

/// Builds the prior graph for `ir`.
///
/// Shape: one pose per waypoint, one point per landmark, one `BetweenPose`
/// per action, one `PoseToPoint` per relation and a `PriorPose` at the
/// origin on waypoint 0.
pub fn build(ir: &InstructionIR, templates: &TemplateTable) -> Result<InferredGraph, BuildError> {
    let mut graph = FactorGraph::new();
    let mut initial = Values::new();

    let waypoint_vars: Vec<VariableId> = (0..ir.waypoints.len() as u32)
        .map(VariableId::waypoint)
        .collect();
    for id in &waypoint_vars {
        graph.add_variable(*id)?;
    }
    graph.add_factor(GaussianFactor::prior_pose(
        waypoint_vars[0],
        Pose2::identity(),
        GaussianNoise::from_sigmas(&templates.anchor_sigma)?,
    )?)?;

    let mut poses = vec![Pose2::identity()];
    for action in &ir.actions {
        let t = templates.verb(action.verb)?;
        graph.add_factor(GaussianFactor::between_pose(
            waypoint_vars[action.from],
            waypoint_vars[action.to],
            t.mean,
            GaussianNoise::from_sigmas(&t.sigma)?,
        )?)?;
        let next = poses[action.from].compose(&t.mean);
        poses.push(next);
    }
    for (id, pose) in waypoint_vars.iter().zip(&poses) {
        initial.insert_pose(*id, *pose)?;
    }

    let mut landmarks: Vec<InferredLandmark> = ir
        .landmarks
        .iter()
        .map(|l| InferredLandmark {
            id: VariableId::landmark(l.index as u32),
            label: l.label.trim().to_lowercase(),
            waypoints: ir.waypoints_of_landmark(l.index),
        })
        .collect();
    for l in &landmarks {
        graph.add_variable(l.id)?;
    }
    for rel in &ir.relations {
        let t = templates.relation(rel.relation)?;
        let lm = &mut landmarks[rel.landmark];
        graph.add_factor(GaussianFactor::pose_to_point(
            waypoint_vars[rel.waypoint],
            lm.id,
            t.mean,
            GaussianNoise::from_sigmas(&t.sigma)?,
        )?)?;
        // first relation decides the initial guess
        if !initial.contains(&lm.id) {
            initial.insert_point(lm.id, poses[rel.waypoint].transform_from(&t.mean))?;
        }
    }

    let grounded = vec![false; landmarks.len()];
    Ok(InferredGraph {
        graph,
        initial,
        waypoint_vars,
        landmarks,
        grounded,
    })
}

/// Optimizes the language-only graph and returns its marginals.
pub fn prior_marginals(ig: &InferredGraph) -> Result<MarginalCovariance, GraphError> {
    let (values, _) = optimize(&ig.graph, &ig.initial, &SolverConfig::default())?;
    marginals(&ig.graph, &values)
}
