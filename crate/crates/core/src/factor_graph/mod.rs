//! Gaussian factor graphs over SE(2) poses and 2D points.
//!
//! A [`FactorGraph`] holds variable declarations and [`GaussianFactor`]s; an
//! assignment lives in [`Values`]. [`optimize`] runs Levenberg-Marquardt on
//! the whitened least-squares problem and [`marginals`] recovers per-variable
//! covariance from the information matrix at a linearization point.

mod envelope;
mod factor;
mod marginals;
mod solver;

pub use factor::{FactorKind, GaussianFactor, GaussianNoise, Linearized};
pub use marginals::{marginals, marginals_for, MarginalCovariance};
pub use solver::{optimize, SolverConfig, SolverReport};

use crate::se2::{Point2, Pose2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("variable {0} already declared")]
    DuplicateVariable(VariableId),
    #[error("unknown variable {0}")]
    UnknownVariable(VariableId),
    #[error("unknown factor {0:?}")]
    UnknownFactor(FactorId),
    #[error("variable {id} is a {actual:?}, expected a {expected:?}")]
    KindMismatch {
        id: VariableId,
        expected: VariableKind,
        actual: VariableKind,
    },
    #[error("no value for variable {0}")]
    MissingValue(VariableId),
    #[error("non-finite value for variable {0}")]
    NonFinite(VariableId),
    #[error("covariance is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("noise dimension {actual} does not match residual dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("indeterminate system: unconstrained variables {}", format_ids(.0))]
    Indeterminate(Vec<VariableId>),
    #[error("singular information matrix: null space touches {}", format_ids(.0))]
    SingularInformation(Vec<VariableId>),
}

fn format_ids(ids: &[VariableId]) -> String {
    let names: Vec<String> = ids.iter().map(ToString::to_string).collect();
    format!("[{}]", names.join(", "))
}

/// The four variable families of the joint problem.
///
/// Declaration order is also the elimination order used by the solver:
/// robot poses form a chain and go first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Namespace {
    RobotPose,
    InferredWaypoint,
    InferredLandmark,
    ObservedLandmark,
}

impl Namespace {
    fn prefix(self) -> char {
        match self {
            Namespace::RobotPose => 'X',
            Namespace::InferredWaypoint => 'W',
            Namespace::InferredLandmark => 'L',
            Namespace::ObservedLandmark => 'O',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VariableKind {
    Pose,
    Point,
}

impl VariableKind {
    /// Tangent-space dimension.
    pub fn dim(self) -> usize {
        match self {
            VariableKind::Pose => 3,
            VariableKind::Point => 2,
        }
    }
}

/// Key of a graph variable. The kind follows from the namespace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableId {
    pub namespace: Namespace,
    pub index: u32,
}

impl VariableId {
    pub const fn new(namespace: Namespace, index: u32) -> Self {
        Self { namespace, index }
    }

    pub const fn robot_pose(index: u32) -> Self {
        Self::new(Namespace::RobotPose, index)
    }

    pub const fn waypoint(index: u32) -> Self {
        Self::new(Namespace::InferredWaypoint, index)
    }

    pub const fn landmark(index: u32) -> Self {
        Self::new(Namespace::InferredLandmark, index)
    }

    pub const fn observed_landmark(index: u32) -> Self {
        Self::new(Namespace::ObservedLandmark, index)
    }

    pub fn kind(&self) -> VariableKind {
        match self.namespace {
            Namespace::RobotPose | Namespace::InferredWaypoint => VariableKind::Pose,
            Namespace::InferredLandmark | Namespace::ObservedLandmark => VariableKind::Point,
        }
    }

    pub fn dim(&self) -> usize {
        self.kind().dim()
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.namespace.prefix(), self.index)
    }
}

impl FromStr for VariableId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let namespace = match chars.next() {
            Some('X') => Namespace::RobotPose,
            Some('W') => Namespace::InferredWaypoint,
            Some('L') => Namespace::InferredLandmark,
            Some('O') => Namespace::ObservedLandmark,
            _ => return Err(format!("bad variable id {s:?}")),
        };
        let index = chars
            .as_str()
            .parse()
            .map_err(|_| format!("bad variable id {s:?}"))?;
        Ok(Self::new(namespace, index))
    }
}

impl Serialize for VariableId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VariableId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Pose(Pose2),
    Point(Point2),
}

impl Value {
    pub fn kind(&self) -> VariableKind {
        match self {
            Value::Pose(_) => VariableKind::Pose,
            Value::Point(_) => VariableKind::Point,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Value::Pose(p) => p.is_finite(),
            Value::Point(p) => p.is_finite(),
        }
    }

    /// Applies a tangent-space step.
    pub(crate) fn retract(&self, step: &[f64]) -> Value {
        match self {
            Value::Pose(p) => {
                Value::Pose(p.retract(&nalgebra::Vector3::new(step[0], step[1], step[2])))
            }
            Value::Point(p) => Value::Point(p.retract(&nalgebra::Vector2::new(step[0], step[1]))),
        }
    }

    /// Position part of either kind.
    pub fn position(&self) -> Point2 {
        match self {
            Value::Pose(p) => p.translation(),
            Value::Point(p) => *p,
        }
    }
}

/// A full or partial variable assignment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Values {
    map: BTreeMap<VariableId, Value>,
}

impl Values {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: VariableId, value: Value) -> Result<(), GraphError> {
        if id.kind() != value.kind() {
            return Err(GraphError::KindMismatch {
                id,
                expected: id.kind(),
                actual: value.kind(),
            });
        }
        if !value.is_finite() {
            return Err(GraphError::NonFinite(id));
        }
        self.map.insert(id, value);
        Ok(())
    }

    pub fn insert_pose(&mut self, id: VariableId, pose: Pose2) -> Result<(), GraphError> {
        self.insert(id, Value::Pose(pose))
    }

    pub fn insert_point(&mut self, id: VariableId, point: Point2) -> Result<(), GraphError> {
        self.insert(id, Value::Point(point))
    }

    pub fn get(&self, id: &VariableId) -> Option<&Value> {
        self.map.get(id)
    }

    pub fn pose(&self, id: &VariableId) -> Result<Pose2, GraphError> {
        match self.map.get(id) {
            Some(Value::Pose(p)) => Ok(*p),
            Some(v) => Err(GraphError::KindMismatch {
                id: *id,
                expected: VariableKind::Pose,
                actual: v.kind(),
            }),
            None => Err(GraphError::MissingValue(*id)),
        }
    }

    pub fn point(&self, id: &VariableId) -> Result<Point2, GraphError> {
        match self.map.get(id) {
            Some(Value::Point(p)) => Ok(*p),
            Some(v) => Err(GraphError::KindMismatch {
                id: *id,
                expected: VariableKind::Point,
                actual: v.kind(),
            }),
            None => Err(GraphError::MissingValue(*id)),
        }
    }

    pub fn contains(&self, id: &VariableId) -> bool {
        self.map.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VariableId, &Value)> {
        self.map.iter()
    }

    pub(crate) fn set_unchecked(&mut self, id: VariableId, value: Value) {
        self.map.insert(id, value);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FactorId(pub u64);

/// Variables plus the factors constraining them.
#[derive(Clone, Debug, Default)]
pub struct FactorGraph {
    variables: BTreeSet<VariableId>,
    factors: BTreeMap<FactorId, GaussianFactor>,
    next_factor: u64,
}

impl PartialEq for FactorGraph {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
            && self.factors.values().eq(other.factors.values())
    }
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, id: VariableId) -> Result<(), GraphError> {
        if !self.variables.insert(id) {
            return Err(GraphError::DuplicateVariable(id));
        }
        Ok(())
    }

    pub fn add_factor(&mut self, factor: GaussianFactor) -> Result<FactorId, GraphError> {
        for key in factor.keys() {
            if !self.variables.contains(key) {
                return Err(GraphError::UnknownVariable(*key));
            }
        }
        let id = FactorId(self.next_factor);
        self.next_factor += 1;
        self.factors.insert(id, factor);
        Ok(id)
    }

    pub fn remove_factor(&mut self, id: FactorId) -> Result<GaussianFactor, GraphError> {
        self.factors.remove(&id).ok_or(GraphError::UnknownFactor(id))
    }

    pub fn contains(&self, id: &VariableId) -> bool {
        self.variables.contains(id)
    }

    pub fn variables(&self) -> impl Iterator<Item = &VariableId> {
        self.variables.iter()
    }

    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn factors(&self) -> impl Iterator<Item = (&FactorId, &GaussianFactor)> {
        self.factors.iter()
    }

    pub fn factor(&self, id: FactorId) -> Option<&GaussianFactor> {
        self.factors.get(&id)
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    /// Total whitened squared error `Σ‖r‖²` at `values`.
    pub fn error(&self, values: &Values) -> Result<f64, GraphError> {
        let mut total = 0.0;
        for f in self.factors.values() {
            total += f.whitened_error(values)?.norm_squared();
        }
        Ok(total)
    }

    /// Checks that every variable has a value of the right kind.
    pub fn check_values(&self, values: &Values) -> Result<(), GraphError> {
        for id in &self.variables {
            match values.get(id) {
                None => return Err(GraphError::MissingValue(*id)),
                Some(v) if v.kind() != id.kind() => {
                    return Err(GraphError::KindMismatch {
                        id: *id,
                        expected: id.kind(),
                        actual: v.kind(),
                    })
                }
                Some(v) if !v.is_finite() => return Err(GraphError::NonFinite(*id)),
                _ => {}
            }
        }
        Ok(())
    }

    /// Variables that belong to a connected component containing no prior.
    pub fn unanchored_variables(&self) -> Vec<VariableId> {
        let ids: Vec<VariableId> = self.variables.iter().copied().collect();
        let index: BTreeMap<VariableId, usize> =
            ids.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut anchored_vars = Vec::new();
        for f in self.factors.values() {
            let keys = f.keys();
            if f.is_prior() {
                anchored_vars.push(index[&keys[0]]);
            }
            for pair in keys.windows(2) {
                let a = find(&mut parent, index[&pair[0]]);
                let b = find(&mut parent, index[&pair[1]]);
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let anchored: BTreeSet<usize> = anchored_vars
            .into_iter()
            .map(|i| find(&mut parent, i))
            .collect();
        (0..ids.len())
            .filter(|&i| !anchored.contains(&find(&mut parent, i)))
            .map(|i| ids[i])
            .collect()
    }

    /// Text dump, one line per variable and per factor.
    pub fn dump(&self, values: Option<&Values>) -> String {
        let mut out = String::new();
        for id in &self.variables {
            let kind = match id.kind() {
                VariableKind::Pose => "pose",
                VariableKind::Point => "point",
            };
            out.push_str(&format!("variable {id} {kind}"));
            match values.and_then(|v| v.get(id)) {
                Some(Value::Pose(p)) => {
                    out.push_str(&format!(" {:.6} {:.6} {:.6}", p.x(), p.y(), p.theta()))
                }
                Some(Value::Point(p)) => out.push_str(&format!(" {:.6} {:.6}", p.x, p.y)),
                None => {}
            }
            out.push('\n');
        }
        for (id, f) in &self.factors {
            out.push_str(&format!("factor {} {}\n", id.0, f.describe()));
        }
        out
    }
}
