//! Structured decomposition of a navigation instruction.
//!
//! An [`InstructionIR`] lists the waypoints to visit, the landmarks mentioned,
//! one action between each pair of consecutive waypoints, and the
//! waypoint-to-landmark relations. It can come from a JSON file
//! ([`load_ir`]), the rule-based parser ([`parse_constrained`]) or a remote
//! decomposer ([`decompose_remote`]). All three paths return only validated IR.

mod decomposer;
mod parser;

pub use decomposer::{decompose_remote, DecomposeError, DecomposerClient, DecomposerConfig};
pub use parser::parse_constrained;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("invalid instruction IR: {0}")]
    Invariant(String),
    #[error("sentence {index} could not be parsed: {text:?}")]
    UnparseableSentence { index: usize, text: String },
    #[error("instruction has no sentences")]
    Empty,
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionVerb {
    Forward,
    TurnLeft,
    TurnRight,
    TurnAround,
    Pass,
    Enter,
    Stop,
}

impl ActionVerb {
    pub const ALL: [ActionVerb; 7] = [
        ActionVerb::Forward,
        ActionVerb::TurnLeft,
        ActionVerb::TurnRight,
        ActionVerb::TurnAround,
        ActionVerb::Pass,
        ActionVerb::Enter,
        ActionVerb::Stop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionVerb::Forward => "FORWARD",
            ActionVerb::TurnLeft => "TURN_LEFT",
            ActionVerb::TurnRight => "TURN_RIGHT",
            ActionVerb::TurnAround => "TURN_AROUND",
            ActionVerb::Pass => "PASS",
            ActionVerb::Enter => "ENTER",
            ActionVerb::Stop => "STOP",
        }
    }

    /// Accepts the canonical names plus lowercase / spaced spellings.
    pub fn parse(s: &str) -> Option<Self> {
        let norm = normalize_token(s);
        let verb = match norm.as_str() {
            "FORWARD" | "GO_FORWARD" | "MOVE_FORWARD" | "GO" => ActionVerb::Forward,
            "TURN_LEFT" | "LEFT" => ActionVerb::TurnLeft,
            "TURN_RIGHT" | "RIGHT" => ActionVerb::TurnRight,
            "TURN_AROUND" | "AROUND" => ActionVerb::TurnAround,
            "PASS" | "GO_PAST" | "PAST" => ActionVerb::Pass,
            "ENTER" => ActionVerb::Enter,
            "STOP" => ActionVerb::Stop,
            _ => return None,
        };
        Some(verb)
    }
}

impl fmt::Display for ActionVerb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpatialRelation {
    At,
    LeftOf,
    RightOf,
    Ahead,
    Behind,
    Past,
}

impl SpatialRelation {
    pub const ALL: [SpatialRelation; 6] = [
        SpatialRelation::At,
        SpatialRelation::LeftOf,
        SpatialRelation::RightOf,
        SpatialRelation::Ahead,
        SpatialRelation::Behind,
        SpatialRelation::Past,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpatialRelation::At => "AT",
            SpatialRelation::LeftOf => "LEFT_OF",
            SpatialRelation::RightOf => "RIGHT_OF",
            SpatialRelation::Ahead => "AHEAD",
            SpatialRelation::Behind => "BEHIND",
            SpatialRelation::Past => "PAST",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        SpatialRelation::ALL
            .into_iter()
            .find(|r| r.as_str() == normalize_token(s))
    }
}

impl fmt::Display for SpatialRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn normalize_token(s: &str) -> String {
    s.trim()
        .split(|c: char| c.is_whitespace() || c == '-' || c == '_')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
        .to_uppercase()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaypointRecord {
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub index: usize,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ActionRecord {
    pub from: usize,
    pub to: usize,
    pub verb: ActionVerb,
    pub phrase: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RelationRecord {
    pub waypoint: usize,
    pub landmark: usize,
    pub relation: SpatialRelation,
    pub phrase: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InstructionIR {
    pub raw_text: String,
    pub waypoints: Vec<WaypointRecord>,
    pub landmarks: Vec<LandmarkRecord>,
    pub actions: Vec<ActionRecord>,
    pub relations: Vec<RelationRecord>,
    /// Non-fatal normalizations applied while reading (e.g. unknown verbs).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Wire form with verbs and relations as free strings.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIr {
    raw_text: String,
    waypoints: Vec<WaypointRecord>,
    landmarks: Vec<LandmarkRecord>,
    actions: Vec<RawAction>,
    relations: Vec<RawRelation>,
    #[serde(default)]
    warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawAction {
    from: usize,
    to: usize,
    verb: String,
    phrase: String,
}

#[derive(Debug, Deserialize)]
struct RawRelation {
    waypoint: usize,
    landmark: usize,
    relation: String,
    phrase: String,
}

impl<'de> Deserialize<'de> for InstructionIR {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawIr::deserialize(deserializer)?;
        InstructionIR::from_raw(raw).map_err(serde::de::Error::custom)
    }
}

impl InstructionIR {
    fn from_raw(raw: RawIr) -> Result<Self, IrError> {
        let mut warnings = raw.warnings;
        let mut actions = Vec::with_capacity(raw.actions.len());
        for (i, a) in raw.actions.into_iter().enumerate() {
            let verb = match ActionVerb::parse(&a.verb) {
                Some(v) => v,
                None => {
                    warnings.push(format!(
                        "actions[{i}]: unknown verb {:?} treated as FORWARD",
                        a.verb
                    ));
                    ActionVerb::Forward
                }
            };
            actions.push(ActionRecord {
                from: a.from,
                to: a.to,
                verb,
                phrase: a.phrase,
            });
        }
        let mut relations = Vec::with_capacity(raw.relations.len());
        for (i, r) in raw.relations.into_iter().enumerate() {
            let relation = SpatialRelation::parse(&r.relation).ok_or_else(|| {
                IrError::Schema(format!(
                    "relations[{i}].relation: unknown relation {:?}",
                    r.relation
                ))
            })?;
            relations.push(RelationRecord {
                waypoint: r.waypoint,
                landmark: r.landmark,
                relation,
                phrase: r.phrase,
            });
        }
        Ok(Self {
            raw_text: raw.raw_text,
            waypoints: raw.waypoints,
            landmarks: raw.landmarks,
            actions,
            relations,
            warnings,
        })
    }

    /// Checks every structural invariant. Pure; calling it twice gives the same answer.
    pub fn validate(&self) -> Result<(), IrError> {
        let n = self.waypoints.len();
        if n < 2 {
            return Err(IrError::Invariant(format!(
                "need at least 2 waypoints, found {n}"
            )));
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if w.index != i {
                return Err(IrError::Invariant(format!(
                    "waypoints[{i}].index is {}, indices must be contiguous from 0",
                    w.index
                )));
            }
        }
        for (j, l) in self.landmarks.iter().enumerate() {
            if l.index != j {
                return Err(IrError::Invariant(format!(
                    "landmarks[{j}].index is {}, indices must be contiguous from 0",
                    l.index
                )));
            }
            if l.label.trim().is_empty() {
                return Err(IrError::Invariant(format!("landmarks[{j}].label is empty")));
            }
        }
        if self.actions.len() != n - 1 {
            return Err(IrError::Invariant(format!(
                "expected {} actions for {n} waypoints, found {}",
                n - 1,
                self.actions.len()
            )));
        }
        for (k, a) in self.actions.iter().enumerate() {
            if a.from != k || a.to != k + 1 {
                return Err(IrError::Invariant(format!(
                    "actions[{k}] connects {} -> {}, expected {k} -> {}",
                    a.from,
                    a.to,
                    k + 1
                )));
            }
        }
        let mut referenced = vec![false; self.landmarks.len()];
        for (i, r) in self.relations.iter().enumerate() {
            if r.waypoint >= n {
                return Err(IrError::Invariant(format!(
                    "relations[{i}].waypoint {} out of range (0..{n})",
                    r.waypoint
                )));
            }
            if r.landmark >= self.landmarks.len() {
                return Err(IrError::Invariant(format!(
                    "relations[{i}].landmark {} out of range (0..{})",
                    r.landmark,
                    self.landmarks.len()
                )));
            }
            referenced[r.landmark] = true;
        }
        if let Some(j) = referenced.iter().position(|r| !r) {
            return Err(IrError::Invariant(format!(
                "landmarks[{j}] is not referenced by any relation"
            )));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, IrError> {
        let ir: InstructionIR =
            serde_json::from_str(text).map_err(|e| IrError::Schema(e.to_string()))?;
        ir.validate()?;
        Ok(ir)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("IR serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), IrError> {
        std::fs::write(path, self.to_json_pretty() + "\n").map_err(|e| IrError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn waypoint_count(&self) -> usize {
        self.waypoints.len()
    }

    /// Waypoints related to landmark `landmark`.
    pub fn waypoints_of_landmark(&self, landmark: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .relations
            .iter()
            .filter(|r| r.landmark == landmark)
            .map(|r| r.waypoint)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Reads and validates IR JSON.
pub fn load_ir(path: &Path) -> Result<InstructionIR, IrError> {
    let text = std::fs::read_to_string(path).map_err(|e| IrError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    InstructionIR::from_json_str(&text)
}
