//! Deterministic 2D world: scenes, episodes, discrete kinematics and a
//! field-of-view landmark sensor.

pub mod generator;
pub mod geometry;

pub use generator::{generate_episode_suite, write_suite, GeneratedSuite, GeneratorConfig, GeneratorError};

use crate::association::{Detection, EmbedError, EmbeddingProvider};
use crate::instruction::InstructionIR;
use crate::se2::{wrap_angle, Point2, Pose2};
use geometry::{point_segment_distance, segments_intersect};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid JSON in {path}: {message}")]
    Json { path: String, message: String },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| SimError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SimError> {
    let io = |e: std::io::Error| SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(io)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneLandmark {
    pub id: usize,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

impl SceneLandmark {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wall {
    pub a: Point2,
    pub b: Point2,
}

impl Serialize for Wall {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.a.x, self.a.y, self.b.x, self.b.y].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Wall {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[f64; 4]>::deserialize(d)?;
        Ok(Wall {
            a: Point2::new(x1, y1),
            b: Point2::new(x2, y2),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }
}

impl Serialize for Bounds {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.xmin, self.ymin, self.xmax, self.ymax].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Bounds {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [xmin, ymin, xmax, ymax] = <[f64; 4]>::deserialize(d)?;
        Ok(Bounds {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub landmarks: Vec<SceneLandmark>,
    pub walls: Vec<Wall>,
    pub bounds: Bounds,
}

impl Scene {
    pub fn validate(&self) -> Result<(), SimError> {
        let b = &self.bounds;
        if !(b.xmax > b.xmin && b.ymax > b.ymin) {
            return Err(SimError::InvalidScene("bounds are empty".into()));
        }
        let mut ids = BTreeSet::new();
        for l in &self.landmarks {
            if !ids.insert(l.id) {
                return Err(SimError::InvalidScene(format!("duplicate landmark id {}", l.id)));
            }
            if l.label.trim().is_empty() {
                return Err(SimError::InvalidScene(format!("landmark {} has an empty label", l.id)));
            }
            if !l.position().is_finite() || !b.contains(&l.position()) {
                return Err(SimError::InvalidScene(format!("landmark {} lies outside the bounds", l.id)));
            }
        }
        for (i, w) in self.walls.iter().enumerate() {
            if !w.a.is_finite() || !w.b.is_finite() {
                return Err(SimError::InvalidScene(format!("wall {i} is not finite")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let scene: Scene = read_json(path)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        write_json(path, self)
    }

    pub fn landmark(&self, id: usize) -> Option<&SceneLandmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }

    /// True when the open segment `a`-`b` crosses no wall.
    pub fn segment_clear(&self, a: &Point2, b: &Point2) -> bool {
        !self
            .walls
            .iter()
            .any(|w| segments_intersect(a, b, &w.a, &w.b))
    }

    /// Distance from `p` to the closest wall (infinite without walls).
    pub fn wall_clearance(&self, p: &Point2) -> f64 {
        self.walls
            .iter()
            .map(|w| point_segment_distance(p, &w.a, &w.b))
            .fold(f64::INFINITY, f64::min)
    }

    /// A disc of `radius` around `p` lies inside the bounds and off every wall.
    pub fn is_free(&self, p: &Point2, radius: f64) -> bool {
        let b = &self.bounds;
        p.x >= b.xmin + radius
            && p.x <= b.xmax - radius
            && p.y >= b.ymin + radius
            && p.y <= b.ymax - radius
            && self.wall_clearance(p) >= radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    #[serde(default)]
    pub id: String,
    /// Scene file, relative to the episode file.
    pub scene: String,
    pub start: Pose2,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ir: Option<InstructionIR>,
    pub reference_path: Vec<Point2>,
    pub goal: Point2,
    pub seed: u64,
}

impl Episode {
    pub fn validate(&self) -> Result<(), SimError> {
        let (Some(first), Some(last)) = (self.reference_path.first(), self.reference_path.last()) else {
            return Err(SimError::InvalidEpisode(format!("{}: empty reference path", self.id)));
        };
        if first.distance(&self.start.translation()) > 1e-6 {
            return Err(SimError::InvalidEpisode(format!(
                "{}: reference path does not start at the start position",
                self.id
            )));
        }
        if last.distance(&self.goal) > 1e-6 {
            return Err(SimError::InvalidEpisode(format!(
                "{}: reference path does not end at the goal",
                self.id
            )));
        }
        if let Some(ir) = &self.ir {
            ir.validate()
                .map_err(|e| SimError::InvalidEpisode(format!("{}: {e}", self.id)))?;
        }
        Ok(())
    }

    /// Loads an episode; a missing id defaults to the file stem.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let mut ep: Episode = read_json(path)?;
        if ep.id.is_empty() {
            ep.id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        ep.validate()?;
        Ok(ep)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        write_json(path, self)
    }

    pub fn scene_path(&self, episode_path: &Path) -> PathBuf {
        episode_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&self.scene)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentAction {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl AgentAction {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentAction::Forward => "FORWARD",
            AgentAction::TurnLeft => "TURN_LEFT",
            AgentAction::TurnRight => "TURN_RIGHT",
            AgentAction::Stop => "STOP",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub step_length: f64,
    pub turn_angle: f64,
    pub agent_radius: f64,
    pub odometry_sigma: [f64; 3],
    /// Exact odometry readings.
    pub noiseless: bool,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            step_length: 0.25,
            turn_angle: PI / 12.0,
            agent_radius: 0.18,
            odometry_sigma: [0.02, 0.02, 0.01],
            noiseless: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ActionOutcome {
    pub pose: Pose2,
    pub odometry: Pose2,
    pub collision: bool,
}

fn noisy_odometry<R: Rng>(truth: Pose2, cfg: &MotionConfig, rng: &mut R) -> Pose2 {
    if cfg.noiseless {
        return truth;
    }
    let mut v = truth.to_vector();
    for (i, s) in cfg.odometry_sigma.iter().enumerate() {
        if *s > 0.0 {
            v[i] += Normal::new(0.0, *s).expect("positive sigma").sample(rng);
        }
    }
    Pose2::from_vector(&v)
}

fn move_allowed(scene: &Scene, from: &Point2, to: &Point2, radius: f64) -> bool {
    scene.segment_clear(from, to) && scene.is_free(to, radius)
}

/// Executes one discrete action on the true pose and returns the odometry
/// reading. A blocked move leaves the pose unchanged and reads zero motion
/// plus noise. `STOP` never moves and reads exactly zero.
pub fn apply_action<R: Rng>(
    pose: &Pose2,
    action: AgentAction,
    scene: &Scene,
    cfg: &MotionConfig,
    rng: &mut R,
) -> ActionOutcome {
    let (next, collision) = match action {
        AgentAction::Stop => {
            return ActionOutcome {
                pose: *pose,
                odometry: Pose2::identity(),
                collision: false,
            }
        }
        AgentAction::TurnLeft => (pose.compose(&Pose2::new(0.0, 0.0, cfg.turn_angle)), false),
        AgentAction::TurnRight => (pose.compose(&Pose2::new(0.0, 0.0, -cfg.turn_angle)), false),
        AgentAction::Forward => {
            let cand = pose.compose(&Pose2::new(cfg.step_length, 0.0, 0.0));
            if move_allowed(scene, &pose.translation(), &cand.translation(), cfg.agent_radius) {
                (cand, false)
            } else {
                (*pose, true)
            }
        }
    };
    ActionOutcome {
        pose: next,
        odometry: noisy_odometry(pose.between(&next), cfg, rng),
        collision,
    }
}

/// Moves straight to `target` with heading along the motion (oracle
/// navigator). Refused like a blocked `FORWARD` when the segment is not free.
pub fn apply_teleport<R: Rng>(
    pose: &Pose2,
    target: &Point2,
    scene: &Scene,
    cfg: &MotionConfig,
    rng: &mut R,
) -> ActionOutcome {
    let from = pose.translation();
    let dx = target.x - from.x;
    let dy = target.y - from.y;
    let heading = if dx.hypot(dy) > 1e-9 {
        dy.atan2(dx)
    } else {
        pose.theta()
    };
    let cand = Pose2::new(target.x, target.y, heading);
    let (next, collision) = if move_allowed(scene, &from, target, cfg.agent_radius) {
        (cand, false)
    } else {
        (*pose, true)
    };
    ActionOutcome {
        pose: next,
        odometry: noisy_odometry(pose.between(&next), cfg, rng),
        collision,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub fov_half_angle: f64,
    pub max_range: f64,
    pub range_sigma: f64,
    pub bearing_sigma: f64,
    pub misclassify_prob: f64,
    pub confusion_vocabulary: Vec<String>,
    pub occlusion_enabled: bool,
    pub oracle_mode: bool,
}

pub const CONFUSION_VOCABULARY: [&str; 20] = [
    "television", "fireplace", "tv stand", "armchair", "sofa", "bookshelf", "plant", "lamp",
    "rug", "cabinet", "mirror", "painting", "stool", "desk", "bench", "piano", "table", "chair",
    "bed", "door",
];

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            fov_half_angle: PI / 4.0,
            max_range: 5.0,
            range_sigma: 0.1,
            bearing_sigma: 2f64.to_radians(),
            misclassify_prob: 0.05,
            confusion_vocabulary: CONFUSION_VOCABULARY.iter().map(|s| s.to_string()).collect(),
            occlusion_enabled: true,
            oracle_mode: false,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.misclassify_prob) {
            return Err("misclassify_prob must lie in [0, 1]".into());
        }
        if !(self.max_range > 0.0 && self.fov_half_angle > 0.0) {
            return Err("max_range and fov_half_angle must be positive".into());
        }
        if self.range_sigma < 0.0 || self.bearing_sigma < 0.0 {
            return Err("sensor sigmas must be non-negative".into());
        }
        if self.misclassify_prob > 0.0 && self.confusion_vocabulary.is_empty() {
            return Err("misclassification needs a confusion vocabulary".into());
        }
        Ok(())
    }
}

/// Landmarks visible from `pose`, in scene order, with sensor noise applied.
pub fn sense<R: Rng>(
    pose: &Pose2,
    scene: &Scene,
    cfg: &SensorConfig,
    provider: &dyn EmbeddingProvider,
    rng: &mut R,
) -> Result<Vec<Detection>, EmbedError> {
    let mut out = Vec::new();
    for lm in &scene.landmarks {
        let local = pose.transform_to(&lm.position());
        let range = local.norm();
        let bearing = local.y.atan2(local.x);
        if range > cfg.max_range || bearing.abs() > cfg.fov_half_angle {
            continue;
        }
        if cfg.occlusion_enabled && !scene.segment_clear(&pose.translation(), &lm.position()) {
            continue;
        }
        let mut d = if cfg.oracle_mode {
            let mut d = Detection::new(&lm.label, range, bearing, 0, provider)?;
            d.true_landmark_id = Some(lm.id);
            d
        } else {
            let r = if cfg.range_sigma > 0.0 {
                range + Normal::new(0.0, cfg.range_sigma).expect("sigma").sample(rng)
            } else {
                range
            };
            let b = if cfg.bearing_sigma > 0.0 {
                bearing + Normal::new(0.0, cfg.bearing_sigma).expect("sigma").sample(rng)
            } else {
                bearing
            };
            let label = if rng.random::<f64>() < cfg.misclassify_prob {
                let k = rng.random_range(0..cfg.confusion_vocabulary.len());
                cfg.confusion_vocabulary[k].clone()
            } else {
                lm.label.clone()
            };
            Detection::new(&label, r.max(0.0), wrap_angle(b), 0, provider)?
        };
        d.pose_index = 0;
        out.push(d);
    }
    Ok(out)
}
