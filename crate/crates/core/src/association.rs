//! Matching detections to instruction landmarks by label-embedding cosine
//! similarity, and turning matches into observation factors.

use crate::factor_graph::{FactorGraph, FactorId, GaussianFactor, GaussianNoise, GraphError, VariableId};
use crate::http::{HttpTransport, Transport, TransportError};
use crate::inferred::InferredGraph;
use crate::se2::{wrap_angle, Point2, Pose2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed an empty label")]
    EmptyLabel,
    #[error("embedding dimension {0} is below the minimum of 64")]
    DimensionTooSmall(usize),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("malformed embedding reply: {0}")]
    MalformedReply(String),
}

/// Maps a label to a unit-norm vector. Implementations are deterministic.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, label: &str) -> Result<Vec<f64>, EmbedError>;
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Cosine similarity; independent of the input scales.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashed character-trigram embedding.
///
/// Each word is padded with one space on both sides and its trigrams are
/// hashed into `dimension` buckets. The last word of a label counts twice,
/// so a modifier ("brown couch") stays close to its head noun ("couch").
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashedNgramProvider {
    dimension: usize,
}

impl HashedNgramProvider {
    pub const DEFAULT_DIMENSION: usize = 256;
    const HEAD_WEIGHT: f64 = 2.0;

    pub fn new(dimension: usize) -> Result<Self, EmbedError> {
        if dimension < 64 {
            return Err(EmbedError::DimensionTooSmall(dimension));
        }
        Ok(Self { dimension })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

impl Default for HashedNgramProvider {
    fn default() -> Self {
        Self {
            dimension: Self::DEFAULT_DIMENSION,
        }
    }
}

impl EmbeddingProvider for HashedNgramProvider {
    fn embed(&self, label: &str) -> Result<Vec<f64>, EmbedError> {
        let lower = label.to_lowercase();
        let words: Vec<&str> = lower.split_whitespace().collect();
        if words.is_empty() {
            return Err(EmbedError::EmptyLabel);
        }
        let mut v = vec![0.0; self.dimension];
        for (i, word) in words.iter().enumerate() {
            let weight = if i + 1 == words.len() {
                Self::HEAD_WEIGHT
            } else {
                1.0
            };
            let padded: Vec<char> = std::iter::once(' ')
                .chain(word.chars())
                .chain(std::iter::once(' '))
                .collect();
            for tri in padded.windows(3) {
                let s: String = tri.iter().collect();
                let bucket = (fnv1a(s.as_bytes()) % self.dimension as u64) as usize;
                v[bucket] += weight;
            }
        }
        Ok(normalize(v).expect("at least one trigram per word"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingClientConfig {
    pub endpoint: String,
    pub api_key_env: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: f64,
}

impl Default for EmbeddingClientConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            api_key_env: None,
            model: None,
            timeout_secs: 30.0,
        }
    }
}

/// Embeddings from an HTTP endpoint, memoized per label.
///
/// Accepted replies: a bare float array, `{"embedding": [...]}`, or
/// `{"data": [{"embedding": [...]}]}`.
pub struct HttpEmbeddingProvider<T: Transport = HttpTransport> {
    config: EmbeddingClientConfig,
    transport: T,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl<T: Transport> HttpEmbeddingProvider<T> {
    pub fn with_transport(config: EmbeddingClientConfig, transport: T) -> Self {
        Self {
            config,
            transport,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn fetch(&self, label: &str) -> Result<Vec<f64>, EmbedError> {
        let mut body = serde_json::json!({ "input": label });
        if let Some(model) = &self.config.model {
            body["model"] = serde_json::Value::String(model.clone());
        }
        let token = self
            .config
            .api_key_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok());
        let reply = self.transport.post_json(
            &self.config.endpoint,
            token.as_deref(),
            &body,
            Duration::from_secs_f64(self.config.timeout_secs.max(1e-3)),
        )?;
        let value: serde_json::Value = serde_json::from_str(&reply)
            .map_err(|e| EmbedError::MalformedReply(e.to_string()))?;
        let array = if value.is_array() {
            &value
        } else if let Some(e) = value.get("embedding") {
            e
        } else if let Some(e) = value.pointer("/data/0/embedding") {
            e
        } else {
            return Err(EmbedError::MalformedReply("no embedding array in reply".into()));
        };
        let raw: Vec<f64> = serde_json::from_value(array.clone())
            .map_err(|e| EmbedError::MalformedReply(e.to_string()))?;
        normalize(raw).ok_or_else(|| EmbedError::MalformedReply("zero or non-finite vector".into()))
    }
}

impl HttpEmbeddingProvider<HttpTransport> {
    pub fn new(config: EmbeddingClientConfig) -> Self {
        Self::with_transport(config, HttpTransport)
    }
}

impl<T: Transport> EmbeddingProvider for HttpEmbeddingProvider<T> {
    fn embed(&self, label: &str) -> Result<Vec<f64>, EmbedError> {
        let key = label.trim().to_lowercase();
        if key.is_empty() {
            return Err(EmbedError::EmptyLabel);
        }
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let v = self.fetch(&key)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, v.clone());
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    #[serde(skip)]
    pub embedding: Vec<f64>,
    pub range: f64,
    pub bearing: f64,
    pub pose_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_landmark_id: Option<usize>,
}

impl Detection {
    pub fn new(
        label: &str,
        range: f64,
        bearing: f64,
        pose_index: u32,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, EmbedError> {
        Ok(Self {
            label: label.to_string(),
            embedding: provider.embed(label)?,
            range: range.max(0.0),
            bearing: wrap_angle(bearing),
            pose_index,
            true_landmark_id: None,
        })
    }

    /// Detected point in the observing pose's frame.
    pub fn local_point(&self) -> Point2 {
        Point2::new(self.range * self.bearing.cos(), self.range * self.bearing.sin())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gating {
    /// Ungrounded landmarks, plus grounded ones re-observed near a previous match.
    Ungated,
    /// Only landmarks related to the current or the next landmark-bearing waypoint.
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    pub threshold: f64,
    pub gating: Gating,
    pub reobservation_radius: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            threshold: 0.8,
            gating: Gating::Ungated,
            reobservation_radius: 1.5,
        }
    }
}

/// Range-proportional isotropic noise on observation factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationNoise {
    pub base_sigma: f64,
    pub sigma_per_meter: f64,
}

impl Default for ObservationNoise {
    fn default() -> Self {
        Self {
            base_sigma: 0.1,
            sigma_per_meter: 0.05,
        }
    }
}

impl ObservationNoise {
    pub fn sigma(&self, range: f64) -> f64 {
        self.base_sigma + self.sigma_per_meter * range
    }
}

/// Per-episode association memory: landmark embeddings and match history.
#[derive(Clone, Debug)]
pub struct LandmarkBank {
    pub labels: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
    /// Waypoints each landmark relates to.
    pub waypoints: Vec<Vec<usize>>,
    /// World positions at which each landmark was matched so far.
    pub matches: Vec<Vec<Point2>>,
}

impl LandmarkBank {
    pub fn new(ig: &InferredGraph, provider: &dyn EmbeddingProvider) -> Result<Self, EmbedError> {
        let mut embeddings = Vec::with_capacity(ig.landmarks.len());
        for l in &ig.landmarks {
            embeddings.push(provider.embed(&l.label)?);
        }
        Ok(Self {
            labels: ig.landmarks.iter().map(|l| l.label.clone()).collect(),
            embeddings,
            waypoints: ig.landmarks.iter().map(|l| l.waypoints.clone()).collect(),
            matches: vec![Vec::new(); ig.landmarks.len()],
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_grounded(&self, j: usize) -> bool {
        !self.matches[j].is_empty()
    }
}

/// Where the agent is in the instruction, used by sequential gating.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssociationContext {
    /// Robot pose estimate used to place detections in the world.
    pub robot_pose: Pose2,
    /// Index of the last waypoint reached (0 at the start).
    pub current_waypoint: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssociationDecision {
    pub detection: usize,
    pub label: String,
    /// Index into the landmark list of the inferred graph.
    pub matched: Option<usize>,
    pub similarity: f64,
}

fn candidates(bank: &LandmarkBank, d: &Detection, ctx: &AssociationContext, cfg: &AssociationConfig) -> Vec<usize> {
    match cfg.gating {
        Gating::Ungated => {
            let world = ctx.robot_pose.transform_from(&d.local_point());
            (0..bank.len())
                .filter(|&j| {
                    !bank.is_grounded(j)
                        || bank.matches[j]
                            .iter()
                            .any(|p| p.distance(&world) <= cfg.reobservation_radius)
                })
                .collect()
        }
        Gating::Sequential => {
            let next = (ctx.current_waypoint + 1..)
                .take_while(|&w| bank.waypoints.iter().any(|ws| ws.iter().any(|&x| x >= w)))
                .find(|&w| bank.waypoints.iter().any(|ws| ws.contains(&w)));
            (0..bank.len())
                .filter(|&j| {
                    bank.waypoints[j]
                        .iter()
                        .any(|&w| w == ctx.current_waypoint || Some(w) == next)
                })
                .collect()
        }
    }
}

/// Best candidate by cosine similarity; ties go to the lower landmark index.
/// No match when the best similarity is below the threshold.
pub fn associate(
    detection_index: usize,
    d: &Detection,
    bank: &LandmarkBank,
    ctx: &AssociationContext,
    cfg: &AssociationConfig,
) -> AssociationDecision {
    let mut best: Option<(usize, f64)> = None;
    for j in candidates(bank, d, ctx, cfg) {
        let s = cosine(&d.embedding, &bank.embeddings[j]);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    let (matched, similarity) = match best {
        Some((j, s)) if s >= cfg.threshold => (Some(j), s),
        Some((_, s)) => (None, s),
        None => (None, 0.0),
    };
    AssociationDecision {
        detection: detection_index,
        label: d.label.clone(),
        matched,
        similarity,
    }
}

/// Associates a batch of simultaneous detections. A landmark keeps at most one
/// detection per batch: the most similar one, earlier detection on ties.
pub fn associate_all(
    detections: &[Detection],
    bank: &LandmarkBank,
    ctx: &AssociationContext,
    cfg: &AssociationConfig,
) -> Vec<AssociationDecision> {
    let mut decisions: Vec<AssociationDecision> = detections
        .iter()
        .enumerate()
        .map(|(i, d)| associate(i, d, bank, ctx, cfg))
        .collect();
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for i in 0..decisions.len() {
        let Some(j) = decisions[i].matched else { continue };
        match owner.get(&j) {
            Some(&k) if decisions[k].similarity >= decisions[i].similarity => {
                decisions[i].matched = None;
            }
            Some(&k) => {
                decisions[k].matched = None;
                owner.insert(j, i);
            }
            None => {
                owner.insert(j, i);
            }
        }
    }
    decisions
}

/// Adds the observation factor for a matched detection and records the match.
pub fn inject_observation(
    graph: &mut FactorGraph,
    bank: &mut LandmarkBank,
    landmark_vars: &[VariableId],
    decision: &AssociationDecision,
    d: &Detection,
    robot_pose_estimate: &Pose2,
    noise: &ObservationNoise,
) -> Result<Option<FactorId>, GraphError> {
    let Some(j) = decision.matched else {
        return Ok(None);
    };
    let pose = VariableId::robot_pose(d.pose_index);
    let landmark = *landmark_vars
        .get(j)
        .ok_or(GraphError::UnknownVariable(VariableId::landmark(j as u32)))?;
    let factor = GaussianFactor::pose_to_point(
        pose,
        landmark,
        d.local_point(),
        GaussianNoise::isotropic(2, noise.sigma(d.range))?,
    )?;
    let id = graph.add_factor(factor)?;
    bank.matches[j].push(robot_pose_estimate.transform_from(&d.local_point()));
    Ok(Some(id))
}
