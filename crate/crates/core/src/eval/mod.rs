//! Episode runner, suite aggregation, metrics and plots.

pub mod metrics;
pub mod svg;

pub use metrics::{dtw, ndtw, success_metrics, EpisodeMetrics, MetricsError, Thresholds};
pub use svg::{ellipse_axes, emit_trajectory_svg, PlotData};

use crate::association::{EmbeddingClientConfig, EmbeddingProvider, HashedNgramProvider, HttpEmbeddingProvider};
use crate::inferred::{build, TemplateTable};
use crate::instruction::{decompose_remote, parse_constrained, DecomposerClient, DecomposerConfig, InstructionIR};
use crate::policy::{policy_step, PolicyConfig, PolicyDecision, PolicyState, Raster};
use crate::runtime::{RuntimeConfig, RuntimeState, StepRecord};
use crate::se2::{Point2, Pose2};
use crate::sim::generator::SuiteManifest;
use crate::sim::{apply_action, apply_teleport, read_json, sense, AgentAction, Episode, MotionConfig, Scene, SensorConfig};
use nalgebra::Matrix2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("episode {id}: {message}")]
    Failed { id: String, message: String },
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read suite {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavigatorMode {
    /// A* controller emitting discrete actions under noisy motion.
    Controller,
    /// Moves one step along the planned route with exact odometry.
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionSource {
    /// Inline episode IR when present, otherwise the constrained parser.
    Inline,
    Parser,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSource {
    Hashed { dimension: usize },
    Remote(EmbeddingClientConfig),
}

/// Every tunable of a run; echoed into each summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullConfig {
    pub templates: TemplateTable,
    /// Template table file, relative to the config file; replaces `templates` on load.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates_file: Option<PathBuf>,
    pub motion: MotionConfig,
    pub sensor: SensorConfig,
    pub runtime: RuntimeConfig,
    pub policy: PolicyConfig,
    pub navigator: NavigatorMode,
    pub thresholds: Thresholds,
    pub step_budget: usize,
    pub instruction_source: InstructionSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposer: Option<DecomposerConfig>,
    pub embedding: EmbeddingSource,
    pub write_logs: bool,
}

impl Default for FullConfig {
    fn default() -> Self {
        Self {
            templates: TemplateTable::default(),
            templates_file: None,
            motion: MotionConfig::default(),
            sensor: SensorConfig::default(),
            runtime: RuntimeConfig::default(),
            policy: PolicyConfig::default(),
            navigator: NavigatorMode::Controller,
            thresholds: Thresholds::default(),
            step_budget: 500,
            instruction_source: InstructionSource::Inline,
            decomposer: None,
            embedding: EmbeddingSource::Hashed { dimension: 256 },
            write_logs: true,
        }
    }
}

impl FullConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        if let Some(file) = &cfg.templates_file {
            let full = path.parent().unwrap_or(Path::new(".")).join(file);
            cfg.templates = TemplateTable::load(&full).map_err(|e| ConfigError::Invalid(format!("{}: {e}", full.display())))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.templates.validate().map_err(|e| invalid(e.to_string()))?;
        self.sensor.validate().map_err(invalid)?;
        self.policy.validate().map_err(|e| invalid(e.to_string()))?;
        self.runtime.odometry_noise().map_err(|e| invalid(e.to_string()))?;
        if !(self.thresholds.d_success > 0.0) || !(self.thresholds.d_th > 0.0) {
            return Err(invalid("thresholds must be positive".into()));
        }
        if self.step_budget == 0 {
            return Err(invalid("step_budget must be positive".into()));
        }
        if !(self.motion.step_length > 0.0) || !(self.motion.turn_angle > 0.0) || !(self.motion.agent_radius >= 0.0) {
            return Err(invalid("motion step, turn and radius must be positive".into()));
        }
        if self.instruction_source == InstructionSource::Remote && self.decomposer.is_none() {
            return Err(invalid("instruction_source remote needs a decomposer section".into()));
        }
        if let EmbeddingSource::Hashed { dimension } = self.embedding {
            HashedNgramProvider::new(dimension).map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Settings actually used for an episode: the oracle navigator implies
    /// exact motion and near-zero odometry noise.
    pub fn effective(&self) -> FullConfig {
        let mut c = self.clone();
        if c.navigator == NavigatorMode::Oracle {
            c.motion.noiseless = true;
            c.runtime.oracle_odometry = true;
        }
        c.policy.step_length = c.motion.step_length;
        c
    }

    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>, ConfigError> {
        Ok(match &self.embedding {
            EmbeddingSource::Hashed { dimension } => {
                Box::new(HashedNgramProvider::new(*dimension).map_err(|e| ConfigError::Invalid(e.to_string()))?)
            }
            EmbeddingSource::Remote(c) => Box::new(HttpEmbeddingProvider::new(c.clone())),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub id: String,
    pub success: bool,
    pub oracle_success: bool,
    pub stop_called: bool,
    pub steps: usize,
    pub spl: f64,
    pub ndtw: f64,
    pub dtw: f64,
    pub path_length: f64,
    pub reference_length: f64,
    pub final_distance: f64,
    pub visited_waypoints: usize,
    pub waypoint_count: usize,
    pub flagged_steps: usize,
    pub unreachable_steps: usize,
    pub collisions: usize,
    pub agent_path: Vec<Point2>,
    pub actions: Vec<AgentAction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_path: Option<String>,
}

#[derive(Serialize)]
struct InitLine<'a> {
    step: usize,
    true_pose: Pose2,
    runtime: &'a StepRecord,
}

#[derive(Serialize)]
struct StepLine<'a> {
    step: usize,
    action: AgentAction,
    true_pose: Pose2,
    collision: bool,
    policy: &'a PolicyDecision,
    runtime: &'a StepRecord,
}

/// Per-episode RNG seed for a run seed `k`; `k = 0` keeps the suite seed.
pub fn episode_seed(episode_seed: u64, k: u64) -> u64 {
    if k == 0 {
        episode_seed
    } else {
        episode_seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17)
    }
}

pub fn resolve_ir(episode: &Episode, cfg: &FullConfig) -> Result<InstructionIR, String> {
    match cfg.instruction_source {
        InstructionSource::Inline => match &episode.ir {
            Some(ir) => Ok(ir.clone()),
            None => parse_constrained(&episode.instruction).map_err(|e| e.to_string()),
        },
        InstructionSource::Parser => parse_constrained(&episode.instruction).map_err(|e| e.to_string()),
        InstructionSource::Remote => {
            let dc = cfg.decomposer.clone().ok_or("missing decomposer config")?;
            let client = DecomposerClient::new(dc).map_err(|e| e.to_string())?;
            decompose_remote(&episode.instruction, &client).map_err(|e| e.to_string())
        }
    }
}

fn fail(id: &str, message: impl ToString) -> EpisodeError {
    EpisodeError::Failed {
        id: id.to_string(),
        message: message.to_string(),
    }
}

/// Runs one episode until STOP or the step budget. Metrics use the true
/// positions recorded once per action.
pub fn run_episode(
    episode: &Episode,
    scene: &Scene,
    cfg: &FullConfig,
    provider: &dyn EmbeddingProvider,
    run_seed: u64,
    log_path: Option<&Path>,
) -> Result<EpisodeResult, EpisodeError> {
    let id = episode.id.as_str();
    let cfg = cfg.effective();
    let ir = resolve_ir(episode, &cfg).map_err(|e| fail(id, e))?;
    let ig = build(&ir, &cfg.templates).map_err(|e| fail(id, e))?;
    let mut rt = RuntimeState::init(&ig, episode.start, provider, cfg.runtime.clone()).map_err(|e| fail(id, e))?;
    let raster = Raster::from_scene(scene, cfg.policy.raster_resolution, cfg.policy.inflation.max(cfg.motion.agent_radius));
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(episode.seed, run_seed));
    let mut ps = PolicyState::new(ig.waypoint_count());

    let mut log = match log_path {
        Some(p) => {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir).map_err(|e| fail(id, e))?;
            }
            Some(BufWriter::new(std::fs::File::create(p).map_err(|e| fail(id, e))?))
        }
        None => None,
    };
    let mut true_pose = episode.start;
    let mut agent_path = vec![true_pose.translation()];
    let mut actions = Vec::new();
    let (mut stop_called, mut unreachable_steps, mut collisions) = (false, 0, 0);
    let write_line = |log: &mut Option<BufWriter<std::fs::File>>, line: String| -> Result<(), EpisodeError> {
        if let Some(w) = log.as_mut() {
            w.write_all(line.as_bytes()).and_then(|_| w.write_all(b"\n")).map_err(|e| fail(id, e))?;
        }
        Ok(())
    };
    // the robot perceives once before its first decision
    let detections = sense(&true_pose, scene, &cfg.sensor, provider, &mut rng).map_err(|e| fail(id, e))?;
    let mut record = rt.observe(detections, 0).map_err(|e| fail(id, e))?;
    if log.is_some() {
        record.true_pose = Some(true_pose);
        let line = serde_json::to_string(&InitLine {
            step: 0,
            true_pose,
            runtime: &record,
        })
        .expect("serializable");
        write_line(&mut log, line)?;
    }

    for _ in 0..cfg.step_budget {
        let snap = rt.estimates();
        let decision = policy_step(&snap, &mut ps, &raster, &cfg.policy, &mut rng);
        if decision.action == AgentAction::Stop {
            stop_called = true;
            actions.push(AgentAction::Stop);
            if log.is_some() {
                let record = StepRecord {
                    step: rt.step_count() + 1,
                    action: Some("STOP".into()),
                    odometry: Pose2::identity(),
                    true_pose: Some(true_pose),
                    detections: vec![],
                    associations: vec![],
                    estimates: snap,
                    solver: None,
                    flagged: false,
                };
                let line = serde_json::to_string(&StepLine {
                    step: record.step,
                    action: AgentAction::Stop,
                    true_pose,
                    collision: false,
                    policy: &decision,
                    runtime: &record,
                })
                .expect("serializable");
                write_line(&mut log, line)?;
            }
            break;
        }
        if decision.unreachable {
            unreachable_steps += 1;
        }
        let (action, outcome) = match cfg.navigator {
            NavigatorMode::Oracle if !decision.unreachable => (
                AgentAction::Forward,
                apply_teleport(&true_pose, &decision.teleport, scene, &cfg.motion, &mut rng),
            ),
            _ => (
                decision.action,
                apply_action(&true_pose, decision.action, scene, &cfg.motion, &mut rng),
            ),
        };
        if outcome.collision {
            collisions += 1;
        }
        true_pose = outcome.pose;
        agent_path.push(true_pose.translation());
        actions.push(action);
        let detections = sense(&true_pose, scene, &cfg.sensor, provider, &mut rng).map_err(|e| fail(id, e))?;
        let current = ps.visited.iter().rposition(|v| *v).unwrap_or(0);
        let mut record = rt.step(outcome.odometry, detections, current).map_err(|e| fail(id, e))?;
        if log.is_some() {
            record.action = Some(action.as_str().to_string());
            record.true_pose = Some(true_pose);
            let line = serde_json::to_string(&StepLine {
                step: record.step,
                action,
                true_pose,
                collision: outcome.collision,
                policy: &decision,
                runtime: &record,
            })
            .expect("serializable");
            write_line(&mut log, line)?;
        }
    }
    if let Some(mut w) = log {
        w.flush().map_err(|e| fail(id, e))?;
    }

    let m = success_metrics(&agent_path, stop_called, &episode.goal, &episode.reference_path, &cfg.thresholds)
        .map_err(|e| fail(id, e))?;
    Ok(EpisodeResult {
        id: id.to_string(),
        success: m.sr == 1.0,
        oracle_success: m.osr == 1.0,
        stop_called,
        steps: actions.len(),
        spl: m.spl,
        ndtw: m.ndtw,
        dtw: m.dtw,
        path_length: m.path_length,
        reference_length: m.reference_length,
        final_distance: m.final_distance,
        visited_waypoints: ps.visited_count(),
        waypoint_count: ps.visited.len(),
        flagged_steps: rt.flagged_steps(),
        unreachable_steps,
        collisions,
        agent_path,
        actions,
        log_path: log_path.map(|p| p.display().to_string()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub sr: f64,
    pub spl: f64,
    pub osr: f64,
    pub ndtw: f64,
    pub episodes: usize,
    pub errors: usize,
    pub seed: u64,
    pub thresholds: Thresholds,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<FullConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeFailure {
    pub episode: String,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub summary: MetricsSummary,
    pub episodes: Vec<EpisodeResult>,
    pub errors: Vec<EpisodeFailure>,
}

/// Column order of `episodes.csv`.
pub const EPISODE_CSV_HEADER: &str =
    "id,success,oracle_success,stop_called,steps,path_length,reference_length,final_distance,spl,ndtw,dtw";
/// Column order of `summary.csv`.
pub const SUMMARY_CSV_HEADER: &str = "episodes,errors,sr,spl,osr,ndtw,d_success,d_th,seed";

fn b(v: bool) -> u8 {
    v as u8
}

pub fn episodes_csv(results: &[EpisodeResult]) -> String {
    let mut s = String::from(EPISODE_CSV_HEADER);
    s.push('\n');
    for r in results {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.id,
            b(r.success),
            b(r.oracle_success),
            b(r.stop_called),
            r.steps,
            r.path_length,
            r.reference_length,
            r.final_distance,
            r.spl,
            r.ndtw,
            r.dtw
        );
    }
    s
}

pub fn summary_csv(m: &MetricsSummary) -> String {
    format!(
        "{SUMMARY_CSV_HEADER}\n{},{},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
        m.episodes, m.errors, m.sr, m.spl, m.osr, m.ndtw, m.thresholds.d_success, m.thresholds.d_th, m.seed
    )
}

/// Arithmetic means over `results`; empty input gives zeros.
pub fn summarize(results: &[EpisodeResult], errors: usize, seed: u64, thresholds: &Thresholds) -> MetricsSummary {
    let n = results.len();
    let mean = |f: &dyn Fn(&EpisodeResult) -> f64| {
        if n == 0 {
            0.0
        } else {
            results.iter().map(f).sum::<f64>() / n as f64
        }
    };
    MetricsSummary {
        sr: mean(&|r| b(r.success) as f64),
        spl: mean(&|r| r.spl),
        osr: mean(&|r| b(r.oracle_success) as f64),
        ndtw: mean(&|r| r.ndtw),
        episodes: n,
        errors,
        seed,
        thresholds: thresholds.clone(),
        config: None,
    }
}

/// Episode files of a suite directory (or of its `suite.json`), in manifest order.
pub fn suite_episode_paths(suite: &Path) -> Result<Vec<PathBuf>, SuiteError> {
    let manifest_path = if suite.is_dir() { suite.join("suite.json") } else { suite.to_path_buf() };
    let manifest: SuiteManifest = read_json(&manifest_path).map_err(|e| SuiteError::Manifest {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    Ok(manifest.episodes.iter().map(|p| root.join(p)).collect())
}

pub fn load_episode(path: &Path) -> Result<(Episode, Scene), String> {
    let episode = Episode::load(path).map_err(|e| e.to_string())?;
    let scene = Scene::load(&episode.scene_path(path)).map_err(|e| e.to_string())?;
    episode.validate().map_err(|e| e.to_string())?;
    scene.validate().map_err(|e| e.to_string())?;
    Ok((episode, scene))
}

fn write_file(path: &Path, text: &str) -> Result<(), SuiteError> {
    let io = |e: std::io::Error| SuiteError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

fn episode_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Runs every episode of `suite` on a pool of `parallelism` threads.
/// Output is identical for any parallelism.
pub fn run_suite(
    suite: &Path,
    cfg: &FullConfig,
    parallelism: usize,
    out_dir: Option<&Path>,
    run_seed: u64,
) -> Result<SuiteReport, SuiteError> {
    cfg.validate()?;
    let provider = cfg.provider()?;
    let paths = suite_episode_paths(suite)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| SuiteError::Config(ConfigError::Invalid(e.to_string())))?;
    let outcomes: Vec<Result<EpisodeResult, EpisodeFailure>> = pool.install(|| {
        paths
            .par_iter()
            .map(|path| {
                let stem = episode_stem(path);
                let (episode, scene) = load_episode(path).map_err(|message| EpisodeFailure {
                    episode: stem.clone(),
                    message,
                })?;
                let log = out_dir
                    .filter(|_| cfg.write_logs)
                    .map(|d| d.join("logs").join(format!("{}.jsonl", episode.id)));
                run_episode(&episode, &scene, cfg, provider.as_ref(), run_seed, log.as_deref()).map_err(|e| EpisodeFailure {
                    episode: stem,
                    message: e.to_string(),
                })
            })
            .collect()
    });
    let mut results = Vec::new();
    let mut errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(e) => errors.push(e),
        }
    }
    results.sort_by(|a, b| a.id.cmp(&b.id));
    errors.sort_by(|a, b| a.episode.cmp(&b.episode));
    let mut summary = summarize(&results, errors.len(), run_seed, &cfg.thresholds);
    summary.config = Some(cfg.clone());
    let report = SuiteReport {
        summary,
        episodes: results,
        errors,
    };
    if let Some(dir) = out_dir {
        write_report(dir, &report)?;
        for r in &report.episodes {
            let text = serde_json::to_string_pretty(r).expect("serializable") + "\n";
            write_file(&dir.join("results").join(format!("{}.json", r.id)), &text)?;
        }
    }
    Ok(report)
}

pub fn write_report(dir: &Path, report: &SuiteReport) -> Result<(), SuiteError> {
    write_file(&dir.join("episodes.csv"), &episodes_csv(&report.episodes))?;
    write_file(&dir.join("summary.csv"), &summary_csv(&report.summary))?;
    #[derive(Serialize)]
    struct Json<'a> {
        summary: &'a MetricsSummary,
        errors: &'a [EpisodeFailure],
    }
    let text = serde_json::to_string_pretty(&Json {
        summary: &report.summary,
        errors: &report.errors,
    })
    .expect("serializable");
    write_file(&dir.join("summary.json"), &(text + "\n"))
}

#[derive(Deserialize)]
struct LoggedLine {
    true_pose: Pose2,
    #[serde(default)]
    action: Option<AgentAction>,
    #[serde(default)]
    estimates: Option<serde_json::Value>,
    #[serde(default)]
    runtime: Option<serde_json::Value>,
}

/// Ground-truth positions, actions and the last estimate snapshot of a log.
pub struct ParsedLog {
    pub agent_path: Vec<Point2>,
    pub actions: Vec<AgentAction>,
    pub last_estimates: Option<serde_json::Value>,
}

pub fn parse_log(text: &str) -> Result<ParsedLog, String> {
    let mut out = ParsedLog {
        agent_path: Vec::new(),
        actions: Vec::new(),
        last_estimates: None,
    };
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let l: LoggedLine = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
        match l.action {
            None => out.agent_path.push(l.true_pose.translation()),
            Some(AgentAction::Stop) => out.actions.push(AgentAction::Stop),
            Some(a) => {
                out.actions.push(a);
                out.agent_path.push(l.true_pose.translation());
            }
        }
        if let Some(e) = l.estimates.or_else(|| l.runtime.and_then(|r| r.get("estimates").cloned())) {
            out.last_estimates = Some(e);
        }
    }
    if out.agent_path.is_empty() {
        return Err("log has no poses".into());
    }
    Ok(out)
}

/// Recomputes per-episode metrics of a finished run from its step logs.
pub fn metrics_from_logs(suite: &Path, run_dir: &Path, thresholds: &Thresholds, seed: u64) -> Result<SuiteReport, SuiteError> {
    let mut results = Vec::new();
    let mut errors = Vec::new();
    for path in suite_episode_paths(suite)? {
        let stem = episode_stem(&path);
        let outcome = (|| -> Result<EpisodeResult, String> {
            let episode = Episode::load(&path).map_err(|e| e.to_string())?;
            let log_path = run_dir.join("logs").join(format!("{}.jsonl", episode.id));
            let text = std::fs::read_to_string(&log_path).map_err(|e| format!("{}: {e}", log_path.display()))?;
            let log = parse_log(&text)?;
            let stop = log.actions.last() == Some(&AgentAction::Stop);
            let m = success_metrics(&log.agent_path, stop, &episode.goal, &episode.reference_path, thresholds)
                .map_err(|e| e.to_string())?;
            Ok(EpisodeResult {
                id: episode.id.clone(),
                success: m.sr == 1.0,
                oracle_success: m.osr == 1.0,
                stop_called: stop,
                steps: log.actions.len(),
                spl: m.spl,
                ndtw: m.ndtw,
                dtw: m.dtw,
                path_length: m.path_length,
                reference_length: m.reference_length,
                final_distance: m.final_distance,
                visited_waypoints: 0,
                waypoint_count: 0,
                flagged_steps: 0,
                unreachable_steps: 0,
                collisions: 0,
                agent_path: log.agent_path,
                actions: log.actions,
                log_path: Some(log_path.display().to_string()),
            })
        })();
        match outcome {
            Ok(r) => results.push(r),
            Err(message) => errors.push(EpisodeFailure { episode: stem, message }),
        }
    }
    results.sort_by(|a, b| a.id.cmp(&b.id));
    let summary = summarize(&results, errors.len(), seed, thresholds);
    Ok(SuiteReport {
        summary,
        episodes: results,
        errors,
    })
}

/// Plot overlays from a step log: true path plus the final estimates.
pub fn plot_data_from_log(text: &str) -> Result<PlotData, String> {
    let log = parse_log(text)?;
    let mut data = PlotData {
        agent_path: log.agent_path,
        ..Default::default()
    };
    if let Some(est) = log.last_estimates {
        for w in est.get("waypoints").and_then(|v| v.as_array()).into_iter().flatten() {
            let pose: Pose2 = serde_json::from_value(w["pose"].clone()).map_err(|e| e.to_string())?;
            let c: [[f64; 3]; 3] = serde_json::from_value(w["covariance"].clone()).map_err(|e| e.to_string())?;
            let body = Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]);
            let r = pose.rotation_matrix();
            data.waypoints.push((pose.translation(), r * body * r.transpose()));
        }
        for l in est.get("landmarks").and_then(|v| v.as_array()).into_iter().flatten() {
            let p: Point2 = serde_json::from_value(l["point"].clone()).map_err(|e| e.to_string())?;
            data.landmarks.push((p, l["label"].as_str().unwrap_or_default().to_string()));
        }
    }
    Ok(data)
}
