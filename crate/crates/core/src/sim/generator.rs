//! Seeded synthetic suites: a route through labeled landmarks, the matching
//! constrained-grammar instruction, walls kept clear of the route, and
//! distractor objects.

use super::geometry::{densify, point_segment_distance, segment_segment_distance};
use super::{write_json, Bounds, Episode, Scene, SceneLandmark, SimError, Wall};
use crate::instruction::parse_constrained;
use crate::se2::{Point2, Pose2};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("episode {episode}: placement failed after {retries} attempts (seed {seed}, config {config})")]
    Placement {
        episode: usize,
        retries: usize,
        seed: u64,
        config: String,
    },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub episodes: usize,
    pub min_landmarks: usize,
    pub max_landmarks: usize,
    pub vocabulary: Vec<String>,
    pub min_distractors: usize,
    pub max_distractors: usize,
    pub max_interior_walls: usize,
    /// Free space added around the route's bounding box.
    pub margin: f64,
    pub turn_probability: f64,
    pub pass_probability: f64,
    /// Ends every route at a "door" and adds a second, off-route door near the start.
    pub duplicate_door: bool,
    pub max_retries: usize,
    /// Spacing of the densified reference path.
    pub path_spacing: f64,
}

pub const DEFAULT_VOCABULARY: [&str; 30] = [
    "piano", "table", "chair", "sofa", "bed", "lamp", "rug", "bookshelf", "plant", "television",
    "fireplace", "cabinet", "mirror", "painting", "stool", "desk", "bench", "wardrobe", "sink",
    "fridge", "oven", "bathtub", "toilet", "dresser", "armchair", "clock", "fan", "vase",
    "washing machine", "coat rack",
];

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            episodes: 50,
            min_landmarks: 3,
            max_landmarks: 8,
            vocabulary: DEFAULT_VOCABULARY.iter().map(|s| s.to_string()).collect(),
            min_distractors: 2,
            max_distractors: 5,
            max_interior_walls: 3,
            margin: 2.5,
            turn_probability: 0.35,
            pass_probability: 0.3,
            duplicate_door: false,
            max_retries: 200,
            path_spacing: 0.25,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<(), GeneratorError> {
        if self.min_landmarks < 1 || self.min_landmarks > self.max_landmarks {
            return Err(GeneratorError::Config("need 1 <= min_landmarks <= max_landmarks".into()));
        }
        if self.vocabulary.len() < self.max_landmarks + self.max_distractors {
            return Err(GeneratorError::Config(
                "vocabulary must cover route landmarks plus distractors".into(),
            ));
        }
        if self.min_distractors > self.max_distractors {
            return Err(GeneratorError::Config("min_distractors > max_distractors".into()));
        }
        if !(self.path_spacing > 0.0) || !(self.margin > 0.0) {
            return Err(GeneratorError::Config("path_spacing and margin must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedSuite {
    pub scenes: Vec<Scene>,
    pub episodes: Vec<Episode>,
    pub config: GeneratorConfig,
    pub seed: u64,
}

struct Route {
    sentences: Vec<String>,
    vertices: Vec<Point2>,
    /// (label, position) in order of mention.
    landmarks: Vec<(String, Point2)>,
}

fn dir(theta: f64) -> Point2 {
    Point2::new(theta.cos(), theta.sin())
}

fn offset(p: &Point2, d: &Point2, along: f64, lateral: f64) -> Point2 {
    Point2::new(p.x + along * d.x - lateral * d.y, p.y + along * d.y + lateral * d.x)
}

fn sample_route<R: Rng>(rng: &mut R, cfg: &GeneratorConfig, labels: &[String]) -> Route {
    let start = Point2::new(0.0, 0.0);
    let mut heading = rng.random_range(-PI..PI);
    let mut pos = start;
    let mut vertices = vec![start];
    let mut sentences = Vec::new();
    let mut landmarks = Vec::new();
    let n = labels.len();
    for (k, label) in labels.iter().enumerate() {
        if rng.random::<f64>() < cfg.turn_probability {
            let left = rng.random::<bool>();
            heading += if left { FRAC_PI_2 } else { -FRAC_PI_2 };
            sentences.push(if left { "turn left" } else { "turn right" }.to_string());
        }
        let d = dir(heading);
        let last = k + 1 == n;
        if !last && rng.random::<f64>() < cfg.pass_probability {
            let len = rng.random_range(2.5..4.0);
            let along = len - rng.random_range(0.5..1.0);
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let lateral = side * rng.random_range(0.4..0.8);
            landmarks.push((label.clone(), offset(&pos, &d, along, lateral)));
            pos = offset(&pos, &d, len, 0.0);
            sentences.push(format!("go past the {label}"));
        } else {
            let len = rng.random_range(1.5..3.5);
            pos = offset(&pos, &d, len, 0.0);
            landmarks.push((label.clone(), pos));
            sentences.push(if last {
                format!("stop at the {label}")
            } else {
                format!("go forward to the {label}")
            });
        }
        vertices.push(pos);
    }
    Route {
        sentences,
        vertices,
        landmarks,
    }
}

/// Non-adjacent legs stay 1 m apart and route landmarks 1.2 m apart.
fn route_is_simple(route: &Route) -> bool {
    let v = &route.vertices;
    for i in 0..v.len().saturating_sub(1) {
        for j in i + 2..v.len() - 1 {
            if segment_segment_distance(&v[i], &v[i + 1], &v[j], &v[j + 1]) < 1.0 {
                return false;
            }
        }
    }
    let l = &route.landmarks;
    for i in 0..l.len() {
        for j in i + 1..l.len() {
            if l[i].1.distance(&l[j].1) < 1.2 {
                return false;
            }
        }
    }
    true
}

fn distance_to_polyline(p: &Point2, poly: &[Point2]) -> f64 {
    poly.windows(2)
        .map(|w| point_segment_distance(p, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min)
}

fn bounding_box(points: &[Point2], margin: f64) -> Bounds {
    let mut b = Bounds {
        xmin: f64::INFINITY,
        ymin: f64::INFINITY,
        xmax: f64::NEG_INFINITY,
        ymax: f64::NEG_INFINITY,
    };
    for p in points {
        b.xmin = b.xmin.min(p.x);
        b.ymin = b.ymin.min(p.y);
        b.xmax = b.xmax.max(p.x);
        b.ymax = b.ymax.max(p.y);
    }
    // round outward to a 0.1 m grid so files stay readable
    let r = |v: f64, up: bool| if up { (v * 10.0).ceil() / 10.0 } else { (v * 10.0).floor() / 10.0 };
    Bounds {
        xmin: r(b.xmin - margin, false),
        ymin: r(b.ymin - margin, false),
        xmax: r(b.xmax + margin, true),
        ymax: r(b.ymax + margin, true),
    }
}

fn boundary_walls(b: &Bounds) -> Vec<Wall> {
    let c = [
        Point2::new(b.xmin, b.ymin),
        Point2::new(b.xmax, b.ymin),
        Point2::new(b.xmax, b.ymax),
        Point2::new(b.xmin, b.ymax),
    ];
    (0..4)
        .map(|i| Wall {
            a: c[i],
            b: c[(i + 1) % 4],
        })
        .collect()
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn round_point(p: Point2) -> Point2 {
    Point2::new(round3(p.x), round3(p.y))
}

struct Draft {
    scene: Scene,
    episode: Episode,
}

fn try_episode<R: Rng>(rng: &mut R, cfg: &GeneratorConfig, index: usize) -> Option<Draft> {
    let n = rng.random_range(cfg.min_landmarks..=cfg.max_landmarks);
    let mut vocab: Vec<String> = cfg
        .vocabulary
        .iter()
        .filter(|w| !cfg.duplicate_door || w.as_str() != "door")
        .cloned()
        .collect();
    vocab.shuffle(rng);
    let mut labels: Vec<String> = vocab.drain(..n).collect();
    if cfg.duplicate_door {
        labels[n - 1] = "door".to_string();
    }

    let route = sample_route(rng, cfg, &labels);
    if !route_is_simple(&route) {
        return None;
    }
    let mut vertices: Vec<Point2> = route.vertices.iter().copied().map(round_point).collect();
    vertices.dedup();
    let route_landmarks: Vec<(String, Point2)> = route
        .landmarks
        .iter()
        .map(|(l, p)| (l.clone(), round_point(*p)))
        .collect();

    let mut extent = vertices.clone();
    extent.extend(route_landmarks.iter().map(|(_, p)| *p));
    let bounds = bounding_box(&extent, cfg.margin);

    let mut objects = route_landmarks.clone();
    let start_heading = {
        let d = (vertices[1].x - vertices[0].x, vertices[1].y - vertices[0].y);
        // the first sentence may be a turn; the start faces the pre-turn heading
        let first_leg = d.1.atan2(d.0);
        if route.sentences[0].starts_with("turn left") {
            first_leg - FRAC_PI_2
        } else if route.sentences[0].starts_with("turn right") {
            first_leg + FRAC_PI_2
        } else {
            first_leg
        }
    };
    let start = Pose2::new(0.0, 0.0, start_heading);

    if cfg.duplicate_door {
        // off-route door in view from the start pose
        let mut placed = false;
        for _ in 0..50 {
            let r = rng.random_range(2.0..3.5);
            let b = rng.random_range(-0.6..0.6f64);
            let p = round_point(start.transform_from(&Point2::new(r * b.cos(), r * b.sin())));
            if distance_to_polyline(&p, &vertices) >= 1.5
                && objects.iter().all(|(_, q)| q.distance(&p) >= 2.0)
                && bounds.contains(&p)
            {
                objects.push(("door".to_string(), p));
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }

    let distractors = rng.random_range(cfg.min_distractors..=cfg.max_distractors);
    let mut spare = vocab.into_iter();
    let mut attempts = 0;
    let mut added = 0;
    while added < distractors && attempts < 200 {
        attempts += 1;
        let p = round_point(Point2::new(
            rng.random_range(bounds.xmin + 0.5..bounds.xmax - 0.5),
            rng.random_range(bounds.ymin + 0.5..bounds.ymax - 0.5),
        ));
        if distance_to_polyline(&p, &vertices) < 1.5 || objects.iter().any(|(_, q)| q.distance(&p) < 1.5) {
            continue;
        }
        let Some(label) = spare.next() else { break };
        objects.push((label, p));
        added += 1;
    }

    let mut walls = boundary_walls(&bounds);
    let interior = rng.random_range(0..=cfg.max_interior_walls);
    let mut wall_attempts = 0;
    while walls.len() < 4 + interior && wall_attempts < 200 {
        wall_attempts += 1;
        let a = round_point(Point2::new(
            rng.random_range(bounds.xmin + 0.3..bounds.xmax - 0.3),
            rng.random_range(bounds.ymin + 0.3..bounds.ymax - 0.3),
        ));
        let len = rng.random_range(1.5..3.0);
        let horizontal = rng.random::<bool>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let b = if horizontal {
            Point2::new(a.x + sign * len, a.y)
        } else {
            Point2::new(a.x, a.y + sign * len)
        };
        let b = round_point(Point2::new(
            b.x.clamp(bounds.xmin, bounds.xmax),
            b.y.clamp(bounds.ymin, bounds.ymax),
        ));
        let clear_of_route = vertices
            .windows(2)
            .all(|w| segment_segment_distance(&w[0], &w[1], &a, &b) >= 0.8);
        let clear_of_objects = objects
            .iter()
            .all(|(_, p)| point_segment_distance(p, &a, &b) >= 0.8);
        if clear_of_route && clear_of_objects {
            walls.push(Wall { a, b });
        }
    }

    let landmarks: Vec<SceneLandmark> = objects
        .iter()
        .enumerate()
        .map(|(id, (label, p))| SceneLandmark {
            id,
            label: label.clone(),
            x: p.x,
            y: p.y,
        })
        .collect();
    let scene = Scene {
        landmarks,
        walls,
        bounds,
    };
    let goal = route_landmarks.last().expect("at least one landmark").1;
    let text = route
        .sentences
        .iter()
        .map(|s| format!("{s}."))
        .collect::<Vec<_>>()
        .join(" ");
    let mut reference_path: Vec<Point2> = densify(&vertices, cfg.path_spacing)
        .into_iter()
        .map(round_point)
        .collect();
    reference_path.dedup();
    let episode = Episode {
        id: format!("ep{index:03}"),
        scene: format!("../scenes/scene{index:03}.json"),
        start,
        instruction: text,
        ir: None,
        reference_path,
        goal,
        seed: 0,
    };
    Some(Draft { scene, episode })
}

/// Deterministic for `(cfg, seed)`.
pub fn generate_episode_suite(cfg: &GeneratorConfig, seed: u64) -> Result<GeneratedSuite, GeneratorError> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::with_capacity(cfg.episodes);
    let mut episodes = Vec::with_capacity(cfg.episodes);
    for index in 0..cfg.episodes {
        let episode_seed = master.next_u64();
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
        let mut draft = None;
        for _ in 0..cfg.max_retries {
            if let Some(d) = try_episode(&mut rng, cfg, index) {
                draft = Some(d);
                break;
            }
        }
        let Some(mut d) = draft else {
            return Err(GeneratorError::Placement {
                episode: index,
                retries: cfg.max_retries,
                seed,
                config: serde_json::to_string(cfg).unwrap_or_default(),
            });
        };
        d.episode.seed = episode_seed;
        d.scene.validate()?;
        d.episode.validate()?;
        // instruction text must round-trip through the grammar
        parse_constrained(&d.episode.instruction).map_err(|e| {
            GeneratorError::Config(format!("generated instruction does not parse: {e}"))
        })?;
        scenes.push(d.scene);
        episodes.push(d.episode);
    }
    Ok(GeneratedSuite {
        scenes,
        episodes,
        config: cfg.clone(),
        seed,
    })
}

#[derive(Serialize, Deserialize)]
pub(crate) struct SuiteManifest {
    pub episodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Writes `suite.json`, `scenes/` and `episodes/` under `dir`.
pub fn write_suite(suite: &GeneratedSuite, dir: &Path) -> Result<(), SimError> {
    let mut paths = Vec::new();
    for (i, (scene, ep)) in suite.scenes.iter().zip(&suite.episodes).enumerate() {
        scene.save(&dir.join(format!("scenes/scene{i:03}.json")))?;
        let rel = format!("episodes/{}.json", ep.id);
        ep.save(&dir.join(&rel))?;
        paths.push(rel);
    }
    write_json(
        &dir.join("suite.json"),
        &SuiteManifest {
            episodes: paths,
            generator: Some(suite.config.clone()),
            seed: Some(suite.seed),
        },
    )
}
