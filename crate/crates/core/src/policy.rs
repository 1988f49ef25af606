//! Waypoint-following navigation over the SLAM posterior: cost-based
//! waypoint selection, posterior target sampling, and an A* local
//! controller on an occupancy raster.

use crate::runtime::{Snapshot, WaypointEstimate};
use crate::se2::{wrap_angle, Point2, Pose2};
use crate::sim::{AgentAction, Scene};
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::{PI, SQRT_2};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("every waypoint has been visited")]
    AllVisited,
    #[error("invalid policy config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CandidateMode {
    UnvisitedAll,
    NextOnly,
}

/// Which trace enters the selection cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintySign {
    /// trace of Λ = Σ⁻¹
    Information,
    /// trace of Σ
    Covariance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub alpha: f64,
    pub transition_radius: f64,
    pub resample_interval: usize,
    pub max_sample_attempts: usize,
    pub candidate_mode: CandidateMode,
    pub uncertainty_sign: UncertaintySign,
    /// Target is re-sampled when its waypoint estimate moves farther than this.
    pub retarget_distance: f64,
    /// A sampled point counts as reached inside this radius.
    pub arrival_radius: f64,
    pub raster_resolution: f64,
    /// Obstacle inflation for planning; at least the agent radius.
    pub inflation: f64,
    pub heading_tolerance: f64,
    pub lookahead: f64,
    pub step_length: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            transition_radius: 0.5,
            resample_interval: 25,
            max_sample_attempts: 50,
            candidate_mode: CandidateMode::UnvisitedAll,
            uncertainty_sign: UncertaintySign::Information,
            retarget_distance: 0.5,
            arrival_radius: 0.25,
            raster_resolution: 0.1,
            inflation: 0.25,
            heading_tolerance: PI / 24.0,
            lookahead: 1.5,
            step_length: 0.25,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Config(m.to_string()));
        if !(self.alpha >= 0.0) {
            return bad("alpha must be >= 0");
        }
        if !(self.transition_radius > 0.0) {
            return bad("transition_radius must be > 0");
        }
        if self.resample_interval == 0 || self.max_sample_attempts == 0 {
            return bad("resample_interval and max_sample_attempts must be positive");
        }
        if !(self.raster_resolution > 0.0) || !(self.inflation >= 0.0) {
            return bad("raster_resolution must be > 0 and inflation >= 0");
        }
        if !(self.heading_tolerance > 0.0) || !(self.step_length > 0.0) || !(self.lookahead > 0.0) {
            return bad("heading_tolerance, step_length and lookahead must be > 0");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveTarget {
    pub waypoint: usize,
    pub point: Point2,
    /// Waypoint MAP position when `point` was drawn.
    pub anchor: Point2,
    /// `point` is the projected MAP mean rather than a posterior draw.
    pub at_mean: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub visited: Vec<bool>,
    pub active_target: Option<ActiveTarget>,
    pub steps_since_sample: usize,
    pub stopped: bool,
}

impl PolicyState {
    /// Waypoint 0 is the start and begins visited.
    pub fn new(waypoint_count: usize) -> Self {
        let mut visited = vec![false; waypoint_count];
        if let Some(v) = visited.first_mut() {
            *v = true;
        }
        Self {
            visited,
            active_target: None,
            steps_since_sample: 0,
            stopped: false,
        }
    }

    pub fn visited_count(&self) -> usize {
        self.visited.iter().filter(|v| **v).count()
    }

    fn visit(&mut self, index: usize) {
        self.visited[index] = true;
        if self.active_target.is_some_and(|t| t.waypoint == index) {
            self.active_target = None;
        }
    }
}

/// Eq-4 cost `‖w_j − x‖² + α·trace` for one candidate.
pub fn selection_cost(robot: &Pose2, w: &WaypointEstimate, cfg: &PolicyConfig) -> f64 {
    let d = w.pose.translation().distance(&robot.translation());
    let trace = match cfg.uncertainty_sign {
        UncertaintySign::Information => w.trace_information,
        UncertaintySign::Covariance => w.trace_covariance,
    };
    d * d + cfg.alpha * trace
}

/// Index of the waypoint to pursue. Ties go to the lower index.
pub fn select_waypoint(snapshot: &Snapshot, ps: &PolicyState, cfg: &PolicyConfig) -> Result<usize, PolicyError> {
    let unvisited = snapshot
        .waypoints
        .iter()
        .filter(|w| !ps.visited.get(w.index).copied().unwrap_or(true));
    match cfg.candidate_mode {
        CandidateMode::NextOnly => unvisited.min_by_key(|w| w.index).map(|w| w.index),
        CandidateMode::UnvisitedAll => {
            let mut best: Option<(f64, usize)> = None;
            for w in unvisited {
                let c = selection_cost(&snapshot.robot_pose, w, cfg);
                let better = match best {
                    None => true,
                    Some((bc, bi)) => c < bc || (c == bc && w.index < bi),
                };
                if better {
                    best = Some((c, w.index));
                }
            }
            best.map(|(_, i)| i)
        }
    }
    .ok_or(PolicyError::AllVisited)
}

/// Draws from `N(mean, cov)` restricted to free raster cells; falls back to
/// the free point nearest the mean.
pub fn sample_target<R: Rng>(
    mean: &Point2,
    cov: &Matrix2<f64>,
    raster: &Raster,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> Point2 {
    let sym = (cov + cov.transpose()) * 0.5;
    let chol = sym
        .cholesky()
        .or_else(|| (sym + Matrix2::identity() * 1e-12).cholesky());
    if let Some(chol) = chol {
        let l = chol.l();
        for _ in 0..cfg.max_sample_attempts {
            let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            let d = l * z;
            let p = Point2::new(mean.x + d.x, mean.y + d.y);
            if raster.is_free_point(&p) {
                return p;
            }
        }
    }
    raster.nearest_free(mean).unwrap_or(*mean)
}

/// Occupancy grid over the scene bounds with walls inflated.
#[derive(Clone, Debug)]
pub struct Raster {
    xmin: f64,
    ymin: f64,
    resolution: f64,
    width: usize,
    height: usize,
    free: Vec<bool>,
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    cell: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then on cell index
        other.f.total_cmp(&self.f).then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Raster {
    pub fn from_scene(scene: &Scene, resolution: f64, inflation: f64) -> Self {
        let b = &scene.bounds;
        let width = ((b.width() / resolution).ceil() as usize).max(1);
        let height = ((b.height() / resolution).ceil() as usize).max(1);
        let mut r = Self {
            xmin: b.xmin,
            ymin: b.ymin,
            resolution,
            width,
            height,
            free: vec![false; width * height],
        };
        for j in 0..height {
            for i in 0..width {
                let c = r.center(i + j * width);
                r.free[i + j * width] = scene.is_free(&c, inflation);
            }
        }
        r
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn center(&self, cell: usize) -> Point2 {
        let (i, j) = (cell % self.width, cell / self.width);
        Point2::new(
            self.xmin + (i as f64 + 0.5) * self.resolution,
            self.ymin + (j as f64 + 0.5) * self.resolution,
        )
    }

    fn coords(&self, p: &Point2) -> (isize, isize) {
        (
            ((p.x - self.xmin) / self.resolution).floor() as isize,
            ((p.y - self.ymin) / self.resolution).floor() as isize,
        )
    }

    fn cell(&self, p: &Point2) -> Option<usize> {
        let (i, j) = self.coords(p);
        (i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height)
            .then(|| i as usize + j as usize * self.width)
    }

    fn clamped_cell(&self, p: &Point2) -> usize {
        let (i, j) = self.coords(p);
        let i = i.clamp(0, self.width as isize - 1) as usize;
        let j = j.clamp(0, self.height as isize - 1) as usize;
        i + j * self.width
    }

    pub fn is_free_point(&self, p: &Point2) -> bool {
        self.cell(p).is_some_and(|c| self.free[c])
    }

    fn nearest_free_cell(&self, from: usize) -> Option<usize> {
        if self.free[from] {
            return Some(from);
        }
        let mut seen = vec![false; self.free.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        let origin = self.center(from);
        let mut best: Option<(f64, usize)> = None;
        while let Some(c) = queue.pop_front() {
            if let Some((bd, _)) = best {
                // BFS rings grow monotonically; stop once past the best hit
                if self.center(c).distance(&origin) > bd + 2.0 * self.resolution {
                    break;
                }
            }
            if self.free[c] {
                let d = self.center(c).distance(&origin);
                if best.is_none_or(|(bd, bc)| d < bd || (d == bd && c < bc)) {
                    best = Some((d, c));
                }
                continue;
            }
            for n in self.neighbours4(c) {
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        best.map(|(_, c)| c)
    }

    /// Centre of the free cell closest to `p`.
    pub fn nearest_free(&self, p: &Point2) -> Option<Point2> {
        let c = self.clamped_cell(p);
        self.nearest_free_cell(c).map(|c| {
            if self.cell(p) == Some(c) {
                *p
            } else {
                self.center(c)
            }
        })
    }

    fn neighbours4(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = ((c % self.width) as isize, (c / self.width) as isize);
        [(1, 0), (-1, 0), (0, 1), (0, -1)].into_iter().filter_map(move |(di, dj)| {
            let (a, b) = (i + di, j + dj);
            (a >= 0 && b >= 0 && (a as usize) < self.width && (b as usize) < self.height)
                .then(|| a as usize + b as usize * self.width)
        })
    }

    /// Every sample along `a`-`b` lies in a free cell.
    pub fn line_free(&self, a: &Point2, b: &Point2) -> bool {
        let n = ((a.distance(b) / (0.5 * self.resolution)).ceil() as usize).max(1);
        (0..=n).all(|k| {
            let t = k as f64 / n as f64;
            self.is_free_point(&Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)))
        })
    }

    /// 8-connected A* between the free cells nearest `start` and `goal`.
    /// Diagonal moves never cut a blocked corner. The returned polyline
    /// starts at `start` and ends at `goal` (or its free projection).
    pub fn astar(&self, start: &Point2, goal: &Point2) -> Option<Vec<Point2>> {
        let s = self.nearest_free_cell(self.clamped_cell(start))?;
        let g = self.nearest_free_cell(self.clamped_cell(goal))?;
        let (gi, gj) = ((g % self.width) as f64, (g / self.width) as f64);
        let h = |c: usize| {
            let dx = ((c % self.width) as f64 - gi).abs();
            let dy = ((c / self.width) as f64 - gj).abs();
            (dx.max(dy) - dx.min(dy) + SQRT_2 * dx.min(dy)) * self.resolution
        };
        let mut g_cost = vec![f64::INFINITY; self.free.len()];
        let mut parent = vec![usize::MAX; self.free.len()];
        let mut closed = vec![false; self.free.len()];
        let mut open = BinaryHeap::new();
        g_cost[s] = 0.0;
        open.push(Open { f: h(s), cell: s });
        while let Some(Open { cell, .. }) = open.pop() {
            if closed[cell] {
                continue;
            }
            if cell == g {
                break;
            }
            closed[cell] = true;
            let (i, j) = ((cell % self.width) as isize, (cell / self.width) as isize);
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a as usize >= self.width || b as usize >= self.height {
                        continue;
                    }
                    let n = a as usize + b as usize * self.width;
                    if !self.free[n] || closed[n] {
                        continue;
                    }
                    if di != 0 && dj != 0 {
                        let side1 = (i + di) as usize + j as usize * self.width;
                        let side2 = i as usize + (j + dj) as usize * self.width;
                        if !self.free[side1] || !self.free[side2] {
                            continue;
                        }
                    }
                    let step = if di != 0 && dj != 0 { SQRT_2 } else { 1.0 } * self.resolution;
                    let cand = g_cost[cell] + step;
                    if cand < g_cost[n] {
                        g_cost[n] = cand;
                        parent[n] = cell;
                        open.push(Open { f: cand + h(n), cell: n });
                    }
                }
            }
        }
        if !g_cost[g].is_finite() {
            return None;
        }
        let mut cells = vec![g];
        while let Some(&c) = cells.last() {
            if c == s {
                break;
            }
            cells.push(parent[c]);
        }
        cells.reverse();
        let mut path = vec![*start];
        path.extend(cells.iter().skip(1).map(|&c| self.center(c)));
        let end = if self.free[self.clamped_cell(goal)] { *goal } else { self.center(g) };
        if path.len() > 1 {
            path.pop();
        }
        path.push(end);
        Some(path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ActOutcome {
    pub action: AgentAction,
    /// Point the controller steers toward.
    pub aim: Point2,
    /// Where an oracle navigator moves this step.
    pub teleport: Point2,
    pub unreachable: bool,
}

/// Local controller: follow the A* route to `target`, turning in place
/// while the heading error exceeds the tolerance.
pub fn act(robot: &Pose2, target: &Point2, raster: &Raster, cfg: &PolicyConfig) -> ActOutcome {
    let here = robot.translation();
    let Some(path) = raster.astar(&here, target) else {
        return ActOutcome {
            action: AgentAction::TurnLeft,
            aim: *target,
            teleport: here,
            unreachable: true,
        };
    };
    // farthest path point within the lookahead that is in line of sight
    let mut aim = path[1.min(path.len() - 1)];
    for p in path.iter().skip(1) {
        if p.distance(&here) > cfg.lookahead {
            break;
        }
        if raster.line_free(&here, p) {
            aim = *p;
        } else {
            break;
        }
    }
    let dist = aim.distance(&here);
    let teleport = if dist <= cfg.step_length {
        aim
    } else {
        let t = cfg.step_length / dist;
        Point2::new(here.x + t * (aim.x - here.x), here.y + t * (aim.y - here.y))
    };
    let action = if dist < 1e-9 {
        AgentAction::Forward
    } else {
        let err = wrap_angle((aim.y - here.y).atan2(aim.x - here.x) - robot.theta());
        if err.abs() <= cfg.heading_tolerance {
            AgentAction::Forward
        } else if err > 0.0 {
            AgentAction::TurnLeft
        } else {
            AgentAction::TurnRight
        }
    };
    ActOutcome {
        action,
        aim,
        teleport,
        unreachable: false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyDecision {
    pub action: AgentAction,
    pub active_waypoint: Option<usize>,
    pub target: Option<Point2>,
    pub teleport: Point2,
    pub newly_visited: Vec<usize>,
    pub resampled: bool,
    pub unreachable: bool,
}

fn stop(robot: &Pose2, ps: &mut PolicyState, newly_visited: Vec<usize>, active: Option<usize>) -> PolicyDecision {
    ps.stopped = true;
    ps.active_target = None;
    PolicyDecision {
        action: AgentAction::Stop,
        active_waypoint: active,
        target: None,
        teleport: robot.translation(),
        newly_visited,
        resampled: false,
        unreachable: false,
    }
}

/// One control step: transitions, (re)selection and sampling, then the
/// controller action. STOP is returned at most once.
pub fn policy_step<R: Rng>(
    snapshot: &Snapshot,
    ps: &mut PolicyState,
    raster: &Raster,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> PolicyDecision {
    let robot = snapshot.robot_pose;
    let here = robot.translation();
    let last = snapshot.waypoints.len().saturating_sub(1);
    let mut newly_visited = Vec::new();
    if ps.stopped {
        return stop(&robot, ps, newly_visited, None);
    }

    if let Some(t) = ps.active_target {
        let w = &snapshot.waypoints[t.waypoint];
        let near_estimate = w.pose.translation().distance(&here) <= cfg.transition_radius;
        // a projected mean is as close as the robot can get
        let at_projection = t.at_mean && t.point.distance(&here) <= cfg.arrival_radius;
        if near_estimate || at_projection {
            if t.waypoint == last {
                ps.visited[last] = true;
                return stop(&robot, ps, vec![last], Some(last));
            }
            ps.visit(t.waypoint);
            newly_visited.push(t.waypoint);
        }
    }

    let mut resampled = false;
    let needs_selection = match ps.active_target {
        None => true,
        Some(t) => {
            ps.steps_since_sample >= cfg.resample_interval
                || snapshot.waypoints[t.waypoint].pose.translation().distance(&t.anchor) > cfg.retarget_distance
        }
    };
    if needs_selection {
        let Ok(j) = select_waypoint(snapshot, ps, cfg) else {
            return stop(&robot, ps, newly_visited, None);
        };
        let w = &snapshot.waypoints[j];
        let mean = w.pose.translation();
        let point = sample_target(&mean, &w.world_position_covariance(), raster, cfg, rng);
        ps.active_target = Some(ActiveTarget {
            waypoint: j,
            point,
            anchor: mean,
            at_mean: false,
        });
        ps.steps_since_sample = 0;
        resampled = true;
    }

    let mut t = ps.active_target.expect("target selected above");
    if !t.at_mean && t.point.distance(&here) <= cfg.arrival_radius {
        // drawn point reached without a transition: head for the estimate
        let mean = snapshot.waypoints[t.waypoint].pose.translation();
        t.point = raster.nearest_free(&mean).unwrap_or(mean);
        t.anchor = mean;
        t.at_mean = true;
        ps.active_target = Some(t);
    }
    // the final waypoint may have become active in this very step
    if t.waypoint == last
        && snapshot.waypoints[last].pose.translation().distance(&here) <= cfg.transition_radius
    {
        ps.visited[last] = true;
        newly_visited.push(last);
        return stop(&robot, ps, newly_visited, Some(last));
    }

    let out = act(&robot, &t.point, raster, cfg);
    ps.steps_since_sample += 1;
    PolicyDecision {
        action: out.action,
        active_waypoint: Some(t.waypoint),
        target: Some(t.point),
        teleport: out.teleport,
        newly_visited,
        resampled,
        unreachable: out.unreachable,
    }
}
