use crate::se2::Point2;
use crate::sim::geometry::polyline_length;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("agent path is empty")]
    EmptyAgentPath,
    #[error("reference path has zero length")]
    DegenerateReference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Success radius around the goal.
    pub d_success: f64,
    /// nDTW normalisation distance.
    pub d_th: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            d_success: 1.0,
            d_th: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub ndtw: f64,
    pub dtw: f64,
    pub path_length: f64,
    pub reference_length: f64,
    pub final_distance: f64,
}

/// Dynamic time warping with Euclidean ground cost, O(|a|·|b|) time and
/// O(|b|) memory.
pub fn dtw(a: &[Point2], b: &[Point2]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let mut prev = vec![f64::INFINITY; b.len() + 1];
    let mut cur = vec![f64::INFINITY; b.len() + 1];
    prev[0] = 0.0;
    for p in a {
        cur[0] = f64::INFINITY;
        for (j, q) in b.iter().enumerate() {
            let best = prev[j].min(prev[j + 1]).min(cur[j]);
            cur[j + 1] = p.distance(q) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn ndtw(agent: &[Point2], reference: &[Point2], d_th: f64) -> f64 {
    (-dtw(agent, reference) / (reference.len() as f64 * d_th)).exp()
}

pub fn success_metrics(
    agent_path: &[Point2],
    stop_called: bool,
    goal: &Point2,
    reference_path: &[Point2],
    thresholds: &Thresholds,
) -> Result<EpisodeMetrics, MetricsError> {
    let last = agent_path.last().ok_or(MetricsError::EmptyAgentPath)?;
    let reference_length = polyline_length(reference_path);
    if reference_path.len() < 2 || !(reference_length > 0.0) {
        return Err(MetricsError::DegenerateReference);
    }
    let final_distance = last.distance(goal);
    let success = stop_called && final_distance <= thresholds.d_success;
    let oracle = agent_path.iter().any(|p| p.distance(goal) <= thresholds.d_success);
    let path_length = polyline_length(agent_path);
    let sr = if success { 1.0 } else { 0.0 };
    let d = dtw(agent_path, reference_path);
    Ok(EpisodeMetrics {
        sr,
        osr: if oracle { 1.0 } else { 0.0 },
        spl: sr * reference_length / reference_length.max(path_length),
        ndtw: (-d / (reference_path.len() as f64 * thresholds.d_th)).exp(),
        dtw: d,
        path_length,
        reference_length,
        final_distance,
    })
}
