//! Navigation metrics: NE, OS, SR, SPL, nDTW.
//!
//! SR requires an explicit stop inside the success radius; OS asks whether
//! any pose came within the radius. SPL is success-weighted normalized
//! inverse path length with a grid geodesic denominator. nDTW is
//! exp(-DTW / (|reference| * d_threshold)) with the full O(mn) dynamic
//! program over Euclidean point costs (match/insert/delete steps).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::grid::{grid_geodesic, OccupancyGrid};
use crate::env::{Arena, Difficulty, EnvConfig, EpisodeTrace, Termination};
use crate::response::ActionLabel;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("point ({0:.2}, {1:.2}) lies inside an obstacle")]
    PointInsideObstacle(f64, f64),
    #[error("no free grid cell near ({0:.2}, {1:.2})")]
    NoFreeCell(f64, f64),
    #[error("trace has no poses")]
    EmptyTrace,
    #[error("arena start and goal are disconnected")]
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Occupancy-grid resolution for geodesics, m.
    pub resolution: f64,
    /// nDTW distance threshold, m.
    pub d_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { resolution: 0.25, d_threshold: 3.0 }
    }
}

/// Per-episode metric record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ne: f64,
    pub os: bool,
    pub sr: bool,
    pub spl: f64,
    pub ndtw: f64,
    pub path_length: f64,
    pub geodesic: f64,
    pub behavior_match: bool,
    pub difficulty: Difficulty,
}

/// Euclidean distance from the final pose to the goal.
pub fn navigation_error(trace: &EpisodeTrace, goal: (f64, f64)) -> f64 {
    let last = trace.poses.last().expect("trace has at least the start pose");
    ((last.0 - goal.0).powi(2) + (last.1 - goal.1).powi(2)).sqrt()
}

/// (SR, OS): success requires stopping inside the radius; oracle success is
/// the closest-approach test.
pub fn success_and_oracle(trace: &EpisodeTrace, goal: (f64, f64), radius: f64) -> (bool, bool) {
    let ne = navigation_error(trace, goal);
    let sr = ne < radius && trace.terminated_by == Termination::StopAction;
    let os = trace
        .poses
        .iter()
        .map(|&(x, y)| ((x - goal.0).powi(2) + (y - goal.1).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
        < radius;
    (sr, os)
}

/// Shortest-path length between two free points on an 8-connected
/// occupancy grid; infinite if disconnected.
pub fn geodesic_distance(
    arena: &Arena,
    a: (f64, f64),
    b: (f64, f64),
    resolution: f64,
) -> Result<f64, MetricsError> {
    for p in [a, b] {
        if arena.point_in_obstacle(p.0, p.1) {
            return Err(MetricsError::PointInsideObstacle(p.0, p.1));
        }
    }
    let grid = OccupancyGrid::from_arena(arena, resolution, 0.0);
    grid_geodesic(&grid, a, b).ok_or(MetricsError::NoFreeCell(a.0, a.1))
}

/// Success-weighted path length: sr * geodesic / max(path, geodesic).
pub fn spl(sr: bool, geodesic: f64, path_length: f64) -> f64 {
    if !sr {
        return 0.0;
    }
    geodesic / path_length.max(geodesic)
}

/// Full dynamic-programming DTW over Euclidean point costs.
pub fn dtw(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "DTW inputs must be non-empty");
    let cost = |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
    let mut prev = vec![f64::INFINITY; b.len() + 1];
    let mut cur = vec![f64::INFINITY; b.len() + 1];
    prev[0] = 0.0;
    for i in 1..=a.len() {
        cur[0] = f64::INFINITY;
        for j in 1..=b.len() {
            let c = cost(a[i - 1], b[j - 1]);
            cur[j] = c + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// exp(-DTW / (|reference| * d_threshold)).
pub fn ndtw(trace: &[(f64, f64)], reference: &[(f64, f64)], d_threshold: f64) -> f64 {
    (-dtw(trace, reference) / (reference.len() as f64 * d_threshold)).exp()
}

/// Required behaviors must appear as a subsequence of the emitted labels.
pub fn behavior_match(required: &[ActionLabel], emitted: &[ActionLabel]) -> bool {
    let mut it = emitted.iter();
    required.iter().all(|r| it.any(|e| e == r))
}

/// Compute the full per-episode report against a reference trajectory.
pub fn episode_report(
    trace: &EpisodeTrace,
    arena: &Arena,
    env_config: &EnvConfig,
    metrics_config: &MetricsConfig,
    reference: &[(f64, f64)],
) -> Result<MetricReport, MetricsError> {
    if trace.poses.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let ne = navigation_error(trace, arena.goal);
    let (sr, os) = success_and_oracle(trace, arena.goal, env_config.success_radius);
    let start = trace.poses[0];
    let geodesic = geodesic_distance(arena, start, arena.goal, metrics_config.resolution)?;
    if !geodesic.is_finite() {
        return Err(MetricsError::Disconnected);
    }
    let path_length = trace.path_length();
    Ok(MetricReport {
        ne,
        os,
        sr,
        spl: spl(sr, geodesic, path_length),
        ndtw: ndtw(&trace.poses, reference, metrics_config.d_threshold),
        path_length,
        geodesic,
        behavior_match: behavior_match(&arena.required_behaviors, &trace.behaviors_emitted),
        difficulty: arena.difficulty,
    })
}

/// Aggregated means and rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub episodes: usize,
    pub mean_ne: f64,
    pub os_rate: f64,
    pub sr_rate: f64,
    pub mean_spl: f64,
    pub mean_ndtw: f64,
    pub behavior_match_rate: f64,
}

impl MetricRow {
    fn from_reports(reports: &[&MetricReport]) -> MetricRow {
        let n = reports.len() as f64;
        let rate = |f: &dyn Fn(&MetricReport) -> bool| {
            reports.iter().filter(|r| f(r)).count() as f64 / n
        };
        MetricRow {
            episodes: reports.len(),
            mean_ne: reports.iter().map(|r| r.ne).sum::<f64>() / n,
            os_rate: rate(&|r| r.os),
            sr_rate: rate(&|r| r.sr),
            mean_spl: reports.iter().map(|r| r.spl).sum::<f64>() / n,
            mean_ndtw: reports.iter().map(|r| r.ndtw).sum::<f64>() / n,
            behavior_match_rate: rate(&|r| r.behavior_match),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub overall: MetricRow,
    pub per_difficulty: BTreeMap<String, MetricRow>,
}

/// Means of NE/SPL/nDTW and rates of SR/OS/behavior-match, overall and per
/// difficulty tier.
pub fn aggregate(reports: &[MetricReport]) -> MetricSummary {
    assert!(!reports.is_empty(), "aggregate needs at least one report");
    let all: Vec<&MetricReport> = reports.iter().collect();
    let mut per: BTreeMap<String, Vec<&MetricReport>> = BTreeMap::new();
    for r in reports {
        per.entry(r.difficulty.as_str().to_string()).or_default().push(r);
    }
    MetricSummary {
        overall: MetricRow::from_reports(&all),
        per_difficulty: per
            .into_iter()
            .map(|(k, v)| (k, MetricRow::from_reports(&v)))
            .collect(),
    }
}

/// Aligned plain-text table in the benchmark layout (NE down, the rest up).
pub fn format_table(summary: &MetricSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
        "suite", "n", "NE\u{2193}", "OS\u{2191}", "SR\u{2191}", "SPL\u{2191}", "nDTW\u{2191}", "behav\u{2191}"
    ));
    let mut row = |name: &str, r: &MetricRow| {
        out.push_str(&format!(
            "{:<10} {:>5} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2}\n",
            name,
            r.episodes,
            r.mean_ne,
            r.os_rate,
            r.sr_rate,
            r.mean_spl,
            r.mean_ndtw,
            r.behavior_match_rate
        ));
    };
    for (name, r) in &summary.per_difficulty {
        row(name, r);
    }
    row("overall", &summary.overall);
    out
}
