//! Candidate scoring: hallucinated pose-graph extensions and the
//! Shannon-Rényi utility.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::planner::{LabelMap, PlannedPath};
use crate::pose::Pose2;
use crate::posegraph::{MatrixNorm, PoseGraph};

pub const MI_EPS: f64 = 1e-9;

/// Parameters of the predicted graph extension along a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HallucinationParams {
    pub node_spacing: f64,
    pub loop_radius: f64,
    /// Minimum index gap between a predicted node and a loop partner.
    pub min_separation: usize,
    pub odom_info: Matrix3<f64>,
    pub loop_info: Matrix3<f64>,
}

impl Default for HallucinationParams {
    fn default() -> Self {
        Self {
            node_spacing: 0.5,
            loop_radius: 1.0,
            min_separation: 10,
            odom_info: Matrix3::identity(),
            loop_info: Matrix3::identity(),
        }
    }
}

/// Points every `spacing` metres along a polyline, each with the heading of its segment.
pub fn sample_polyline(points: &[(f64, f64)], spacing: f64) -> Vec<Pose2> {
    let total = PlannedPath::polyline_length(points);
    if points.len() < 2 || spacing <= 0.0 || total <= 0.0 {
        return Vec::new();
    }
    let count = (total / spacing + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 1..=count {
        let s = (k as f64 * spacing).min(total);
        loop {
            let (a, b) = (points[seg], points[seg + 1]);
            let len = (b.0 - a.0).hypot(b.1 - a.1);
            if s <= seg_start + len + 1e-12 || seg + 2 == points.len() {
                let t = if len > 0.0 {
                    ((s - seg_start) / len).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let heading = if len > 0.0 {
                    (b.1 - a.1).atan2(b.0 - a.0)
                } else {
                    0.0
                };
                out.push(Pose2::new(
                    a.0 + t * (b.0 - a.0),
                    a.1 + t * (b.1 - a.1),
                    heading,
                ));
                break;
            }
            seg_start += len;
            seg += 1;
        }
    }
    out
}

/// Predicted graph after following `path` from the current estimate `start`.
///
/// Returns the extended graph and the number of predicted loop edges. A loop
/// is predicted at a new node when an existing node at least
/// `min_separation` indices older lies within `loop_radius` and the straight
/// segment between them crosses only free cells; only the nearest such node
/// is linked.
pub fn hallucinate_graph(
    graph: &PoseGraph,
    start: &Pose2,
    path: &[(f64, f64)],
    labels: &LabelMap,
    params: &HallucinationParams,
) -> Result<(PoseGraph, usize)> {
    let mut out = graph.clone();
    if graph.nodes.is_empty() {
        return Err(Error::Domain("cannot extend an empty pose graph".into()));
    }
    let mut points = Vec::with_capacity(path.len() + 1);
    points.push((start.x, start.y));
    points.extend_from_slice(path);
    let existing = graph.nodes.len();
    let mut loops = 0;
    for pose in sample_polyline(&points, params.node_spacing) {
        let prev = out.nodes.len() - 1;
        let z = out.nodes[prev].between(&pose);
        let id = out.add_node(pose);
        out.add_odometry_edge(prev, id, z, params.odom_info)?;
        let mut best: Option<(f64, usize)> = None;
        for (j, node) in graph.nodes.iter().enumerate().take(existing) {
            if id - j < params.min_separation {
                continue;
            }
            let d = node.distance(&pose);
            if d <= params.loop_radius
                && best.is_none_or(|(bd, _)| d < bd)
                && labels.segment_is_free((node.x, node.y), (pose.x, pose.y))
            {
                best = Some((d, j));
            }
        }
        if let Some((_, j)) = best {
            let z = out.nodes[j].between(&pose);
            out.add_loop_edge(j, id, z, params.loop_info)?;
            loops += 1;
        }
    }
    Ok((out, loops))
}

/// `1 + cost / max(mi, ε)`.
pub fn alpha(cost: f64, mi: f64) -> f64 {
    1.0 + cost / mi.max(MI_EPS)
}

/// Utility as printed: `D − D / (1 − α)`, with the cost floored at `cost_eps`.
pub fn shannon_renyi_printed(d_opt: f64, mi: f64, cost: f64, cost_eps: f64) -> f64 {
    let a = alpha(cost.max(cost_eps), mi);
    d_opt - d_opt / (1.0 - a)
}

/// Closed form `D · (1 + mi / max(cost, ε_c))`.
pub fn shannon_renyi_utility(d_opt: f64, mi: f64, cost: f64, cost_eps: f64) -> f64 {
    d_opt * (1.0 + mi / cost.max(cost_eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// D-optimality and information per cost.
    Full,
    /// Information per cost only.
    MiOnly,
    /// Closest reachable frontier.
    NearestFrontier,
}

impl Method {
    pub fn score(&self, d_opt: f64, mi: f64, cost: f64, cost_eps: f64) -> f64 {
        match self {
            Method::Full => shannon_renyi_utility(d_opt, mi, cost, cost_eps),
            Method::MiOnly => mi / cost.max(cost_eps),
            Method::NearestFrontier => -cost,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::MiOnly => "mi-only",
            Method::NearestFrontier => "nearest-frontier",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Method::Full),
            "mi-only" => Ok(Method::MiOnly),
            "nearest-frontier" => Ok(Method::NearestFrontier),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathCandidate {
    pub frontier_id: usize,
    pub goal: (f64, f64),
    pub path: PlannedPath,
    pub hallucinated: PoseGraph,
    pub predicted_loops: usize,
    pub mi: f64,
    pub cost: f64,
    pub d_opt: f64,
    pub utility: f64,
}

impl PathCandidate {
    /// D-optimality of the hallucinated graph and the resulting utility.
    pub fn score(&mut self, method: Method, norm: MatrixNorm, loop_boost: f64, cost_eps: f64) {
        self.d_opt = self.hallucinated.d_opt(norm, loop_boost);
        self.utility = method.score(self.d_opt, self.mi, self.cost, cost_eps);
    }
}

const TIE_REL: f64 = 1e-9;

/// Index of the best candidate: highest utility, then lower cost, then lower
/// frontier id. `None` means nothing is left to explore.
pub fn select_action(candidates: &[PathCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(b) = best else {
            best = Some(i);
            continue;
        };
        let cur = &candidates[b];
        let tol = TIE_REL * c.utility.abs().max(cur.utility.abs());
        let better = if (c.utility - cur.utility).abs() <= tol {
            (c.cost, c.frontier_id) < (cur.cost, cur.frontier_id)
        } else {
            c.utility > cur.utility
        };
        if better {
            best = Some(i);
        }
    }
    best
}
