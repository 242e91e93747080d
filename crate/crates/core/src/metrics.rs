//! Trajectory, geometric and semantic map quality, and coverage over time.

use std::io::Write;

use crate::error::{Error, Result};
use crate::planner::{CellLabel, LabelMap};
use crate::pose::Pose2;
use crate::semgrid::{GridGeometry, SemanticGrid};
use crate::simworld::GroundTruthWorld;

/// Rigid 2-D alignment `(θ, tx, ty)` minimising `Σ |R·a_i + t − b_i|²`.
pub fn align_rigid(a: &[(f64, f64)], b: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = a.len() as f64;
    let mean = |p: &[(f64, f64)]| {
        let (sx, sy) = p.iter().fold((0.0, 0.0), |(x, y), q| (x + q.0, y + q.1));
        (sx / n, sy / n)
    };
    let (ma, mb) = (mean(a), mean(b));
    let (mut cross, mut dot) = (0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        let (px, py) = (p.0 - ma.0, p.1 - ma.1);
        let (qx, qy) = (q.0 - mb.0, q.1 - mb.1);
        cross += px * qy - py * qx;
        dot += px * qx + py * qy;
    }
    let theta = cross.atan2(dot);
    let (s, c) = theta.sin_cos();
    (
        theta,
        mb.0 - (c * ma.0 - s * ma.1),
        mb.1 - (s * ma.0 + c * ma.1),
    )
}

/// Absolute trajectory error: RMSE of positions after rigid alignment.
pub fn ate(estimated: &[Pose2], truth: &[Pose2]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::Domain(format!(
            "trajectory lengths differ: {} vs {}",
            estimated.len(),
            truth.len()
        )));
    }
    if estimated.len() < 2 {
        return Err(Error::Domain("ATE needs at least two poses".into()));
    }
    let a: Vec<(f64, f64)> = estimated.iter().map(|p| (p.x, p.y)).collect();
    let b: Vec<(f64, f64)> = truth.iter().map(|p| (p.x, p.y)).collect();
    let (theta, tx, ty) = align_rigid(&a, &b);
    let (s, c) = theta.sin_cos();
    let sq: f64 = a
        .iter()
        .zip(&b)
        .map(|(p, q)| {
            let x = c * p.0 - s * p.1 + tx;
            let y = s * p.0 + c * p.1 + ty;
            (x - q.0).powi(2) + (y - q.1).powi(2)
        })
        .sum();
    Ok((sq / a.len() as f64).sqrt())
}

fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0;
    let first = match f.iter().position(|x| x.is_finite()) {
        Some(i) => i,
        None => {
            out.fill(f64::INFINITY);
            return;
        }
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            // z[0] is -inf, so k never underflows
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (in cells) to the nearest marked cell.
pub fn squared_distance_transform(geometry: &GridGeometry, sites: &[bool]) -> Vec<f64> {
    let (w, h) = (geometry.width, geometry.height);
    let mut grid: Vec<f64> = sites
        .iter()
        .map(|s| if *s { 0.0 } else { f64::INFINITY })
        .collect();
    let mut col = vec![0.0; h];
    let mut tmp = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[geometry.index(x, y)];
        }
        edt_1d(&col, &mut tmp);
        for y in 0..h {
            grid[geometry.index(x, y)] = tmp[y];
        }
    }
    let mut row = vec![0.0; w];
    let mut tmp = vec![0.0; w];
    for y in 0..h {
        row.copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&row, &mut tmp);
        grid[y * w..(y + 1) * w].copy_from_slice(&tmp);
    }
    grid
}

/// Mean distance from estimated-occupied cell centres to the nearest truly
/// occupied cell centre; `None` when nothing is estimated occupied.
pub fn map_error(labels: &LabelMap, world: &GroundTruthWorld) -> Option<f64> {
    let truth: Vec<bool> = world.classes.iter().map(|c| *c != 0).collect();
    let dist = squared_distance_transform(&world.geometry, &truth);
    let occupied: Vec<usize> = (0..labels.labels.len())
        .filter(|c| labels.labels[*c] == CellLabel::Occupied)
        .collect();
    if occupied.is_empty() || !truth.iter().any(|t| *t) {
        return None;
    }
    let sum: f64 = occupied.iter().map(|c| dist[*c].sqrt()).sum();
    Some(sum * world.resolution() / occupied.len() as f64)
}

/// Intersection over union of two cell sets; `None` if both are empty.
pub fn iou(a: &[bool], b: &[bool]) -> Option<f64> {
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    (union > 0).then(|| inter as f64 / union as f64)
}

/// IoU of class `c` between argmax labels and the world, over observed cells only.
pub fn iou_per_class(
    grid: &SemanticGrid,
    world: &GroundTruthWorld,
    class: usize,
) -> Result<Option<f64>> {
    if class == 0 || class > grid.num_classes() {
        return Err(Error::Index(format!(
            "class {class} outside [1, {}]",
            grid.num_classes()
        )));
    }
    let observed: Vec<bool> = (0..grid.num_cells())
        .map(|c| !grid.is_at_prior(c))
        .collect();
    let est: Vec<bool> = (0..grid.num_cells())
        .map(|c| observed[c] && grid.argmax_class(c) == class)
        .collect();
    let truth: Vec<bool> = (0..grid.num_cells())
        .map(|c| observed[c] && world.classes[c] == class)
        .collect();
    Ok(iou(&est, &truth))
}

/// Per-class IoU for classes `1..=C` and their mean over defined values.
pub fn semantic_iou(
    grid: &SemanticGrid,
    world: &GroundTruthWorld,
) -> (Vec<Option<f64>>, Option<f64>) {
    let per: Vec<Option<f64>> = (1..=grid.num_classes())
        .map(|c| iou_per_class(grid, world, c).expect("class in range"))
        .collect();
    let defined: Vec<f64> = per.iter().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    (per, mean)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub true_pose: Pose2,
    pub est_pose: Pose2,
    /// Cells labelled free or occupied at any time so far.
    pub explored_cells: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub resolution: f64,
    pub steps: Vec<StepRecord>,
}

impl RunLog {
    pub fn new(resolution: f64) -> Self {
        Self {
            resolution,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, record: StepRecord) {
        debug_assert!(self.steps.last().is_none_or(|r| r.step < record.step));
        self.steps.push(record);
    }
}

/// `(step, explored m²)`, non-decreasing.
pub fn coverage_curve(log: &RunLog) -> Vec<(usize, f64)> {
    let area = log.resolution * log.resolution;
    let mut best = 0;
    log.steps
        .iter()
        .map(|r| {
            best = best.max(r.explored_cells);
            (r.step, best as f64 * area)
        })
        .collect()
}

/// First step at which coverage reaches `target` m².
pub fn steps_to_coverage(curve: &[(usize, f64)], target: f64) -> Option<usize> {
    curve.iter().find(|(_, a)| *a >= target).map(|(s, _)| *s)
}

/// Free and occupied area reachable from the start: free cells connected to
/// the start plus the occupied cells bordering them.
pub fn reachable_area(world: &GroundTruthWorld) -> f64 {
    let count = reachable_cells(world).iter().filter(|r| **r).count();
    count as f64 * world.resolution() * world.resolution()
}

/// Mask of the cells counted by [`reachable_area`].
pub fn reachable_cells(world: &GroundTruthWorld) -> Vec<bool> {
    let g = &world.geometry;
    let free = world.reachable_free_cells();
    (0..g.num_cells())
        .map(|c| free[c] || (world.classes[c] != 0 && g.neighbors8(c).any(|n| free[n])))
        .collect()
}

/// One line of the per-run summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub seed: u64,
    pub method: String,
    pub world: String,
    pub status: String,
    pub steps: usize,
    pub ate: Option<f64>,
    pub map_error: Option<f64>,
    pub mean_iou: Option<f64>,
    pub coverage_m2: f64,
    pub coverage_fraction: f64,
    pub steps_to_90: Option<usize>,
    pub loop_closures: usize,
    pub iou: Vec<Option<f64>>,
}

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "seed",
    "method",
    "world",
    "status",
    "steps",
    "ate",
    "map_error",
    "mean_iou",
    "coverage_m2",
    "coverage_fraction",
    "steps_to_90",
    "loop_closures",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SummaryRow {
    pub fn header(num_classes: usize) -> Vec<String> {
        SUMMARY_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain((1..=num_classes).map(|c| format!("iou_{c}")))
            .collect()
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.seed.to_string(),
            self.method.clone(),
            self.world.clone(),
            self.status.clone(),
            self.steps.to_string(),
            opt(self.ate),
            opt(self.map_error),
            opt(self.mean_iou),
            self.coverage_m2.to_string(),
            self.coverage_fraction.to_string(),
            opt(self.steps_to_90),
            self.loop_closures.to_string(),
        ];
        r.extend(self.iou.iter().map(|v| opt(*v)));
        r
    }
}

/// Summary table with columns [`SUMMARY_COLUMNS`] followed by `iou_1..iou_C`.
pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow], num_classes: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SummaryRow::header(num_classes))?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `step,coverage_m2`.
pub fn write_coverage<W: Write>(out: W, curve: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "coverage_m2"])?;
    for (s, a) in curve {
        w.write_record([s.to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `step,true_x,true_y,true_theta,est_x,est_y,est_theta,explored_cells`.
pub fn write_trajectory<W: Write>(out: W, log: &RunLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "step",
        "true_x",
        "true_y",
        "true_theta",
        "est_x",
        "est_y",
        "est_theta",
        "explored_cells",
    ])?;
    for r in &log.steps {
        w.write_record([
            r.step.to_string(),
            r.true_pose.x.to_string(),
            r.true_pose.y.to_string(),
            r.true_pose.theta.to_string(),
            r.est_pose.x.to_string(),
            r.est_pose.y.to_string(),
            r.est_pose.theta.to_string(),
            r.explored_cells.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
