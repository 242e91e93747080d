//! Semantic Shannon mutual information between a multi-class grid and
//! future beam measurements.
//!
//! Each beam contributes the expected information gain of the cells it
//! crosses, integrated over the range `l` and the semantic label `c` of the
//! return. Measurements along a horizon are restricted to a non-overlapping
//! subset of cells, which makes the sum a lower bound of the full mutual
//! information.

use std::collections::HashSet;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::pose::Pose2;
use crate::semgrid::{
    log_sum_exp, softmax, traverse_ray, InverseSensorModel, RayTraversal, SemanticGrid,
};

/// Beam geometry used when predicting information gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub num_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    /// Step of the midpoint rule over the range integral.
    pub range_discretization: f64,
    /// Increments the mapper would apply for each outcome.
    pub inverse_model: InverseSensorModel,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            num_beams: 36,
            fov: TAU,
            max_range: 3.0,
            range_discretization: 0.125,
            inverse_model: InverseSensorModel::default(),
        }
    }
}

impl SensorConfig {
    pub fn validate(&self, resolution: f64) -> Result<()> {
        if self.num_beams == 0 {
            return Err(Error::Config("sensor needs at least one beam".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::Config("max range must be positive".into()));
        }
        if !(self.range_discretization > 0.0) || self.range_discretization > resolution {
            return Err(Error::Config(format!(
                "range discretization must lie in (0, {resolution}]"
            )));
        }
        Ok(())
    }
}

/// Beam directions (world frame) for a sensor pointing along `heading`.
///
/// A full circle spreads beams evenly without duplicating the seam; a partial
/// field of view includes both edges.
pub fn beam_angles(heading: f64, fov: f64, num_beams: usize) -> Vec<f64> {
    if num_beams == 1 {
        return vec![heading];
    }
    if fov >= TAU - 1e-9 {
        (0..num_beams)
            .map(|k| heading + TAU * k as f64 / num_beams as f64)
            .collect()
    } else {
        (0..num_beams)
            .map(|k| heading - fov / 2.0 + fov * k as f64 / (num_beams - 1) as f64)
            .collect()
    }
}

/// Mutual information of a set of hallucinated poses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MIEstimate {
    pub total: f64,
    pub per_pose: Vec<f64>,
    pub counted: HashSet<usize>,
}

/// Per-cell information kernel.
///
/// `h(x, y) = log(1ᵀexp(y) / 1ᵀexp(x + y)) + xᵀ softmax(x + y)`, the
/// Kullback–Leibler divergence between the cell posterior after adding the
/// increment `x` and the current distribution `softmax(y)`.
pub fn h_fn(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "h_fn arguments differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let post = softmax(&xy);
    let cross: f64 = x.iter().zip(&post).map(|(a, p)| a * p).sum();
    Ok((log_sum_exp(y) - log_sum_exp(&xy) + cross).max(0.0))
}

/// Density of the event "the beam returns from `hit_cell` with label `class`"
/// per metre of range inside that cell.
pub fn measurement_pdf(
    grid: &SemanticGrid,
    traversal: &RayTraversal,
    hit_cell: usize,
    class: usize,
) -> Result<f64> {
    let Some(pos) = traversal.cells.iter().position(|c| c.index == hit_cell) else {
        return Err(Error::Domain(format!("cell {hit_cell} is not on the ray")));
    };
    if class == 0 || class > grid.num_classes() {
        return Err(Error::Index(format!(
            "class {class} outside [1, {}]",
            grid.num_classes()
        )));
    }
    let survive: f64 = traversal.cells[..pos]
        .iter()
        .map(|c| grid.class_probability(c.index, 0))
        .product::<Result<f64>>()?;
    let p_hit = grid.class_probability(hit_cell, class)?;
    Ok(p_hit / traversal.cells[pos].chord() * survive)
}

/// Expected information gain of one beam.
///
/// Cells already present in `counted` take part in the measurement likelihood
/// but contribute no information; every cell on the ray is added to `counted`
/// afterwards.
pub fn ray_mutual_information(
    grid: &SemanticGrid,
    pose: &Pose2,
    beam_angle: f64,
    cfg: &SensorConfig,
    counted: &mut HashSet<usize>,
) -> Result<f64> {
    let traversal = traverse_ray(grid.geometry(), (pose.x, pose.y), beam_angle, cfg.max_range)?;
    let num_classes = grid.num_classes();
    let free = cfg.inverse_model.free_delta(num_classes);

    let mut total = 0.0;
    let mut free_gain_before = 0.0;
    let mut survive = 1.0;
    for cell in &traversal.cells {
        let y = grid.logodds(cell.index)?;
        let fresh = !counted.contains(&cell.index);
        let probs = softmax(y);
        let chord = cell.chord();
        // midpoint samples tile the chord so the piecewise-constant density integrates exactly
        let bins = (chord / cfg.range_discretization - 1e-9).ceil().max(1.0) as usize;
        let width = chord / bins as f64;
        for (class, p) in probs.iter().enumerate().skip(1) {
            let density = p / chord * survive;
            if density == 0.0 {
                continue;
            }
            let hit_gain = if fresh {
                h_fn(&cfg.inverse_model.hit_delta(num_classes, class), y)?
            } else {
                0.0
            };
            let gain = free_gain_before + hit_gain;
            for _ in 0..bins {
                total += width * density * gain;
            }
        }
        if fresh {
            free_gain_before += h_fn(&free, y)?;
        }
        survive *= probs[0];
    }
    counted.extend(traversal.cells.iter().map(|c| c.index));
    Ok(total.max(0.0))
}

/// Lower bound of the information collected by scanning at every pose.
///
/// The grid stays frozen; a single `counted` set spans the whole horizon so
/// each cell contributes at most once (first traversal wins).
pub fn path_mutual_information(
    grid: &SemanticGrid,
    poses: &[Pose2],
    cfg: &SensorConfig,
) -> Result<MIEstimate> {
    let mut est = MIEstimate::default();
    for pose in poses {
        let mut contribution = 0.0;
        for angle in beam_angles(pose.theta, cfg.fov, cfg.num_beams) {
            contribution += ray_mutual_information(grid, pose, angle, cfg, &mut est.counted)?;
        }
        est.per_pose.push(contribution);
        est.total += contribution;
    }
    Ok(est)
}

/// Exact expected information gain of one beam by outcome enumeration.
///
/// Outcomes are "return from cell j with label c" for every traversed cell
/// and class, plus the miss event. The range inside the hit cell carries no
/// information about the map, so each cell outcome aggregates its range
/// bins. For every outcome the posterior of each cell is formed explicitly
/// and compared with its prior through the KL divergence; on uniform priors
/// this equals the entropy reduction `H(cells) − E_z[H(cells | z)]`.
pub fn brute_force_mi(
    grid: &SemanticGrid,
    pose: &Pose2,
    beam_angle: f64,
    cfg: &SensorConfig,
) -> Result<f64> {
    let traversal = traverse_ray(grid.geometry(), (pose.x, pose.y), beam_angle, cfg.max_range)?;
    let outcomes = enumerate_outcomes(grid, &traversal, &cfg.inverse_model)?;
    Ok(outcomes
        .iter()
        .map(|o| {
            o.probability
                * o.priors
                    .iter()
                    .zip(&o.posteriors)
                    .map(|(p, q)| kl_divergence(q, p))
                    .sum::<f64>()
        })
        .sum())
}

/// Entropy reduction `H(cells) − E_z[H(cells | z)]` under the same explicit
/// posterior updates as [`brute_force_mi`].
pub fn brute_force_entropy_reduction(
    grid: &SemanticGrid,
    pose: &Pose2,
    beam_angle: f64,
    cfg: &SensorConfig,
) -> Result<f64> {
    let traversal = traverse_ray(grid.geometry(), (pose.x, pose.y), beam_angle, cfg.max_range)?;
    let outcomes = enumerate_outcomes(grid, &traversal, &cfg.inverse_model)?;
    Ok(outcomes
        .iter()
        .map(|o| {
            o.probability
                * o.priors
                    .iter()
                    .zip(&o.posteriors)
                    .map(|(p, q)| crate::semgrid::entropy(p) - crate::semgrid::entropy(q))
                    .sum::<f64>()
        })
        .sum())
}

struct Outcome {
    probability: f64,
    priors: Vec<Vec<f64>>,
    posteriors: Vec<Vec<f64>>,
}

const ORACLE_MAX_CELLS: usize = 6;
const ORACLE_MAX_CLASSES: usize = 3;

fn enumerate_outcomes(
    grid: &SemanticGrid,
    traversal: &RayTraversal,
    model: &InverseSensorModel,
) -> Result<Vec<Outcome>> {
    let n = traversal.len();
    let num_classes = grid.num_classes();
    if n > ORACLE_MAX_CELLS || num_classes > ORACLE_MAX_CLASSES {
        return Err(Error::Domain(format!(
            "oracle limited to {ORACLE_MAX_CELLS} cells and {ORACLE_MAX_CLASSES} classes, got {n} and {num_classes}"
        )));
    }
    let logodds: Vec<Vec<f64>> = traversal
        .cells
        .iter()
        .map(|c| grid.logodds(c.index).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    let priors: Vec<Vec<f64>> = logodds.iter().map(|y| normalize_exp(y)).collect();
    let posterior = |i: usize, observed: Option<usize>| -> Vec<f64> {
        let mut y = logodds[i].clone();
        match observed {
            Some(c) => y[c] += model.hit_increment,
            None => y
                .iter_mut()
                .skip(1)
                .for_each(|v| *v -= model.miss_decrement),
        }
        normalize_exp(&y)
    };

    let mut outcomes = Vec::new();
    for j in 0..n {
        let survive: f64 = priors[..j].iter().map(|p| p[0]).product();
        for c in 1..=num_classes {
            let posteriors = (0..n)
                .map(|i| match i.cmp(&j) {
                    std::cmp::Ordering::Less => posterior(i, None),
                    std::cmp::Ordering::Equal => posterior(i, Some(c)),
                    std::cmp::Ordering::Greater => priors[i].clone(),
                })
                .collect();
            outcomes.push(Outcome {
                probability: survive * priors[j][c],
                priors: priors.clone(),
                posteriors,
            });
        }
    }
    outcomes.push(Outcome {
        probability: priors.iter().map(|p| p[0]).product(),
        priors: priors.clone(),
        posteriors: (0..n).map(|i| posterior(i, None)).collect(),
    });
    Ok(outcomes)
}

fn normalize_exp(y: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = y.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(qi, pi)| qi * (qi / pi).ln())
        .sum()
}
