//! Multi-class semantic occupancy grid.
//!
//! Every cell carries a vector of `C + 1` log-odds against the free class
//! (class 0), so component 0 is identically zero. Observations add log-odds
//! increments produced by an inverse observation model along exact grid
//! traversals of each beam.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pose::Pose2;

/// Per-component log-odds saturation.
pub const LOGODDS_CLAMP: f64 = 50.0;

const TRAVERSAL_EPS: f64 = 1e-12;

/// Extent and resolution of a regular grid anchored at the origin.
///
/// Cell `(ix, iy)` covers `[ix·res, (ix+1)·res) × [iy·res, (iy+1)·res)` and has
/// flat index `iy·width + ix`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "grid must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Config(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        Ok(Self {
            width,
            height,
            resolution,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= 0.0
            && y >= 0.0
            && x <= self.width as f64 * self.resolution
            && y <= self.height as f64 * self.resolution
    }

    /// Cell containing a metric point; points on the far boundary map to the last cell.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<usize> {
        if !self.contains_point(x, y) {
            return None;
        }
        let ix = ((x / self.resolution).floor() as usize).min(self.width - 1);
        let iy = ((y / self.resolution).floor() as usize).min(self.height - 1);
        Some(self.index(ix, iy))
    }

    pub fn cell_center(&self, index: usize) -> (f64, f64) {
        let (ix, iy) = self.coords(index);
        (
            (ix as f64 + 0.5) * self.resolution,
            (iy as f64 + 0.5) * self.resolution,
        )
    }

    /// 8-connected neighbours in a fixed order.
    pub fn neighbors8(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (ix, iy) = self.coords(index);
        const OFFSETS: [(i64, i64); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        OFFSETS.iter().filter_map(move |&(dx, dy)| {
            let nx = ix as i64 + dx;
            let ny = iy as i64 + dy;
            (nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height)
                .then(|| self.index(nx as usize, ny as usize))
        })
    }
}

/// One cell crossed by a ray, with the distances at which the ray enters and leaves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCell {
    pub index: usize,
    pub entry: f64,
    pub exit: f64,
}

impl RayCell {
    /// Chord length of the ray inside the cell.
    pub fn chord(&self) -> f64 {
        self.exit - self.entry
    }
}

/// Ordered cells visited by a ray. When `hit` is set it names the last cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RayTraversal {
    pub cells: Vec<RayCell>,
    pub hit: Option<usize>,
}

impl RayTraversal {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn length(&self) -> f64 {
        self.cells.iter().map(RayCell::chord).sum()
    }

    pub fn chord_of(&self, index: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.index == index)
            .map(RayCell::chord)
    }

    /// Marks the last traversed cell as the hit cell.
    pub fn with_hit(mut self) -> Self {
        self.hit = self.cells.last().map(|c| c.index);
        self
    }
}

/// Exact grid traversal of a ray (Amanatides–Woo style line crossing).
///
/// Cells touched only at a corner are skipped, so every returned cell has a
/// strictly positive chord. Traversal stops at `max_range` or at the grid
/// boundary, whichever comes first.
pub fn traverse_ray(
    geometry: &GridGeometry,
    origin: (f64, f64),
    angle: f64,
    max_range: f64,
) -> Result<RayTraversal> {
    let (ox, oy) = origin;
    let Some(start) = geometry.cell_of(ox, oy) else {
        return Err(Error::Domain(format!(
            "ray origin ({ox}, {oy}) lies outside the grid"
        )));
    };
    let mut out = RayTraversal::default();
    if !(max_range > 0.0) {
        return Ok(out);
    }
    let res = geometry.resolution;
    let (dy, dx) = angle.sin_cos();
    let (sx, sy) = geometry.coords(start);
    let (mut ix, mut iy) = (sx as i64, sy as i64);
    let axis = |cell: i64, o: f64, d: f64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((cell + 1) as f64 * res - o) / d, res / d)
        } else if d < 0.0 {
            (-1, (cell as f64 * res - o) / d, -res / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut t_max_x, t_delta_x) = axis(ix, ox, dx);
    let (step_y, mut t_max_y, t_delta_y) = axis(iy, oy, dy);
    let mut t = 0.0;
    loop {
        let t_next = t_max_x.min(t_max_y).min(max_range);
        if t_next - t > TRAVERSAL_EPS {
            out.cells.push(RayCell {
                index: geometry.index(ix as usize, iy as usize),
                entry: t,
                exit: t_next,
            });
        }
        if t_next >= max_range {
            break;
        }
        let tie = (t_max_x - t_max_y).abs() <= TRAVERSAL_EPS * t_next.max(1.0);
        // a corner crossing steps both axes at once
        let (move_x, move_y) = if tie {
            (true, true)
        } else {
            (t_max_x < t_max_y, t_max_y < t_max_x)
        };
        if move_x {
            ix += step_x;
            t_max_x += t_delta_x;
        }
        if move_y {
            iy += step_y;
            t_max_y += t_delta_y;
        }
        t = t_next;
        if ix < 0 || iy < 0 || ix >= geometry.width as i64 || iy >= geometry.height as i64 {
            break;
        }
    }
    Ok(out)
}

/// Magnitudes of the inverse observation model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseSensorModel {
    /// Log-odds added to the observed class in the hit cell.
    pub hit_increment: f64,
    /// Log-odds removed from every non-free class in cells the beam passed through.
    pub miss_decrement: f64,
    /// Distance past the measured range at which the hit cell is looked up.
    pub hit_extension: f64,
}

impl Default for InverseSensorModel {
    fn default() -> Self {
        Self {
            hit_increment: 4f64.ln(),
            miss_decrement: 0.847,
            hit_extension: 0.125,
        }
    }
}

impl InverseSensorModel {
    /// Log-odds increment for a cell the beam passed through.
    pub fn free_delta(&self, num_classes: usize) -> Vec<f64> {
        let mut d = vec![-self.miss_decrement; num_classes + 1];
        d[0] = 0.0;
        d
    }

    /// Log-odds increment for the cell where the beam returned with `class`.
    pub fn hit_delta(&self, num_classes: usize, class: usize) -> Vec<f64> {
        let mut d = vec![0.0; num_classes + 1];
        d[class] = self.hit_increment;
        d
    }
}

/// Per-cell inverse observation vectors `β_i` (absolute, i.e. prior plus increment).
#[derive(Debug, Clone, PartialEq)]
pub struct InverseObservation {
    pub betas: Vec<(usize, Vec<f64>)>,
}

/// Builds `β_i` for every traversed cell.
///
/// Cells before the hit are pushed towards free, the hit cell towards
/// `observed_class`. A traversal without a hit (max-range miss) marks all
/// cells free.
pub fn inverse_observation(
    traversal: &RayTraversal,
    observed_class: Option<usize>,
    hit_increment: f64,
    miss_decrement: f64,
    prior_logodds: &[f64],
) -> InverseObservation {
    let num_classes = prior_logodds.len() - 1;
    let model = InverseSensorModel {
        hit_increment,
        miss_decrement,
        hit_extension: 0.0,
    };
    let free = model.free_delta(num_classes);
    let betas = traversal
        .cells
        .iter()
        .map(|cell| {
            let delta = match (traversal.hit, observed_class) {
                (Some(hit), Some(c)) if hit == cell.index => model.hit_delta(num_classes, c),
                _ => free.clone(),
            };
            let beta = prior_logodds
                .iter()
                .zip(&delta)
                .map(|(y0, d)| y0 + d)
                .collect();
            (cell.index, beta)
        })
        .collect();
    InverseObservation { betas }
}

/// One beam of a scan: angle in the sensor frame, measured range, and the
/// semantic label of the return. `class == None` marks a max-range miss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    pub angle: f64,
    pub range: f64,
    pub class: Option<usize>,
}

/// Multi-class log-odds occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGrid {
    geometry: GridGeometry,
    num_classes: usize,
    logodds: Vec<f64>,
    prior: Vec<f64>,
}

impl SemanticGrid {
    /// Creates a grid where every cell holds the log-odds of `prior`.
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        num_classes: usize,
        prior: &[f64],
    ) -> Result<Self> {
        let geometry = GridGeometry::new(width, height, resolution)?;
        if num_classes == 0 {
            return Err(Error::Config(
                "at least one semantic class is required".into(),
            ));
        }
        if prior.len() != num_classes + 1 {
            return Err(Error::Config(format!(
                "prior has {} components, expected {}",
                prior.len(),
                num_classes + 1
            )));
        }
        if prior.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("prior probabilities must be positive".into()));
        }
        let sum: f64 = prior.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("prior sums to {sum}, expected 1")));
        }
        let prior_logodds: Vec<f64> = prior.iter().map(|p| (p / prior[0]).ln()).collect();
        let mut logodds = Vec::with_capacity(geometry.num_cells() * (num_classes + 1));
        for _ in 0..geometry.num_cells() {
            logodds.extend_from_slice(&prior_logodds);
        }
        Ok(Self {
            geometry,
            num_classes,
            logodds,
            prior: prior_logodds,
        })
    }

    /// Grid with a uniform prior over the `C + 1` classes.
    pub fn uniform(
        width: usize,
        height: usize,
        resolution: f64,
        num_classes: usize,
    ) -> Result<Self> {
        let k = num_classes + 1;
        Self::new(
            width,
            height,
            resolution,
            num_classes,
            &vec![1.0 / k as f64; k],
        )
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn resolution(&self) -> f64 {
        self.geometry.resolution
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_cells(&self) -> usize {
        self.geometry.num_cells()
    }

    pub fn prior_logodds(&self) -> &[f64] {
        &self.prior
    }

    fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.num_cells() {
            return Err(Error::Index(format!(
                "cell {cell} outside grid of {} cells",
                self.num_cells()
            )));
        }
        Ok(())
    }

    pub fn logodds(&self, cell: usize) -> Result<&[f64]> {
        self.check_cell(cell)?;
        Ok(self.cell_logodds(cell))
    }

    fn cell_logodds(&self, cell: usize) -> &[f64] {
        let k = self.num_classes + 1;
        &self.logodds[cell * k..(cell + 1) * k]
    }

    /// Overwrites a cell's log-odds (component 0 is forced to zero).
    pub fn set_logodds(&mut self, cell: usize, values: &[f64]) -> Result<()> {
        self.check_cell(cell)?;
        let k = self.num_classes + 1;
        if values.len() != k {
            return Err(Error::Domain(format!(
                "log-odds vector has {} components, expected {k}",
                values.len()
            )));
        }
        let base = values[0];
        for (dst, v) in self.logodds[cell * k..(cell + 1) * k]
            .iter_mut()
            .zip(values)
        {
            *dst = (v - base).clamp(-LOGODDS_CLAMP, LOGODDS_CLAMP);
        }
        Ok(())
    }

    /// `true` while the cell still holds exactly the prior.
    pub fn is_at_prior(&self, cell: usize) -> bool {
        self.cell_logodds(cell) == self.prior.as_slice()
    }

    pub fn class_probability(&self, cell: usize, class: usize) -> Result<f64> {
        self.check_cell(cell)?;
        if class > self.num_classes {
            return Err(Error::Index(format!(
                "class {class} outside [0, {}]",
                self.num_classes
            )));
        }
        Ok(softmax(self.cell_logodds(cell))[class])
    }

    /// Full categorical distribution of a cell.
    pub fn probabilities(&self, cell: usize) -> Vec<f64> {
        softmax(self.cell_logodds(cell))
    }

    /// Most probable class; ties resolve to the lower class id.
    pub fn argmax_class(&self, cell: usize) -> usize {
        let y = self.cell_logodds(cell);
        let mut best = 0;
        for (c, v) in y.iter().enumerate() {
            if *v > y[best] {
                best = c;
            }
        }
        best
    }

    /// Applies `y ← y + (β − y₀)` to one cell.
    pub fn update_cell(&mut self, cell: usize, beta: &[f64]) -> Result<()> {
        self.check_cell(cell)?;
        let k = self.num_classes + 1;
        if beta.len() != k {
            return Err(Error::Domain(format!(
                "beta has {} components, expected {k}",
                beta.len()
            )));
        }
        if beta[0] != 0.0 {
            return Err(Error::Domain("beta component 0 must be zero".into()));
        }
        let prior = &self.prior;
        for ((y, b), y0) in self.logodds[cell * k..(cell + 1) * k]
            .iter_mut()
            .zip(beta)
            .zip(prior)
            .skip(1)
        {
            *y = (*y + (b - y0)).clamp(-LOGODDS_CLAMP, LOGODDS_CLAMP);
        }
        Ok(())
    }

    pub fn apply_inverse_observation(&mut self, obs: &InverseObservation) -> Result<()> {
        for (cell, beta) in &obs.betas {
            self.update_cell(*cell, beta)?;
        }
        Ok(())
    }

    /// Traversal used to integrate one beam, with the hit cell marked for returns.
    pub fn beam_traversal(
        &self,
        pose: &Pose2,
        beam: &Beam,
        model: &InverseSensorModel,
    ) -> Result<RayTraversal> {
        let angle = pose.theta + beam.angle;
        match beam.class {
            Some(_) => Ok(traverse_ray(
                &self.geometry,
                (pose.x, pose.y),
                angle,
                beam.range + model.hit_extension,
            )?
            .with_hit()),
            None => traverse_ray(&self.geometry, (pose.x, pose.y), angle, beam.range),
        }
    }

    /// Integrates a full scan taken at `pose`.
    ///
    /// Observations are tallied per cell before any log-odds change, so the
    /// result does not depend on beam order.
    pub fn integrate_scan(
        &mut self,
        pose: &Pose2,
        scan: &[Beam],
        model: &InverseSensorModel,
    ) -> Result<()> {
        if scan.is_empty() {
            return Ok(());
        }
        if self.geometry.cell_of(pose.x, pose.y).is_none() {
            return Err(Error::Domain(format!(
                "scan pose ({}, {}) outside grid",
                pose.x, pose.y
            )));
        }
        let k = self.num_classes + 1;
        // counts[0] = free passes, counts[c] = returns labelled c
        let mut tally: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for beam in scan {
            if let Some(c) = beam.class {
                if c == 0 || c > self.num_classes {
                    return Err(Error::Index(format!(
                        "beam class {c} outside [1, {}]",
                        self.num_classes
                    )));
                }
            }
            let trav = self.beam_traversal(pose, beam, model)?;
            for cell in &trav.cells {
                let counts = tally.entry(cell.index).or_insert_with(|| vec![0; k]);
                match (trav.hit, beam.class) {
                    (Some(h), Some(c)) if h == cell.index => counts[c] += 1,
                    _ => counts[0] += 1,
                }
            }
        }
        for (cell, counts) in tally {
            let y = &mut self.logodds[cell * k..(cell + 1) * k];
            let free = counts[0] as f64 * model.miss_decrement;
            for c in 1..k {
                let delta = counts[c] as f64 * model.hit_increment - free;
                y[c] = (y[c] + delta).clamp(-LOGODDS_CLAMP, LOGODDS_CLAMP);
            }
        }
        Ok(())
    }

    /// Shannon entropy of a cell's categorical distribution, in nats.
    pub fn cell_entropy(&self, cell: usize) -> Result<f64> {
        self.check_cell(cell)?;
        Ok(entropy(&self.probabilities(cell)))
    }

    /// Sum of cell entropies (cells are treated as independent).
    pub fn map_entropy(&self) -> f64 {
        (0..self.num_cells())
            .map(|c| entropy(&self.probabilities(c)))
            .sum()
    }

    /// Writes one line `x y p_0 ... p_C` per cell, row-major from the origin.
    pub fn write_text_dump<W: Write>(&self, mut out: W) -> Result<()> {
        for cell in 0..self.num_cells() {
            let (ix, iy) = self.geometry.coords(cell);
            write!(out, "{ix} {iy}")?;
            for p in self.probabilities(cell) {
                write!(out, " {p}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Binary pixmap, one pixel per cell, coloured by argmax class. Cells that
    /// were never observed use `unknown`. The top image row is the highest `y`.
    pub fn write_ppm(&self, path: &Path, palette: &[[u8; 3]], unknown: [u8; 3]) -> Result<()> {
        if palette.len() != self.num_classes + 1 {
            return Err(Error::Config(format!(
                "palette has {} colours for {} classes",
                palette.len(),
                self.num_classes + 1
            )));
        }
        let (w, h) = (self.width(), self.height());
        let mut pixels = Vec::with_capacity(w * h * 3);
        for row in 0..h {
            let iy = h - 1 - row;
            for ix in 0..w {
                let cell = self.geometry.index(ix, iy);
                let rgb = if self.is_at_prior(cell) {
                    unknown
                } else {
                    palette[self.argmax_class(cell)]
                };
                pixels.extend_from_slice(&rgb);
            }
        }
        crate::runner::raster::write_ppm(path, w, h, &pixels)
    }
}

/// Numerically stable softmax (inverse log-odds transform).
pub fn softmax(y: &[f64]) -> Vec<f64> {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = y.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `log Σ exp(y)` with max subtraction.
pub fn log_sum_exp(y: &[f64]) -> f64 {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + y.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| q * q.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, LN_2, SQRT_2};

    #[test]
    fn uniform_prior_gives_zero_logodds() {
        let g = SemanticGrid::new(3, 2, 0.25, 1, &[0.5, 0.5]).unwrap();
        for cell in 0..g.num_cells() {
            assert_eq!(g.logodds(cell).unwrap(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn skewed_prior_logodds() {
        let g = SemanticGrid::new(2, 2, 0.25, 1, &[0.9, 0.1]).unwrap();
        let y = g.logodds(3).unwrap();
        assert_eq!(y[0], 0.0);
        assert_relative_eq!(y[1], (1.0f64 / 9.0).ln(), epsilon = 1e-15);
        assert_relative_eq!(y[1], -2.1972, epsilon = 1e-4);
        assert_relative_eq!(g.class_probability(0, 0).unwrap(), 0.9, epsilon = 1e-12);
    }

    #[test]
    fn bad_configuration_is_rejected() {
        assert!(matches!(
            SemanticGrid::new(2, 2, 0.0, 1, &[0.5, 0.5]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SemanticGrid::new(2, 2, 0.25, 1, &[0.6, 0.6]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SemanticGrid::new(2, 2, 0.25, 2, &[0.5, 0.5]),
            Err(Error::Config(_))
        ));
        assert!(SemanticGrid::uniform(4, 4, 0.25, 8).is_ok());
    }

    #[test]
    fn class_probability_examples() {
        let mut g = SemanticGrid::uniform(1, 1, 0.25, 1).unwrap();
        assert_relative_eq!(g.class_probability(0, 1).unwrap(), 0.5);
        g.set_logodds(0, &[0.0, 3f64.ln()]).unwrap();
        assert_relative_eq!(g.class_probability(0, 1).unwrap(), 0.75, epsilon = 1e-15);
        assert!(matches!(g.class_probability(0, 2), Err(Error::Index(_))));
        assert!(matches!(g.class_probability(1, 0), Err(Error::Index(_))));
    }

    #[test]
    fn update_cell_examples() {
        let mut g = SemanticGrid::uniform(1, 1, 0.25, 1).unwrap();
        g.update_cell(0, &[0.0, 1.0]).unwrap();
        assert_eq!(g.logodds(0).unwrap(), &[0.0, 1.0]);

        let p = 0.5f64.exp();
        let mut g = SemanticGrid::new(1, 1, 0.25, 1, &[1.0 / (1.0 + p), p / (1.0 + p)]).unwrap();
        let before = g.logodds(0).unwrap().to_vec();
        let y0 = g.prior_logodds().to_vec();
        g.update_cell(0, &y0).unwrap();
        assert_eq!(g.logodds(0).unwrap(), before.as_slice());
        assert!(matches!(
            g.update_cell(0, &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn logodds_saturate() {
        let mut g = SemanticGrid::uniform(1, 1, 0.25, 1).unwrap();
        for _ in 0..100 {
            g.update_cell(0, &[0.0, 10.0]).unwrap();
        }
        assert_eq!(g.logodds(0).unwrap()[1], LOGODDS_CLAMP);
        let s: f64 = g.probabilities(0).iter().sum();
        assert_relative_eq!(s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn axis_aligned_traversal() {
        let geo = GridGeometry::new(8, 8, 0.25).unwrap();
        let t = traverse_ray(&geo, (0.0, 0.125), 0.0, 1.0).unwrap();
        assert_eq!(t.len(), 4);
        for (k, c) in t.cells.iter().enumerate() {
            assert_eq!(c.index, k);
            assert_relative_eq!(c.chord(), 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_traversal_through_corners() {
        let geo = GridGeometry::new(8, 8, 0.25).unwrap();
        let t = traverse_ray(&geo, (0.0, 0.0), FRAC_PI_4, 3.0 * SQRT_2 * 0.25).unwrap();
        assert_eq!(t.len(), 3);
        for (k, c) in t.cells.iter().enumerate() {
            assert_eq!(c.index, geo.index(k, k));
            assert_relative_eq!(c.chord(), 0.25 * SQRT_2, epsilon = 1e-12);
        }
        let t = traverse_ray(&geo, (0.0, 0.0), FRAC_PI_4, SQRT_2 * 0.25).unwrap();
        assert_eq!(t.len(), 1);
        assert_relative_eq!(t.length(), 0.25 * SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_traversals() {
        let geo = GridGeometry::new(4, 4, 0.25).unwrap();
        assert!(traverse_ray(&geo, (0.5, 0.5), 1.0, 0.0).unwrap().is_empty());
        assert!(matches!(
            traverse_ray(&geo, (-0.1, 0.5), 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        // stops at the boundary
        let t = traverse_ray(&geo, (0.5, 0.6), std::f64::consts::PI, 10.0).unwrap();
        assert_relative_eq!(t.length(), 0.5, epsilon = 1e-12);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn inverse_observation_structure() {
        let geo = GridGeometry::new(8, 1, 0.25).unwrap();
        let t = traverse_ray(&geo, (0.1, 0.1), 0.0, 0.6).unwrap().with_hit();
        assert_eq!(t.len(), 3);
        let y0 = [0.0, 0.0, 0.0];
        let obs = inverse_observation(&t, Some(2), 1.0, 0.5, &y0);
        assert_eq!(obs.betas[0].1, vec![0.0, -0.5, -0.5]);
        assert_eq!(obs.betas[1].1, vec![0.0, -0.5, -0.5]);
        assert_eq!(obs.betas[2].1, vec![0.0, 0.0, 1.0]);
        let miss = traverse_ray(&geo, (0.1, 0.1), 0.0, 0.6).unwrap();
        let obs = inverse_observation(&miss, None, 1.0, 0.5, &y0);
        assert!(obs.betas.iter().all(|(_, b)| b == &vec![0.0, -0.5, -0.5]));
        assert!(obs.betas.iter().all(|(_, b)| b[0] == 0.0));
    }

    #[test]
    fn default_hit_increment_reaches_confidence_within_ten_updates() {
        let model = InverseSensorModel::default();
        for c in [1usize, 2, 3, 8] {
            let needed = (0.99 * c as f64 / 0.01).ln();
            assert!(10.0 * model.hit_increment >= needed);
            let mut g = SemanticGrid::uniform(1, 1, 0.25, c).unwrap();
            for _ in 0..10 {
                g.update_cell(0, &model.hit_delta(c, 1)).unwrap();
            }
            assert!(g.class_probability(0, 1).unwrap() > 0.99);
        }
    }

    #[test]
    fn empty_scan_leaves_grid_unchanged() {
        let mut g = SemanticGrid::uniform(4, 4, 0.25, 2).unwrap();
        let before = g.clone();
        g.integrate_scan(
            &Pose2::new(0.5, 0.5, 0.0),
            &[],
            &InverseSensorModel::default(),
        )
        .unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn repeated_hits_converge_to_observed_class() {
        let mut g = SemanticGrid::uniform(8, 1, 0.25, 3).unwrap();
        let model = InverseSensorModel::default();
        let pose = Pose2::new(0.125, 0.125, 0.0);
        let beam = Beam {
            angle: 0.0,
            range: 1.0,
            class: Some(2),
        };
        for _ in 0..10 {
            g.integrate_scan(&pose, &[beam], &model).unwrap();
        }
        assert_eq!(g.argmax_class(4), 2);
        assert!(g.class_probability(4, 2).unwrap() > 0.99);
        for cell in 0..4 {
            assert_eq!(g.argmax_class(cell), 0);
        }
        assert!(g.is_at_prior(5));
    }

    #[test]
    fn entropy_examples() {
        let g = SemanticGrid::uniform(2, 2, 0.25, 1).unwrap();
        assert_relative_eq!(g.cell_entropy(0).unwrap(), LN_2, epsilon = 1e-15);
        assert_relative_eq!(g.map_entropy(), 4.0 * LN_2, epsilon = 1e-14);
        let mut g = SemanticGrid::uniform(1, 1, 0.25, 1).unwrap();
        g.set_logodds(0, &[0.0, -1e6]).unwrap();
        assert!(g.cell_entropy(0).unwrap() < 1e-12);
    }

    #[test]
    fn text_dump_has_one_line_per_cell() {
        let g = SemanticGrid::uniform(3, 2, 0.25, 2).unwrap();
        let mut buf = Vec::new();
        g.write_text_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        let fields: Vec<&str> = lines[4].split(' ').collect();
        assert_eq!(fields.len(), 2 + 3);
        assert_eq!(&fields[..2], &["1", "1"]);
    }

    fn arb_logodds(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-60.0..60.0f64, k).prop_map(|mut v| {
            v[0] = 0.0;
            v
        })
    }

    proptest! {
        #[test]
        fn probabilities_are_normalized(y in arb_logodds(4)) {
            let mut g = SemanticGrid::uniform(1, 1, 0.25, 3).unwrap();
            g.set_logodds(0, &y).unwrap();
            let s: f64 = g.probabilities(0).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert_eq!(g.logodds(0).unwrap()[0], 0.0);
        }

        #[test]
        fn update_then_inverse_update_restores(
            y in arb_logodds(3).prop_map(|v| v.into_iter().map(|x| x / 4.0).collect::<Vec<_>>()),
            beta in arb_logodds(3).prop_map(|v| v.into_iter().map(|x| x / 4.0).collect::<Vec<_>>()),
            p1 in 0.05..0.9f64,
        ) {
            let prior = [p1, (1.0 - p1) / 2.0, (1.0 - p1) / 2.0];
            let mut g = SemanticGrid::new(1, 1, 0.25, 2, &prior).unwrap();
            g.set_logodds(0, &y).unwrap();
            let start = g.logodds(0).unwrap().to_vec();
            let y0 = g.prior_logodds().to_vec();
            let back: Vec<f64> = y0.iter().zip(&beta).map(|(a, b)| 2.0 * a - b).collect();
            g.update_cell(0, &beta).unwrap();
            g.update_cell(0, &back).unwrap();
            for (a, b) in g.logodds(0).unwrap().iter().zip(&start) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn chord_lengths_sum_to_ray_length(
            ox in 0.0..5.0f64, oy in 0.0..5.0f64, angle in -4.0..4.0f64, range in 0.0..8.0f64
        ) {
            let geo = GridGeometry::new(20, 20, 0.25).unwrap();
            let t = traverse_ray(&geo, (ox, oy), angle, range).unwrap();
            // distance to the boundary along the ray
            let (s, c) = angle.sin_cos();
            let bx = if c > 0.0 { (5.0 - ox) / c } else if c < 0.0 { -ox / c } else { f64::INFINITY };
            let by = if s > 0.0 { (5.0 - oy) / s } else if s < 0.0 { -oy / s } else { f64::INFINITY };
            let expected = range.min(bx).min(by);
            prop_assert!((t.length() - expected).abs() <= 1e-9, "{} vs {}", t.length(), expected);
            for w in t.cells.windows(2) {
                prop_assert!((w[0].exit - w[1].entry).abs() <= 1e-12);
                prop_assert!(w[0].entry < w[1].entry);
            }
            prop_assert!(t.cells.iter().all(|c| c.chord() > 0.0));
        }

        #[test]
        fn beam_order_does_not_matter(
            beams in prop::collection::vec((-3.2..3.2f64, 0.1..2.0f64, prop::option::of(1usize..=3)), 1..25),
            seed in any::<u64>(),
        ) {
            let scan: Vec<Beam> = beams.iter().map(|&(angle, range, class)| Beam { angle, range, class }).collect();
            let mut shuffled = scan.clone();
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let pose = Pose2::new(1.3, 1.1, 0.4);
            let model = InverseSensorModel::default();
            let mut a = SemanticGrid::uniform(12, 12, 0.25, 3).unwrap();
            let mut b = a.clone();
            a.integrate_scan(&pose, &scan, &model).unwrap();
            b.integrate_scan(&pose, &shuffled, &model).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn noiseless_scan_never_raises_entropy_of_uniform_cells(
            angles in prop::collection::vec(-3.2..3.2f64, 1..12),
            ranges in prop::collection::vec(0.2..1.5f64, 12),
        ) {
            let pose = Pose2::new(1.5, 1.5, 0.0);
            let scan: Vec<Beam> = angles.iter().zip(&ranges)
                .map(|(&angle, &range)| Beam { angle, range, class: Some(1) })
                .collect();
            let mut g = SemanticGrid::uniform(12, 12, 0.25, 1).unwrap();
            let before: Vec<f64> = (0..g.num_cells()).map(|c| g.cell_entropy(c).unwrap()).collect();
            g.integrate_scan(&pose, &scan, &InverseSensorModel::default()).unwrap();
            for (c, h0) in before.iter().enumerate() {
                prop_assert!(g.cell_entropy(c).unwrap() <= h0 + 1e-12);
            }
        }
    }
}
