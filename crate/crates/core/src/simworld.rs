//! Ground-truth world, simulated semantic range sensor, odometry and loop
//! closure detection.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::infotheory::beam_angles;
use crate::planner::segment_cells;
use crate::pose::Pose2;
use crate::semgrid::{traverse_ray, Beam, GridGeometry};

/// Colour used for free cells in rendered maps.
pub const FREE_COLOR: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaletteEntry {
    pub symbol: char,
    pub name: String,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthWorld {
    pub geometry: GridGeometry,
    /// Class per cell, 0 for free space.
    pub classes: Vec<usize>,
    /// Entry `k` describes class `k + 1`.
    pub palette: Vec<PaletteEntry>,
    pub start: Pose2,
}

impl GroundTruthWorld {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("world {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses the plain-text world format. `source` names the input in errors.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut resolution = None;
        let mut num_classes = None;
        let mut palette: Option<(usize, Vec<PaletteEntry>)> = None;
        let mut start = None;
        let mut rows: Vec<(usize, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim_end();
            if !rows.is_empty() || !line.contains(':') {
                if line.is_empty() {
                    if rows.is_empty() {
                        continue;
                    }
                    return Err(err(lineno, "blank line inside the grid".into()));
                }
                rows.push((lineno, line.to_string()));
                continue;
            }
            let (key, value) = line.split_once(':').unwrap();
            let value = value.trim();
            match key.trim() {
                "resolution" => {
                    let r: f64 = value
                        .parse()
                        .map_err(|e| err(lineno, format!("bad resolution '{value}': {e}")))?;
                    if !(r > 0.0) {
                        return Err(err(lineno, format!("resolution must be positive, got {r}")));
                    }
                    resolution = Some(r);
                }
                "classes" => {
                    let c: usize = value
                        .parse()
                        .map_err(|e| err(lineno, format!("bad class count '{value}': {e}")))?;
                    if c == 0 {
                        return Err(err(lineno, "at least one class is required".into()));
                    }
                    num_classes = Some(c);
                }
                "palette" => {
                    let mut entries = Vec::new();
                    for item in value.split_whitespace() {
                        let parse_item = || -> Option<PaletteEntry> {
                            let (sym, rest) = item.split_once('=')?;
                            let (name, hex) = rest.split_once(',')?;
                            let mut chars = sym.chars();
                            let symbol = chars.next()?;
                            if chars.next().is_some() || hex.len() != 6 || name.is_empty() {
                                return None;
                            }
                            let byte = |k: usize| u8::from_str_radix(&hex[k..k + 2], 16).ok();
                            Some(PaletteEntry {
                                symbol,
                                name: name.to_string(),
                                color: [byte(0)?, byte(2)?, byte(4)?],
                            })
                        };
                        let entry = parse_item()
                            .ok_or_else(|| err(lineno, format!("bad palette entry '{item}'")))?;
                        if entry.symbol == '.'
                            || entries
                                .iter()
                                .any(|e: &PaletteEntry| e.symbol == entry.symbol)
                        {
                            return Err(err(
                                lineno,
                                format!("palette symbol '{}' reused", entry.symbol),
                            ));
                        }
                        entries.push(entry);
                    }
                    if entries.first().map(|e| e.symbol) != Some('#') {
                        return Err(err(lineno, "the first palette entry must be '#'".into()));
                    }
                    palette = Some((lineno, entries));
                }
                "start" => {
                    let v: Vec<f64> = value
                        .split_whitespace()
                        .map(|f| f.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| err(lineno, format!("bad start pose '{value}': {e}")))?;
                    if v.len() != 3 {
                        return Err(err(lineno, "start needs x y theta".into()));
                    }
                    start = Some((lineno, Pose2::new(v[0], v[1], v[2])));
                }
                other => return Err(err(lineno, format!("unknown header '{other}'"))),
            }
        }
        let resolution = resolution.ok_or_else(|| err(0, "missing 'resolution:' header".into()))?;
        let num_classes = num_classes.ok_or_else(|| err(0, "missing 'classes:' header".into()))?;
        let (palette_line, palette) =
            palette.ok_or_else(|| err(0, "missing 'palette:' header".into()))?;
        let (start_line, start) = start.ok_or_else(|| err(0, "missing 'start:' header".into()))?;
        if palette.len() != num_classes {
            return Err(err(
                palette_line,
                format!(
                    "palette lists {} classes, header says {num_classes}",
                    palette.len()
                ),
            ));
        }
        if rows.is_empty() {
            return Err(err(0, "empty grid".into()));
        }
        let height = rows.len();
        let width = rows[0].1.chars().count();
        let geometry = GridGeometry::new(width, height, resolution)?;
        let mut classes = vec![0; width * height];
        for (r, (lineno, row)) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(err(
                    *lineno,
                    format!("row has {} cells, expected {width}", row.chars().count()),
                ));
            }
            let iy = height - 1 - r;
            for (ix, ch) in row.chars().enumerate() {
                let class = if ch == '.' {
                    0
                } else {
                    palette
                        .iter()
                        .position(|e| e.symbol == ch)
                        .map(|k| k + 1)
                        .ok_or_else(|| {
                            err(
                                *lineno,
                                format!("unknown cell symbol '{ch}' at column {}", ix + 1),
                            )
                        })?
                };
                let border = ix == 0 || iy == 0 || ix == width - 1 || iy == height - 1;
                if border && class == 0 {
                    return Err(err(
                        *lineno,
                        format!("border cell at column {} is free", ix + 1),
                    ));
                }
                classes[geometry.index(ix, iy)] = class;
            }
        }
        let world = Self {
            geometry,
            classes,
            palette,
            start,
        };
        match geometry.cell_of(start.x, start.y) {
            Some(c) if world.classes[c] == 0 => Ok(world),
            Some(_) => Err(err(
                start_line,
                "start pose lies in an occupied cell".into(),
            )),
            None => Err(err(start_line, "start pose lies outside the grid".into())),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.palette.len()
    }

    pub fn resolution(&self) -> f64 {
        self.geometry.resolution
    }

    pub fn class_at(&self, cell: usize) -> usize {
        self.classes[cell]
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.geometry
            .cell_of(x, y)
            .is_some_and(|c| self.classes[c] == 0)
    }

    /// True when the segment only crosses free cells.
    pub fn segment_is_free(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        segment_cells(&self.geometry, a, b)
            .is_some_and(|cells| cells.iter().all(|c| self.classes[*c] == 0))
    }

    /// Colours indexed by class, free space first.
    pub fn colors(&self) -> Vec<[u8; 3]> {
        std::iter::once(FREE_COLOR)
            .chain(self.palette.iter().map(|e| e.color))
            .collect()
    }

    /// Free cells 4-connected to the start cell.
    pub fn reachable_free_cells(&self) -> Vec<bool> {
        let g = &self.geometry;
        let mut seen = vec![false; g.num_cells()];
        let Some(s) = g.cell_of(self.start.x, self.start.y) else {
            return seen;
        };
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(c) = queue.pop_front() {
            let (x, y) = g.coords(c);
            let mut push = |nx: usize, ny: usize| {
                let n = g.index(nx, ny);
                if !seen[n] && self.classes[n] == 0 {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if x > 0 {
                push(x - 1, y);
            }
            if y > 0 {
                push(x, y - 1);
            }
            if x + 1 < g.width {
                push(x + 1, y);
            }
            if y + 1 < g.height {
                push(x, y + 1);
            }
        }
        seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub num_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    pub range_sigma: f64,
    /// Probability of reporting a wrong label, drawn uniformly among the other classes.
    pub label_error: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            num_beams: 72,
            fov: std::f64::consts::TAU,
            max_range: 3.0,
            range_sigma: 0.02,
            label_error: 0.1,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if self.num_beams == 0 || !(self.max_range > 0.0) || !(self.fov > 0.0) {
            return Err(Error::Config(
                "sensor needs beams, a positive range and field of view".into(),
            ));
        }
        if !(self.range_sigma >= 0.0) || !(0.0..1.0).contains(&self.label_error) {
            return Err(Error::Config(format!(
                "sensor noise out of range: sigma {}, label error {}",
                self.range_sigma, self.label_error
            )));
        }
        Ok(())
    }
}

/// One scan at `pose`; beam angles are relative to the heading.
pub fn simulate_scan(
    world: &GroundTruthWorld,
    pose: &Pose2,
    sensor: &SensorModel,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Beam>> {
    let c = world.num_classes();
    let mut scan = Vec::with_capacity(sensor.num_beams);
    for rel in beam_angles(0.0, sensor.fov, sensor.num_beams) {
        let trav = traverse_ray(
            &world.geometry,
            (pose.x, pose.y),
            pose.theta + rel,
            sensor.max_range,
        )?;
        let hit = trav
            .cells
            .iter()
            .find(|cell| world.classes[cell.index] != 0);
        let Some(hit) = hit else {
            scan.push(Beam {
                angle: rel,
                range: sensor.max_range,
                class: None,
            });
            continue;
        };
        let noise: f64 = rng.sample(StandardNormal);
        let range = (hit.entry + sensor.range_sigma * noise).clamp(1e-6, sensor.max_range);
        let truth = world.classes[hit.index];
        let u: f64 = rng.random();
        let class = if c > 1 && u < sensor.label_error {
            let k = rng.random_range(1..c);
            if k >= truth {
                k + 1
            } else {
                k
            }
        } else {
            truth
        };
        scan.push(Beam {
            angle: rel,
            range,
            class: Some(class),
        });
    }
    Ok(scan)
}

/// Zero-mean Gaussian on SE(2) increments, sampled through a symmetric square root
/// so singular covariances (including zero) are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianNoise {
    pub covariance: Matrix3<f64>,
}

impl GaussianNoise {
    pub fn new(covariance: Matrix3<f64>) -> Result<Self> {
        let scale = covariance.amax().max(1.0);
        if (covariance - covariance.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Config("noise covariance is not symmetric".into()));
        }
        if SymmetricEigen::new(covariance).eigenvalues.min() < -1e-15 * scale {
            return Err(Error::Config(
                "noise covariance is not positive semidefinite".into(),
            ));
        }
        Ok(Self { covariance })
    }

    pub fn diagonal(sx: f64, sy: f64, stheta: f64) -> Self {
        Self {
            covariance: Matrix3::from_diagonal(&Vector3::new(sx * sx, sy * sy, stheta * stheta)),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vector3<f64> {
        let eig = SymmetricEigen::new(self.covariance);
        let root = eig.eigenvectors
            * Matrix3::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()))
            * eig.eigenvectors.transpose();
        let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        root * z
    }

    /// Information matrix `Σ⁻¹`, if the covariance is invertible.
    pub fn information(&self) -> Option<Matrix3<f64>> {
        self.covariance
            .try_inverse()
            .map(|m| (m + m.transpose()) * 0.5)
    }

    /// Perturbs a relative motion additively on `(dx, dy, dθ)`.
    pub fn corrupt(&self, delta: &Pose2, rng: &mut ChaCha8Rng) -> Pose2 {
        Pose2::from_vector(&(delta.to_vector() + self.sample(rng)))
    }
}

/// Default odometry noise per 0.25 m step.
pub fn default_odometry_noise() -> GaussianNoise {
    GaussianNoise::diagonal(0.01, 0.01, 0.5f64.to_radians())
}

/// Default loop-closure measurement noise.
pub fn default_loop_noise() -> GaussianNoise {
    GaussianNoise::diagonal(0.02, 0.02, 0.5f64.to_radians())
}

pub fn simulate_odometry(delta: &Pose2, model: &GaussianNoise, rng: &mut ChaCha8Rng) -> Pose2 {
    model.corrupt(delta, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopClosure {
    pub node: usize,
    /// Noisy transform from `node` to the current pose.
    pub measurement: Pose2,
}

/// Oracle place recognition on true poses: nearest node at least
/// `min_separation` entries older than the end of `history`, within `radius`
/// and in line of sight.
pub fn detect_loop_closure(
    history: &[Pose2],
    current: &Pose2,
    world: &GroundTruthWorld,
    radius: f64,
    min_separation: usize,
    noise: &GaussianNoise,
    rng: &mut ChaCha8Rng,
) -> Option<LoopClosure> {
    let newest = history.len();
    let mut best: Option<(f64, usize)> = None;
    for (j, node) in history.iter().enumerate() {
        if newest - j < min_separation {
            break;
        }
        let d = node.distance(current);
        if d <= radius
            && best.is_none_or(|(bd, _)| d < bd)
            && world.segment_is_free((node.x, node.y), (current.x, current.y))
        {
            best = Some((d, j));
        }
    }
    let (_, node) = best?;
    let truth = history[node].between(current);
    Some(LoopClosure {
        node,
        measurement: noise.corrupt(&truth, rng),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub pose: Pose2,
    pub arrived: bool,
}

/// Advances towards `waypoint` by at most `speed`, facing the direction of travel.
///
/// Arrival is flagged within `tolerance` of the waypoint.
pub fn step_towards(pose: &Pose2, waypoint: (f64, f64), speed: f64, tolerance: f64) -> StepOutcome {
    let (dx, dy) = (waypoint.0 - pose.x, waypoint.1 - pose.y);
    let dist = dx.hypot(dy);
    if dist <= tolerance || speed <= 0.0 {
        return StepOutcome {
            pose: *pose,
            arrived: dist <= tolerance,
        };
    }
    let travel = speed.min(dist);
    let heading = dy.atan2(dx);
    let next = Pose2::new(
        pose.x + travel * dx / dist,
        pose.y + travel * dy / dist,
        heading,
    );
    StepOutcome {
        pose: next,
        arrived: dist - travel <= tolerance,
    }
}

/// Moves the true pose and checks the swept segment against the world.
pub fn step(
    world: &GroundTruthWorld,
    pose: &Pose2,
    waypoint: (f64, f64),
    speed: f64,
) -> Result<StepOutcome> {
    let out = step_towards(pose, waypoint, speed, world.resolution() / 2.0);
    check_motion(world, pose, &out.pose)?;
    Ok(out)
}

pub fn check_motion(world: &GroundTruthWorld, from: &Pose2, to: &Pose2) -> Result<()> {
    if world.segment_is_free((from.x, from.y), (to.x, to.y)) {
        Ok(())
    } else {
        Err(Error::Collision {
            x: to.x,
            y: to.y,
            msg: format!(
                "motion from ({:.3}, {:.3}) crosses an occupied cell",
                from.x, from.y
            ),
        })
    }
}

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Sensor = 1,
    Odometry = 2,
    Loop = 3,
}

pub fn rng_stream(master_seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const SMALL: &str = "resolution: 0.25
classes: 2
palette: #=wall,404040 c=chair,c03030
start: 0.375 0.375 0
#####
#...#
#.c.#
#...#
#####
";

    fn world() -> GroundTruthWorld {
        GroundTruthWorld::parse(SMALL, "small").unwrap()
    }

    #[test]
    fn parses_small_world() {
        let w = world();
        assert_eq!((w.geometry.width, w.geometry.height), (5, 5));
        assert_eq!(w.num_classes(), 2);
        assert_eq!(w.class_at(w.geometry.index(2, 2)), 2);
        assert_eq!(w.class_at(w.geometry.index(0, 0)), 1);
        assert_eq!(w.colors()[1], [0x40, 0x40, 0x40]);
        assert_eq!(w.reachable_free_cells().iter().filter(|r| **r).count(), 8);
        let tiny = "resolution: 0.25\nclasses: 1\npalette: #=wall,000000\nstart: 0.3 0.3 0\n###\n#.#\n###\n";
        assert!(GroundTruthWorld::parse(tiny, "tiny").is_ok());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = SMALL.replace("start: 0.375 0.375 0", "start: 0.1 0.1 0");
        match GroundTruthWorld::parse(&bad, "w") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let bad = SMALL.replace("#.c.#", "#.x.#");
        match GroundTruthWorld::parse(&bad, "w") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 7);
                assert!(msg.contains('x'));
            }
            other => panic!("{other:?}"),
        }
        let bad = SMALL.replace("#...#\n#####", "....#\n#####");
        assert!(matches!(
            GroundTruthWorld::parse(&bad, "w"),
            Err(Error::Parse { line: 8, .. })
        ));
        let bad = SMALL.replace("classes: 2", "classes: 3");
        assert!(matches!(
            GroundTruthWorld::parse(&bad, "w"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn trailing_whitespace_is_ignored() {
        let padded: String = SMALL.lines().map(|l| format!("{l}  \n")).collect();
        assert_eq!(GroundTruthWorld::parse(&padded, "p").unwrap(), world());
    }

    #[test]
    fn noiseless_scan_matches_geometry() {
        let w = world();
        let s = SensorModel {
            num_beams: 4,
            range_sigma: 0.0,
            label_error: 0.0,
            ..Default::default()
        };
        let pose = Pose2::new(0.375, 0.625, 0.0);
        let scan = simulate_scan(&w, &pose, &s, &mut rng_stream(1, Stream::Sensor)).unwrap();
        let expect = [(0.125, 2), (0.375, 1), (0.125, 1), (0.375, 1)];
        for (beam, (range, class)) in scan.iter().zip(expect) {
            assert_relative_eq!(beam.range, range, epsilon = 1e-12);
            assert_eq!(beam.class, Some(class));
        }
    }

    #[test]
    fn open_beams_report_misses() {
        let mut text = String::from(
            "resolution: 0.25\nclasses: 1\npalette: #=wall,000000\nstart: 0.3 0.3 0\n",
        );
        text.push_str(&"#".repeat(30));
        text.push('\n');
        for _ in 0..3 {
            text.push('#');
            text.push_str(&".".repeat(28));
            text.push_str("#\n");
        }
        text.push_str(&"#".repeat(30));
        text.push('\n');
        let w = GroundTruthWorld::parse(&text, "long").unwrap();
        let s = SensorModel {
            num_beams: 1,
            fov: 0.1,
            ..Default::default()
        };
        let scan = simulate_scan(
            &w,
            &Pose2::new(0.3, 0.6, 0.0),
            &s,
            &mut rng_stream(0, Stream::Sensor),
        )
        .unwrap();
        assert_eq!(scan[0].class, None);
        assert_eq!(scan[0].range, 3.0);
    }

    #[test]
    fn label_noise_frequency() {
        let w = world();
        let s = SensorModel {
            num_beams: 1,
            fov: 0.1,
            label_error: 0.5,
            ..Default::default()
        };
        let mut rng = rng_stream(9, Stream::Sensor);
        let pose = Pose2::new(0.375, 0.625, 0.0);
        let mut correct = 0;
        for _ in 0..10_000 {
            let b = simulate_scan(&w, &pose, &s, &mut rng).unwrap()[0];
            if b.class == Some(2) {
                correct += 1;
            }
            assert!(b.range > 0.0 && b.range <= 3.0);
        }
        assert!((correct as f64 / 1e4 - 0.5).abs() < 0.02, "{correct}");
    }

    #[test]
    fn scans_are_reproducible() {
        let w = world();
        let pose = Pose2::new(0.5, 0.5, 0.3);
        let a = simulate_scan(
            &w,
            &pose,
            &Default::default(),
            &mut rng_stream(5, Stream::Sensor),
        )
        .unwrap();
        let b = simulate_scan(
            &w,
            &pose,
            &Default::default(),
            &mut rng_stream(5, Stream::Sensor),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn odometry_noise_statistics() {
        let zero = GaussianNoise::new(Matrix3::zeros()).unwrap();
        let d = Pose2::new(0.25, 0.0, 0.1);
        assert_eq!(
            simulate_odometry(&d, &zero, &mut rng_stream(1, Stream::Odometry)),
            d
        );

        let cov = Matrix3::new(4e-4, 1e-4, 0.0, 1e-4, 2e-4, 0.0, 0.0, 0.0, 1e-4);
        let model = GaussianNoise::new(cov).unwrap();
        let mut rng = rng_stream(2, Stream::Odometry);
        let n = 100_000;
        let mut acc = Matrix3::zeros();
        for _ in 0..n {
            let v = model.sample(&mut rng);
            acc += v * v.transpose();
        }
        acc /= n as f64;
        for (a, b) in acc.iter().zip(cov.iter()) {
            if *b != 0.0 {
                assert!((a - b).abs() <= 0.05 * b.abs(), "{a} vs {b}");
            } else {
                assert!(a.abs() < 5e-6);
            }
        }
        let a: Vec<_> = (0..5)
            .map(|_| model.sample(&mut rng_stream(3, Stream::Odometry)))
            .collect();
        let b: Vec<_> = (0..5)
            .map(|_| model.sample(&mut rng_stream(3, Stream::Odometry)))
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_are_independent() {
        let mut a = rng_stream(7, Stream::Sensor);
        let mut b = rng_stream(7, Stream::Odometry);
        let xa: u64 = rand::Rng::random(&mut a);
        let xb: u64 = rand::Rng::random(&mut b);
        assert_ne!(xa, xb);
    }

    fn open_room() -> GroundTruthWorld {
        let mut text = String::from(
            "resolution: 0.25\nclasses: 1\npalette: #=wall,000000\nstart: 0.5 0.5 0\n",
        );
        let w = 20;
        text.push_str(&"#".repeat(w));
        text.push('\n');
        for r in 0..18 {
            text.push('#');
            for c in 0..w - 2 {
                text.push(if c == 9 && r < 14 { '#' } else { '.' });
            }
            text.push_str("#\n");
        }
        text.push_str(&"#".repeat(w));
        text.push('\n');
        GroundTruthWorld::parse(&text, "room").unwrap()
    }

    #[test]
    fn loop_closure_contract() {
        let w = open_room();
        let noise = GaussianNoise::new(Matrix3::zeros()).unwrap();
        let mut rng = rng_stream(1, Stream::Loop);
        let history: Vec<Pose2> = (0..12)
            .map(|i| Pose2::new(0.5 + 0.1 * i as f64, 0.5, 0.0))
            .collect();
        let here = Pose2::new(0.6, 0.7, 1.0);
        let lc = detect_loop_closure(&history, &here, &w, 1.0, 10, &noise, &mut rng).unwrap();
        assert_eq!(lc.node, 1);
        assert_relative_eq!(
            lc.measurement.x,
            history[1].between(&here).x,
            epsilon = 1e-12
        );
        assert!(detect_loop_closure(&history[..5], &here, &w, 1.0, 10, &noise, &mut rng).is_none());
        // across the partial wall at x in [2.5, 2.75], y >= 1.25
        let history: Vec<Pose2> = (0..12).map(|_| Pose2::new(2.3, 3.0, 0.0)).collect();
        let other_side = Pose2::new(3.0, 3.0, 0.0);
        assert!(
            detect_loop_closure(&history, &other_side, &w, 1.0, 10, &noise, &mut rng).is_none()
        );
    }

    #[test]
    fn stepping_examples() {
        let w = open_room();
        let mut p = Pose2::new(0.5, 0.5, 0.0);
        let mut steps = 0;
        loop {
            let o = step(&w, &p, (1.5, 0.5), 0.25).unwrap();
            p = o.pose;
            steps += 1;
            if o.arrived {
                break;
            }
        }
        assert_eq!(steps, 4);
        let o = step(&w, &p, (2.0, 2.0), 0.0).unwrap();
        assert_eq!(o.pose, p);
        assert!(!o.arrived);
        let o = step(&w, &Pose2::new(2.3, 3.0, 0.0), (3.0, 3.0), 1.0);
        assert!(matches!(o, Err(Error::Collision { .. })));
    }

    proptest! {
        #[test]
        fn scan_ranges_stay_in_bounds(x in 0.3f64..4.6, y in 0.3f64..4.6, th in -3.0f64..3.0, seed in any::<u64>()) {
            let w = open_room();
            prop_assume!(w.is_free_point(x, y));
            let s = SensorModel::default();
            let scan = simulate_scan(&w, &Pose2::new(x, y, th), &s, &mut rng_stream(seed, Stream::Sensor)).unwrap();
            prop_assert_eq!(scan.len(), 72);
            for b in scan {
                prop_assert!(b.range > 0.0 && b.range <= s.max_range);
                if let Some(c) = b.class { prop_assert_eq!(c, 1); }
            }
        }
    }
}
