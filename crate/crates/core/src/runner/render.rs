//! Figures rendered from the artifacts of a finished run.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::posegraph::{EdgeKind, PoseGraph};

use super::raster::Canvas;

pub const UNKNOWN_COLOR: [u8; 3] = [128, 128, 128];
/// Pixels per map cell in the rendered figures.
pub const SCALE: usize = 4;

const TRUE_COLOR: [u8; 3] = [0, 160, 0];
const EST_COLOR: [u8; 3] = [220, 0, 0];
const ODOM_COLOR: [u8; 3] = [0, 0, 220];
const LOOP_COLOR: [u8; 3] = [230, 120, 0];
const NODE_COLOR: [u8; 3] = [0, 0, 0];

pub const FIGURES: [&str; 4] = [
    "fig_map.ppm",
    "fig_trajectory.ppm",
    "fig_graph.ppm",
    "fig_coverage.ppm",
];

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact(p.display().to_string()))
    }
}

fn upscale(map: &Canvas) -> Canvas {
    let mut out = Canvas::new(map.width * SCALE, map.height * SCALE, [0; 3]);
    for y in 0..out.height {
        for x in 0..out.width {
            out.set(x as i64, y as i64, map.get(x / SCALE, y / SCALE));
        }
    }
    out
}

struct Frame {
    resolution: f64,
    height: usize,
}

impl Frame {
    fn pixel(&self, x: f64, y: f64) -> (i64, i64) {
        let s = SCALE as f64 / self.resolution;
        let py = (self.height * SCALE) as f64 - y * s;
        ((x * s).floor() as i64, py.floor() as i64)
    }
}

fn polyline(canvas: &mut Canvas, frame: &Frame, pts: &[(f64, f64)], color: [u8; 3]) {
    for w in pts.windows(2) {
        canvas.line(
            frame.pixel(w[0].0, w[0].1),
            frame.pixel(w[1].0, w[1].1),
            color,
        );
    }
}

fn dot(canvas: &mut Canvas, (x, y): (i64, i64), color: [u8; 3]) {
    for dy in -1..=1 {
        for dx in -1..=1 {
            canvas.set(x + dx, y + dy, color);
        }
    }
}

fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: i + 2,
                    msg: format!("not a number: {v:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Coverage against step, axes from zero, white background.
fn coverage_plot(curve: &[(f64, f64)]) -> Canvas {
    let (w, h, m) = (400usize, 300usize, 20i64);
    let mut c = Canvas::new(w, h, [255; 3]);
    let (x0, y0) = (m, h as i64 - m);
    let (x1, y1) = (w as i64 - m, m);
    c.line((x0, y0), (x1, y0), NODE_COLOR);
    c.line((x0, y0), (x0, y1), NODE_COLOR);
    let max_s = curve.iter().map(|p| p.0).fold(1.0, f64::max);
    let max_a = curve.iter().map(|p| p.1).fold(1e-12, f64::max);
    let px = |(s, a): (f64, f64)| {
        (
            x0 + ((s / max_s) * (x1 - x0) as f64).round() as i64,
            y0 - ((a / max_a) * (y0 - y1) as f64).round() as i64,
        )
    };
    for win in curve.windows(2) {
        c.line(px(win[0]), px(win[1]), EST_COLOR);
    }
    if let [only] = curve {
        dot(&mut c, px(*only), EST_COLOR);
    }
    c
}

/// Writes the four figures into `dir` and returns their paths.
pub fn render(dir: &Path) -> Result<Vec<PathBuf>> {
    let resolution = read_resolution(dir)?;
    let map = Canvas::load(&require(dir, "map.ppm")?)?;
    let trajectory = read_csv(&require(dir, "trajectory.csv")?)?;
    let g2o = require(dir, "graph.g2o")?;
    let graph = PoseGraph::read_g2o(
        BufReader::new(File::open(&g2o)?),
        &g2o.display().to_string(),
    )?;
    let coverage = read_csv(&require(dir, "coverage.csv")?)?;

    let frame = Frame {
        resolution,
        height: map.height,
    };
    let base = upscale(&map);
    let paths: Vec<PathBuf> = FIGURES.iter().map(|f| dir.join(f)).collect();

    base.save(&paths[0])?;

    let mut traj = base.clone();
    let col = |i: usize| {
        trajectory
            .iter()
            .map(move |r| (r[i], r[i + 1]))
            .collect::<Vec<_>>()
    };
    polyline(&mut traj, &frame, &col(1), TRUE_COLOR);
    polyline(&mut traj, &frame, &col(4), EST_COLOR);
    traj.save(&paths[1])?;

    let mut fig = base;
    for e in &graph.edges {
        let (a, b) = (graph.nodes[e.tail], graph.nodes[e.head]);
        let color = match e.kind {
            EdgeKind::Odometry => ODOM_COLOR,
            EdgeKind::Loop => LOOP_COLOR,
        };
        fig.line(frame.pixel(a.x, a.y), frame.pixel(b.x, b.y), color);
    }
    for n in &graph.nodes {
        dot(&mut fig, frame.pixel(n.x, n.y), NODE_COLOR);
    }
    fig.save(&paths[2])?;

    let curve: Vec<(f64, f64)> = coverage.iter().map(|r| (r[0], r[1])).collect();
    coverage_plot(&curve).save(&paths[3])?;
    Ok(paths)
}

fn read_resolution(dir: &Path) -> Result<f64> {
    let p = require(dir, "resolution.txt")?;
    let text = std::fs::read_to_string(&p)?;
    match text.trim().parse::<f64>() {
        Ok(r) if r > 0.0 && r.is_finite() => Ok(r),
        _ => Err(Error::Parse {
            path: p.display().to_string(),
            line: 1,
            msg: format!("bad resolution {:?}", text.trim()),
        }),
    }
}
