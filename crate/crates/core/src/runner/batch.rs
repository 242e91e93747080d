//! Seeded batches over methods, with per-method aggregates.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{write_summary, SummaryRow};
use crate::simworld::GroundTruthWorld;
use crate::utility::Method;

use super::{run_in, world_name, RunConfig, RunStatus};

/// Median and interquartile range of the defined values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub median: f64,
    pub iqr: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn spread(values: impl IntoIterator<Item = f64>) -> Option<Spread> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Spread {
        median: quantile(&v, 0.5),
        iqr: quantile(&v, 0.75) - quantile(&v, 0.25),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub world: String,
    pub runs: usize,
    /// Collisions and runs that errored; excluded from every spread below.
    pub failed: usize,
    pub ate: Option<Spread>,
    pub map_error: Option<Spread>,
    pub mean_iou: Option<Spread>,
    pub coverage_fraction: Option<Spread>,
    /// Runs that never reached the coverage target count as the step budget.
    pub steps_to_90: Option<Spread>,
    pub loop_closures: Option<Spread>,
}

pub const AGGREGATE_METRICS: [&str; 6] = [
    "ate",
    "map_error",
    "mean_iou",
    "coverage_fraction",
    "steps_to_90",
    "loop_closures",
];

impl AggregateRow {
    pub fn header() -> Vec<String> {
        let mut h = vec![
            "method".to_string(),
            "world".into(),
            "runs".into(),
            "failed".into(),
        ];
        for m in AGGREGATE_METRICS {
            h.push(format!("{m}_median"));
            h.push(format!("{m}_iqr"));
        }
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.method.clone(),
            self.world.clone(),
            self.runs.to_string(),
            self.failed.to_string(),
        ];
        for s in [
            self.ate,
            self.map_error,
            self.mean_iou,
            self.coverage_fraction,
            self.steps_to_90,
            self.loop_closures,
        ] {
            match s {
                Some(s) => {
                    r.push(s.median.to_string());
                    r.push(s.iqr.to_string());
                }
                None => r.extend([String::new(), String::new()]),
            }
        }
        r
    }
}

fn is_failed(row: &SummaryRow) -> bool {
    row.status == RunStatus::Failed.as_str() || row.status == "error"
}

/// Aggregates the rows of one method; `budget` stands in for unreached coverage.
pub fn aggregate(method: &str, rows: &[SummaryRow], budget: usize) -> AggregateRow {
    let ok: Vec<&SummaryRow> = rows
        .iter()
        .filter(|r| r.method == method && !is_failed(r))
        .collect();
    let all = rows.iter().filter(|r| r.method == method).count();
    AggregateRow {
        method: method.to_string(),
        world: rows.first().map(|r| r.world.clone()).unwrap_or_default(),
        runs: all,
        failed: all - ok.len(),
        ate: spread(ok.iter().filter_map(|r| r.ate)),
        map_error: spread(ok.iter().filter_map(|r| r.map_error)),
        mean_iou: spread(ok.iter().filter_map(|r| r.mean_iou)),
        coverage_fraction: spread(ok.iter().map(|r| r.coverage_fraction)),
        steps_to_90: spread(ok.iter().map(|r| r.steps_to_90.unwrap_or(budget) as f64)),
        loop_closures: spread(ok.iter().map(|r| r.loop_closures as f64)),
    }
}

pub struct BatchResult {
    pub rows: Vec<SummaryRow>,
    pub aggregates: Vec<AggregateRow>,
    pub num_classes: usize,
}

fn error_row(cfg: &RunConfig, num_classes: usize) -> SummaryRow {
    SummaryRow {
        seed: cfg.seed,
        method: cfg.method.to_string(),
        world: world_name(&cfg.world),
        status: "error".into(),
        steps: 0,
        ate: None,
        map_error: None,
        mean_iou: None,
        coverage_m2: 0.0,
        coverage_fraction: 0.0,
        steps_to_90: None,
        loop_closures: 0,
        iou: vec![None; num_classes],
    }
}

/// Runs every (method, seed) pair on the configured world.
///
/// Rows come back in method-major, seed-minor order regardless of scheduling.
/// With `write_runs`, each run's artifacts go to `out/<method>_seed<seed>/`.
pub fn batch(
    base: &RunConfig,
    seeds: &[u64],
    methods: &[Method],
    write_runs: bool,
) -> Result<BatchResult> {
    if seeds.is_empty() {
        return Err(Error::Config("batch needs at least one seed".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("batch needs at least one method".into()));
    }
    base.validate()?;
    let world = GroundTruthWorld::load(Path::new(&base.world))?;
    let num_classes = world.num_classes();
    let jobs: Vec<RunConfig> = methods
        .iter()
        .flat_map(|m| {
            seeds.iter().map(move |s| RunConfig {
                method: *m,
                seed: *s,
                out: Path::new(&base.out)
                    .join(format!("{m}_seed{s}"))
                    .to_string_lossy()
                    .into_owned(),
                ..base.clone()
            })
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|cfg| -> Result<SummaryRow> {
            match run_in(cfg, world.clone()) {
                Ok(res) => {
                    if write_runs {
                        res.explorer
                            .write_artifacts(Path::new(&cfg.out), &res.summary)?;
                    }
                    Ok(res.summary)
                }
                Err(Error::Io(e)) => Err(Error::Io(e)),
                Err(_) => Ok(error_row(cfg, num_classes)),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregates = methods
        .iter()
        .map(|m| aggregate(m.name(), &rows, base.steps))
        .collect();
    Ok(BatchResult {
        rows,
        aggregates,
        num_classes,
    })
}

impl BatchResult {
    /// Writes `batch_summary.csv` and `aggregate.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_summary(
            BufWriter::new(File::create(dir.join("batch_summary.csv"))?),
            &self.rows,
            self.num_classes,
        )?;
        let mut w =
            csv::Writer::from_writer(BufWriter::new(File::create(dir.join("aggregate.csv"))?));
        w.write_record(AggregateRow::header())?;
        for a in &self.aggregates {
            w.write_record(a.record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn aggregate_for(&self, method: Method) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.method == method.name())
    }
}

/// Convenience used by the CLI: run, then write the tables.
pub fn batch_and_write(base: &RunConfig, seeds: &[u64], methods: &[Method]) -> Result<BatchResult> {
    let result = batch(base, seeds, methods, true)?;
    result.write(Path::new(&base.out))?;
    let mut f = File::create(Path::new(&base.out).join("config.txt"))?;
    f.write_all(base.to_text().as_bytes())?;
    Ok(result)
}
