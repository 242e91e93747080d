use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use semslam::runner::batch::batch_and_write;
use semslam::runner::config::KEYS;
use semslam::runner::render::render;
use semslam::runner::{run_and_write, RunConfig, RunStatus};
use semslam::utility::Method;
use semslam::Error;

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn with_params(cmd: Command) -> Command {
    let defaults = RunConfig::default();
    let mut cmd = cmd
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("Read `key = value` settings; flags override them"),
        )
        .arg(
            Arg::new("dump-config")
                .long("dump-config")
                .action(ArgAction::SetTrue)
                .help("Print the resolved configuration and exit"),
        );
    for key in KEYS {
        let default = defaults.get(key).unwrap_or_default();
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag(key))
                .value_name("VALUE")
                .allow_negative_numbers(true)
                .help(format!("[default: {default}]")),
        );
    }
    cmd
}

fn cli() -> Command {
    Command::new("semslam")
        .about("Simulated active metric-semantic SLAM exploration")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_params(
            Command::new("run").about("Run one exploration"),
        ))
        .subcommand(with_params(
            Command::new("batch")
                .about("Run seeds x methods and aggregate per method")
                .arg(
                    Arg::new("seeds")
                        .long("seeds")
                        .value_name("LIST")
                        .default_value("0-9")
                        .help("Comma-separated seeds or inclusive ranges, e.g. 0-9,20"),
                )
                .arg(
                    Arg::new("methods")
                        .long("methods")
                        .value_name("LIST")
                        .default_value("full,mi-only,nearest-frontier"),
                ),
        ))
        .subcommand(
            Command::new("render")
                .about("Render figures from a run directory")
                .arg(Arg::new("dir").required(true).value_name("RUN_DIR")),
        )
}

fn resolve(m: &ArgMatches) -> semslam::Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(p) => RunConfig::load(Path::new(p))?,
        None => RunConfig::default(),
    };
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_seeds(text: &str) -> semslam::Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list '{text}'"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) =
                    (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(seeds)
}

fn parse_methods(text: &str) -> semslam::Result<Vec<Method>> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}

enum Outcome {
    Ok,
    RunFailed,
}

fn dispatch(m: &ArgMatches) -> semslam::Result<Outcome> {
    match m.subcommand() {
        Some(("run", sub)) => {
            let cfg = resolve(sub)?;
            if sub.get_flag("dump-config") {
                print!("{}", cfg.to_text());
                return Ok(Outcome::Ok);
            }
            let res = run_and_write(&cfg)?;
            let s = &res.summary;
            println!(
                "{} seed {} on {}: {} after {} steps, coverage {:.1}%, {} loop closures -> {}",
                s.method,
                s.seed,
                s.world,
                s.status,
                s.steps,
                100.0 * s.coverage_fraction,
                s.loop_closures,
                cfg.out
            );
            Ok(match res.status {
                RunStatus::Failed => Outcome::RunFailed,
                _ => Outcome::Ok,
            })
        }
        Some(("batch", sub)) => {
            let cfg = resolve(sub)?;
            if sub.get_flag("dump-config") {
                print!("{}", cfg.to_text());
                return Ok(Outcome::Ok);
            }
            let seeds = parse_seeds(sub.get_one::<String>("seeds").expect("defaulted"))?;
            let methods = parse_methods(sub.get_one::<String>("methods").expect("defaulted"))?;
            let res = batch_and_write(&cfg, &seeds, &methods)?;
            for a in &res.aggregates {
                let med = |s: Option<semslam::runner::batch::Spread>| {
                    s.map(|s| format!("{:.4}", s.median))
                        .unwrap_or_else(|| "-".into())
                };
                println!(
                    "{:<17} runs {:>3} failed {:>3}  ate {}  map_error {}  mean_iou {}  steps_to_90 {}",
                    a.method,
                    a.runs,
                    a.failed,
                    med(a.ate),
                    med(a.map_error),
                    med(a.mean_iou),
                    med(a.steps_to_90)
                );
            }
            Ok(Outcome::Ok)
        }
        Some(("render", sub)) => {
            let dir = PathBuf::from(sub.get_one::<String>("dir").expect("required"));
            for p in render(&dir)? {
                println!("{}", p.display());
            }
            Ok(Outcome::Ok)
        }
        _ => unreachable!("subcommand_required"),
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(&matches) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::RunFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
