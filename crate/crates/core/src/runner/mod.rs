//! Closed-loop exploration: sense, integrate, plan, score, select, follow.

pub mod batch;
pub mod config;
pub mod raster;
pub mod render;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::infotheory::path_mutual_information;
use crate::metrics::{
    ate, coverage_curve, map_error, reachable_area, reachable_cells, semantic_iou,
    steps_to_coverage, write_coverage, write_summary, write_trajectory, RunLog, StepRecord,
    SummaryRow,
};
use crate::planner::{
    astar_on, classify_cells, detect_frontiers, Blacklist, GoalOutcome, LabelMap,
};
use crate::pose::Pose2;
use crate::posegraph::PoseGraph;
use crate::semgrid::{Beam, SemanticGrid};
use crate::simworld::{
    check_motion, detect_loop_closure, rng_stream, simulate_odometry, simulate_scan, step_towards,
    GroundTruthWorld, Stream,
};
use crate::utility::{hallucinate_graph, select_action, HallucinationParams, PathCandidate};

pub use config::RunConfig;

/// A scan stored relative to the pose-graph node it was taken after, so the
/// map can be rebuilt when node estimates change.
#[derive(Debug, Clone, PartialEq)]
struct AnchoredScan {
    node: usize,
    offset: Pose2,
    beams: Vec<Beam>,
}

#[derive(Debug, Clone, PartialEq)]
struct ActivePlan {
    frontier_id: usize,
    goal: (f64, f64),
    waypoints: Vec<(f64, f64)>,
    next: usize,
}

/// One row per candidate and replan.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRow {
    pub replan: usize,
    pub frontier_id: usize,
    pub mi: f64,
    pub cost: f64,
    pub d_opt: f64,
    pub utility: f64,
    pub chosen_id: usize,
    pub predicted_loops: usize,
}

pub const DECISION_COLUMNS: [&str; 8] = [
    "replan",
    "frontier_id",
    "mi",
    "cost",
    "d_opt",
    "utility",
    "chosen_id",
    "predicted_loops",
];

pub fn write_decisions<W: Write>(out: W, rows: &[DecisionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DECISION_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.replan.to_string(),
            r.frontier_id.to_string(),
            r.mi.to_string(),
            r.cost.to_string(),
            r.d_opt.to_string(),
            r.utility.to_string(),
            r.chosen_id.to_string(),
            r.predicted_loops.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// No reachable frontier left.
    Complete,
    /// Step budget exhausted.
    Budget,
    /// Aborted by a collision of the true robot.
    Failed,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::Budget => "budget",
            RunStatus::Failed => "failed",
        }
    }
}

/// State of one simulated exploration run.
pub struct Explorer {
    pub cfg: RunConfig,
    pub world: GroundTruthWorld,
    pub grid: SemanticGrid,
    pub graph: PoseGraph,
    /// True pose at every graph node.
    pub node_truth: Vec<Pose2>,
    pub true_pose: Pose2,
    pub est_pose: Pose2,
    pub blacklist: Blacklist,
    pub decisions: Vec<DecisionRow>,
    pub log: RunLog,
    pub loop_closures: usize,
    pub step: usize,
    pub replans: usize,
    odo_since_node: Pose2,
    steps_since_node: usize,
    dist_since_node: f64,
    scans: Vec<AnchoredScan>,
    explored: Vec<bool>,
    explored_count: usize,
    reached_goals: Vec<(f64, f64)>,
    plan: Option<ActivePlan>,
    steps_since_replan: usize,
    rng_sensor: ChaCha8Rng,
    rng_odom: ChaCha8Rng,
    rng_loop: ChaCha8Rng,
}

impl Explorer {
    pub fn new(cfg: RunConfig, world: GroundTruthWorld) -> Result<Self> {
        cfg.validate()?;
        cfg.mi_config().validate(world.resolution())?;
        let g = world.geometry;
        let grid = SemanticGrid::uniform(g.width, g.height, g.resolution, world.num_classes())?;
        let mut graph = PoseGraph::new();
        graph.add_node(world.start);
        let blacklist = Blacklist::new(
            cfg.blacklist_radius_cells * g.resolution,
            (cfg.blacklist_expiry > 0).then_some(cfg.blacklist_expiry),
        );
        Ok(Self {
            grid,
            graph,
            node_truth: vec![world.start],
            true_pose: world.start,
            est_pose: world.start,
            blacklist,
            decisions: Vec::new(),
            log: RunLog::new(g.resolution),
            loop_closures: 0,
            step: 0,
            replans: 0,
            odo_since_node: Pose2::identity(),
            steps_since_node: 0,
            dist_since_node: 0.0,
            scans: Vec::new(),
            explored: vec![false; g.num_cells()],
            explored_count: 0,
            reached_goals: Vec::new(),
            plan: None,
            steps_since_replan: 0,
            rng_sensor: rng_stream(cfg.seed, Stream::Sensor),
            rng_odom: rng_stream(cfg.seed, Stream::Odometry),
            rng_loop: rng_stream(cfg.seed, Stream::Loop),
            cfg,
            world,
        })
    }

    pub fn labels(&self) -> LabelMap {
        classify_cells(&self.grid, &self.cfg.thresholds())
    }

    fn last_node(&self) -> usize {
        self.graph.num_nodes() - 1
    }

    /// Scan at the true pose, integrated at the estimated pose.
    pub fn sense(&mut self) -> Result<()> {
        let scan = simulate_scan(
            &self.world,
            &self.true_pose,
            &self.cfg.sensor_model(),
            &mut self.rng_sensor,
        )?;
        self.grid
            .integrate_scan(&self.est_pose, &scan, &self.cfg.inverse_model())?;
        let node = self.last_node();
        self.scans.push(AnchoredScan {
            node,
            offset: self.graph.nodes[node].between(&self.est_pose),
            beams: scan,
        });
        self.update_explored();
        Ok(())
    }

    fn update_explored(&mut self) {
        let labels = self.labels();
        for (c, l) in labels.labels.iter().enumerate() {
            if *l != crate::planner::CellLabel::Unknown && !self.explored[c] {
                self.explored[c] = true;
                self.explored_count += 1;
            }
        }
    }

    fn rebuild_map(&mut self) -> Result<()> {
        let g = self.world.geometry;
        let mut grid =
            SemanticGrid::uniform(g.width, g.height, g.resolution, self.world.num_classes())?;
        let model = self.cfg.inverse_model();
        for s in &self.scans {
            let pose = self.graph.nodes[s.node].compose(&s.offset);
            grid.integrate_scan(&pose, &s.beams, &model)?;
        }
        self.grid = grid;
        Ok(())
    }

    /// Predicted edges: odometry over one node spacing, loops weighted by the loop boost.
    pub fn hallucination_params(&self) -> HallucinationParams {
        let odom_info = self
            .cfg
            .odometry_information(self.cfg.node_spacing / self.cfg.speed);
        HallucinationParams {
            node_spacing: self.cfg.node_spacing,
            loop_radius: self.cfg.loop_radius,
            min_separation: self.cfg.loop_min_separation,
            odom_info,
            loop_info: odom_info * self.cfg.loop_boost,
        }
    }

    /// Scores every reachable, non-blacklisted frontier from the current estimate.
    ///
    /// Unreachable goals and goals that were reached before without clearing
    /// their frontier are blacklisted on the way.
    pub fn evaluate_candidates(&mut self) -> Result<Vec<PathCandidate>> {
        let labels = self.labels();
        let frontiers = detect_frontiers(&labels, self.cfg.min_frontier_size, self.cfg.clearance);
        let g = labels.geometry;
        let Some(start) = g.cell_of(self.est_pose.x, self.est_pose.y) else {
            return Err(Error::Domain("estimated pose left the map".into()));
        };
        let mut traversable = labels.traversable(self.cfg.clearance);
        // Drift can leave the estimate inside the inflated band; let it back out.
        let (sx, sy) = g.coords(start);
        let r = self.cfg.clearance as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (sx as i64 + dx, sy as i64 + dy);
                if x >= 0 && y >= 0 && (x as usize) < g.width && (y as usize) < g.height {
                    let c = g.index(x as usize, y as usize);
                    if labels.get(c) == crate::planner::CellLabel::Free {
                        traversable[c] = true;
                    }
                }
            }
        }
        let params = self.hallucination_params();
        let mi_cfg = self.cfg.mi_config();
        let cost_eps = g.resolution / 2.0;
        let mut out = Vec::new();
        for (id, f) in frontiers.iter().enumerate() {
            let goal = g.cell_center(f.goal);
            if self.blacklist.contains(goal, self.replans) {
                continue;
            }
            if self
                .reached_goals
                .iter()
                .any(|r| (r.0 - goal.0).hypot(r.1 - goal.1) <= self.blacklist.radius + 1e-9)
            {
                self.blacklist
                    .update(goal, GoalOutcome::Failed, self.replans);
                continue;
            }
            let Some(path) = astar_on(&g, &mut traversable, start, f.goal) else {
                self.blacklist
                    .update(goal, GoalOutcome::Unreachable, self.replans);
                continue;
            };
            let (hallucinated, predicted_loops) = hallucinate_graph(
                &self.graph,
                &self.est_pose,
                &path.waypoints,
                &labels,
                &params,
            )?;
            let mut poses: Vec<Pose2> = hallucinated.nodes[self.graph.num_nodes()..].to_vec();
            let last = poses.last().copied().unwrap_or(self.est_pose);
            if (last.x - goal.0).hypot(last.y - goal.1) > 1e-9 {
                poses.push(Pose2::new(goal.0, goal.1, last.theta));
            }
            let mi = path_mutual_information(&self.grid, &poses, &mi_cfg)?.total;
            let mut cand = PathCandidate {
                frontier_id: id,
                goal,
                cost: path.length,
                path,
                hallucinated,
                predicted_loops,
                mi,
                d_opt: 0.0,
                utility: 0.0,
            };
            cand.score(
                self.cfg.method,
                self.cfg.norm,
                self.cfg.loop_boost,
                cost_eps,
            );
            out.push(cand);
        }
        Ok(out)
    }

    /// Picks the next goal; `false` when nothing is left to explore.
    pub fn replan(&mut self) -> Result<bool> {
        let candidates = self.evaluate_candidates()?;
        let chosen = select_action(&candidates);
        let replan = self.replans;
        self.replans += 1;
        self.steps_since_replan = 0;
        let Some(ci) = chosen else {
            self.plan = None;
            return Ok(false);
        };
        let chosen_id = candidates[ci].frontier_id;
        for c in &candidates {
            self.decisions.push(DecisionRow {
                replan,
                frontier_id: c.frontier_id,
                mi: c.mi,
                cost: c.cost,
                d_opt: c.d_opt,
                utility: c.utility,
                chosen_id,
                predicted_loops: c.predicted_loops,
            });
        }
        let c = &candidates[ci];
        self.plan = Some(ActivePlan {
            frontier_id: chosen_id,
            goal: c.goal,
            waypoints: c.path.waypoints.clone(),
            next: 0,
        });
        Ok(true)
    }

    /// One motion step along the active plan, commanded in the estimate frame.
    fn advance(&mut self) -> Result<()> {
        let Some(plan) = self.plan.as_mut() else {
            return Ok(());
        };
        let last = plan.next + 1 == plan.waypoints.len();
        let tol = if last {
            self.world.resolution() / 2.0
        } else {
            1e-9
        };
        let out = step_towards(
            &self.est_pose,
            plan.waypoints[plan.next],
            self.cfg.speed,
            tol,
        );
        let cmd = self.est_pose.between(&out.pose);
        if out.arrived {
            if last {
                let goal = plan.goal;
                self.plan = None;
                self.reached_goals.push(goal);
            } else {
                plan.next += 1;
            }
        }
        let travel = cmd.x.hypot(cmd.y);
        if travel == 0.0 && cmd.theta == 0.0 {
            return Ok(());
        }
        let true_next = self.true_pose.compose(&cmd);
        check_motion(&self.world, &self.true_pose, &true_next)?;
        let measured = simulate_odometry(&cmd, &self.cfg.odometry_noise(), &mut self.rng_odom);
        self.true_pose = true_next;
        self.est_pose = self.est_pose.compose(&measured);
        self.odo_since_node = self.odo_since_node.compose(&measured);
        self.steps_since_node += 1;
        self.dist_since_node += travel;
        Ok(())
    }

    /// Adds a keyframe once enough distance has been travelled, then looks for a loop.
    fn maybe_keyframe(&mut self) -> Result<()> {
        if self.dist_since_node + 1e-9 < self.cfg.node_spacing {
            return Ok(());
        }
        let prev = self.last_node();
        let id = self.graph.add_node(self.est_pose);
        let info = self.cfg.odometry_information(self.steps_since_node as f64);
        self.graph
            .add_odometry_edge(prev, id, self.odo_since_node, info)?;
        self.node_truth.push(self.true_pose);
        self.odo_since_node = Pose2::identity();
        self.steps_since_node = 0;
        self.dist_since_node = 0.0;

        let closure = detect_loop_closure(
            &self.node_truth[..id],
            &self.true_pose,
            &self.world,
            self.cfg.loop_radius,
            self.cfg.loop_min_separation,
            &self.cfg.loop_noise(),
            &mut self.rng_loop,
        );
        if let Some(lc) = closure {
            self.graph
                .add_loop_edge(lc.node, id, lc.measurement, self.cfg.loop_information())?;
            let (optimized, _) = self
                .graph
                .optimize(self.cfg.gn_max_iters, self.cfg.gn_tol)?;
            self.graph = optimized;
            self.loop_closures += 1;
            self.est_pose = self.graph.nodes[id];
            self.rebuild_map()?;
        }
        Ok(())
    }

    fn record(&mut self) {
        self.log.push(StepRecord {
            step: self.step,
            true_pose: self.true_pose,
            est_pose: self.est_pose,
            explored_cells: self.explored_count,
        });
    }

    /// Runs until exploration completes, the budget is spent or the robot collides.
    pub fn run(&mut self) -> Result<RunStatus> {
        while self.step < self.cfg.steps {
            self.sense()?;
            self.record();
            let needs_plan =
                self.plan.is_none() || self.steps_since_replan >= self.cfg.replan_period;
            if needs_plan && !self.replan()? {
                return Ok(RunStatus::Complete);
            }
            match self.advance() {
                Err(Error::Collision { .. }) => return Ok(RunStatus::Failed),
                other => other?,
            }
            self.maybe_keyframe()?;
            self.steps_since_replan += 1;
            self.step += 1;
        }
        Ok(RunStatus::Budget)
    }

    pub fn summary(&self, status: RunStatus, world_name: &str) -> SummaryRow {
        let labels = self.labels();
        let (iou, mean_iou) = semantic_iou(&self.grid, &self.world);
        let curve = coverage_curve(&self.log);
        let reachable = reachable_area(&self.world);
        let coverage_m2 = curve.last().map(|c| c.1).unwrap_or(0.0);
        let mask = reachable_cells(&self.world);
        let seen = mask
            .iter()
            .zip(&self.explored)
            .filter(|(m, e)| **m && **e)
            .count();
        SummaryRow {
            seed: self.cfg.seed,
            method: self.cfg.method.to_string(),
            world: world_name.to_string(),
            status: status.as_str().to_string(),
            steps: self.step,
            ate: ate(&self.graph.nodes, &self.node_truth).ok(),
            map_error: map_error(&labels, &self.world),
            mean_iou,
            coverage_m2,
            coverage_fraction: seen as f64 / mask.iter().filter(|m| **m).count().max(1) as f64,
            steps_to_90: steps_to_coverage(&curve, self.cfg.coverage_target * reachable),
            loop_closures: self.loop_closures,
            iou,
        }
    }

    /// Writes every artifact of the run into `dir`.
    pub fn write_artifacts(&self, dir: &Path, summary: &SummaryRow) -> Result<()> {
        fs::create_dir_all(dir)?;
        let file = |name: &str| -> Result<BufWriter<File>> {
            Ok(BufWriter::new(File::create(dir.join(name))?))
        };
        fs::write(dir.join("config.txt"), self.cfg.to_text())?;
        fs::write(
            dir.join("resolution.txt"),
            format!("{}\n", self.world.resolution()),
        )?;
        write_summary(
            file("summary.csv")?,
            std::slice::from_ref(summary),
            self.world.num_classes(),
        )?;
        write_decisions(file("decisions.csv")?, &self.decisions)?;
        write_coverage(file("coverage.csv")?, &coverage_curve(&self.log))?;
        write_trajectory(file("trajectory.csv")?, &self.log)?;
        write_nodes(file("nodes.csv")?, &self.graph.nodes, &self.node_truth)?;
        let mut g2o = file("graph.g2o")?;
        self.graph.write_g2o(&mut g2o)?;
        g2o.flush()?;
        let mut dump = file("map.txt")?;
        self.grid.write_text_dump(&mut dump)?;
        dump.flush()?;
        self.grid.write_ppm(
            &dir.join("map.ppm"),
            &self.world.colors(),
            render::UNKNOWN_COLOR,
        )?;
        Ok(())
    }
}

/// Columns `node,est_x,est_y,est_theta,true_x,true_y,true_theta`.
pub fn write_nodes<W: Write>(out: W, est: &[Pose2], truth: &[Pose2]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "node",
        "est_x",
        "est_y",
        "est_theta",
        "true_x",
        "true_y",
        "true_theta",
    ])?;
    for (i, (e, t)) in est.iter().zip(truth).enumerate() {
        w.write_record([
            i.to_string(),
            e.x.to_string(),
            e.y.to_string(),
            e.theta.to_string(),
            t.x.to_string(),
            t.y.to_string(),
            t.theta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of [`run`].
pub struct RunResult {
    pub status: RunStatus,
    pub summary: SummaryRow,
    pub explorer: Explorer,
}

/// World name used in summaries: the file stem.
pub fn world_name(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

/// Loads the world, runs the exploration and returns the final state.
pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    let world = GroundTruthWorld::load(Path::new(&cfg.world))?;
    run_in(cfg, world)
}

pub fn run_in(cfg: &RunConfig, world: GroundTruthWorld) -> Result<RunResult> {
    let mut explorer = Explorer::new(cfg.clone(), world)?;
    let status = explorer.run()?;
    let summary = explorer.summary(status, &world_name(&cfg.world));
    Ok(RunResult {
        status,
        summary,
        explorer,
    })
}

/// Runs and writes artifacts plus a separate wall-time file into `cfg.out`.
pub fn run_and_write(cfg: &RunConfig) -> Result<RunResult> {
    let started = std::time::Instant::now();
    let result = run(cfg)?;
    let dir = Path::new(&cfg.out);
    result.explorer.write_artifacts(dir, &result.summary)?;
    fs::write(
        dir.join("timing.txt"),
        format!("wall_time_s = {}\n", started.elapsed().as_secs_f64()),
    )?;
    Ok(result)
}
