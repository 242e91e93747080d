//! Run configuration and its flat `key = value` text format.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::infotheory::SensorConfig;
use crate::planner::Thresholds;
use crate::posegraph::MatrixNorm;
use crate::semgrid::InverseSensorModel;
use crate::simworld::{GaussianNoise, SensorModel};
use crate::utility::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub world: String,
    pub method: Method,
    pub seed: u64,
    /// Step budget.
    pub steps: usize,
    pub out: String,

    pub norm: MatrixNorm,
    pub loop_boost: f64,
    pub node_spacing: f64,
    pub loop_radius: f64,
    pub loop_min_separation: usize,

    pub speed: f64,
    pub replan_period: usize,
    pub min_frontier_size: usize,
    pub clearance: usize,
    pub free_threshold: f64,
    pub occ_threshold: f64,
    pub blacklist_radius_cells: f64,
    /// Replans after which a blacklist entry expires; 0 keeps entries forever.
    pub blacklist_expiry: usize,

    pub sensor_beams: usize,
    pub sensor_fov_deg: f64,
    pub sensor_range: f64,
    pub sensor_range_sigma: f64,
    pub sensor_label_error: f64,

    pub odom_sigma_xy: f64,
    pub odom_sigma_theta_deg: f64,
    pub loop_sigma_xy: f64,
    pub loop_sigma_theta_deg: f64,

    pub mi_beams: usize,
    pub mi_range: f64,
    pub mi_range_step: f64,

    pub hit_increment: f64,
    pub miss_decrement: f64,
    pub hit_extension: f64,

    pub gn_max_iters: usize,
    pub gn_tol: f64,
    /// Fraction of the reachable area used for the time-to-coverage metric.
    pub coverage_target: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let inv = InverseSensorModel::default();
        Self {
            world: "maps/tworooms.txt".into(),
            method: Method::Full,
            seed: 0,
            steps: 1500,
            out: "out".into(),
            norm: MatrixNorm::Two,
            loop_boost: 2.0,
            node_spacing: 0.5,
            loop_radius: 1.0,
            loop_min_separation: 10,
            speed: 0.25,
            replan_period: 40,
            min_frontier_size: 3,
            clearance: 1,
            free_threshold: 0.6,
            occ_threshold: 0.5,
            blacklist_radius_cells: 2.0,
            blacklist_expiry: 0,
            sensor_beams: 72,
            sensor_fov_deg: 360.0,
            sensor_range: 3.0,
            sensor_range_sigma: 0.02,
            sensor_label_error: 0.1,
            odom_sigma_xy: 0.01,
            odom_sigma_theta_deg: 0.5,
            loop_sigma_xy: 0.02,
            loop_sigma_theta_deg: 0.5,
            mi_beams: 36,
            mi_range: 3.0,
            mi_range_step: 0.125,
            hit_increment: inv.hit_increment,
            miss_decrement: inv.miss_decrement,
            hit_extension: inv.hit_extension,
            gn_max_iters: 20,
            gn_tol: 1e-6,
            coverage_target: 0.9,
        }
    }
}

/// Every key accepted by [`RunConfig::set`], in file order.
pub const KEYS: &[&str] = &[
    "world",
    "method",
    "seed",
    "steps",
    "out",
    "norm",
    "loop_boost",
    "node_spacing",
    "loop_radius",
    "loop_min_separation",
    "speed",
    "replan_period",
    "min_frontier_size",
    "clearance",
    "free_threshold",
    "occ_threshold",
    "blacklist_radius_cells",
    "blacklist_expiry",
    "sensor_beams",
    "sensor_fov_deg",
    "sensor_range",
    "sensor_range_sigma",
    "sensor_label_error",
    "odom_sigma_xy",
    "odom_sigma_theta_deg",
    "loop_sigma_xy",
    "loop_sigma_theta_deg",
    "mi_beams",
    "mi_range",
    "mi_range_step",
    "hit_increment",
    "miss_decrement",
    "hit_extension",
    "gn_max_iters",
    "gn_tol",
    "coverage_target",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().copied()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "world" => self.world.clone(),
            "method" => self.method.to_string(),
            "seed" => self.seed.to_string(),
            "steps" => self.steps.to_string(),
            "out" => self.out.clone(),
            "norm" => self.norm.to_string(),
            "loop_boost" => self.loop_boost.to_string(),
            "node_spacing" => self.node_spacing.to_string(),
            "loop_radius" => self.loop_radius.to_string(),
            "loop_min_separation" => self.loop_min_separation.to_string(),
            "speed" => self.speed.to_string(),
            "replan_period" => self.replan_period.to_string(),
            "min_frontier_size" => self.min_frontier_size.to_string(),
            "clearance" => self.clearance.to_string(),
            "free_threshold" => self.free_threshold.to_string(),
            "occ_threshold" => self.occ_threshold.to_string(),
            "blacklist_radius_cells" => self.blacklist_radius_cells.to_string(),
            "blacklist_expiry" => self.blacklist_expiry.to_string(),
            "sensor_beams" => self.sensor_beams.to_string(),
            "sensor_fov_deg" => self.sensor_fov_deg.to_string(),
            "sensor_range" => self.sensor_range.to_string(),
            "sensor_range_sigma" => self.sensor_range_sigma.to_string(),
            "sensor_label_error" => self.sensor_label_error.to_string(),
            "odom_sigma_xy" => self.odom_sigma_xy.to_string(),
            "odom_sigma_theta_deg" => self.odom_sigma_theta_deg.to_string(),
            "loop_sigma_xy" => self.loop_sigma_xy.to_string(),
            "loop_sigma_theta_deg" => self.loop_sigma_theta_deg.to_string(),
            "mi_beams" => self.mi_beams.to_string(),
            "mi_range" => self.mi_range.to_string(),
            "mi_range_step" => self.mi_range_step.to_string(),
            "hit_increment" => self.hit_increment.to_string(),
            "miss_decrement" => self.miss_decrement.to_string(),
            "hit_extension" => self.hit_extension.to_string(),
            "gn_max_iters" => self.gn_max_iters.to_string(),
            "gn_tol" => self.gn_tol.to_string(),
            "coverage_target" => self.coverage_target.to_string(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "world" => self.world = v.to_string(),
            "method" => self.method = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "out" => self.out = v.to_string(),
            "norm" => self.norm = v.parse()?,
            "loop_boost" => self.loop_boost = parse(key, v)?,
            "node_spacing" => self.node_spacing = parse(key, v)?,
            "loop_radius" => self.loop_radius = parse(key, v)?,
            "loop_min_separation" => self.loop_min_separation = parse(key, v)?,
            "speed" => self.speed = parse(key, v)?,
            "replan_period" => self.replan_period = parse(key, v)?,
            "min_frontier_size" => self.min_frontier_size = parse(key, v)?,
            "clearance" => self.clearance = parse(key, v)?,
            "free_threshold" => self.free_threshold = parse(key, v)?,
            "occ_threshold" => self.occ_threshold = parse(key, v)?,
            "blacklist_radius_cells" => self.blacklist_radius_cells = parse(key, v)?,
            "blacklist_expiry" => self.blacklist_expiry = parse(key, v)?,
            "sensor_beams" => self.sensor_beams = parse(key, v)?,
            "sensor_fov_deg" => self.sensor_fov_deg = parse(key, v)?,
            "sensor_range" => self.sensor_range = parse(key, v)?,
            "sensor_range_sigma" => self.sensor_range_sigma = parse(key, v)?,
            "sensor_label_error" => self.sensor_label_error = parse(key, v)?,
            "odom_sigma_xy" => self.odom_sigma_xy = parse(key, v)?,
            "odom_sigma_theta_deg" => self.odom_sigma_theta_deg = parse(key, v)?,
            "loop_sigma_xy" => self.loop_sigma_xy = parse(key, v)?,
            "loop_sigma_theta_deg" => self.loop_sigma_theta_deg = parse(key, v)?,
            "mi_beams" => self.mi_beams = parse(key, v)?,
            "mi_range" => self.mi_range = parse(key, v)?,
            "mi_range_step" => self.mi_range_step = parse(key, v)?,
            "hit_increment" => self.hit_increment = parse(key, v)?,
            "miss_decrement" => self.miss_decrement = parse(key, v)?,
            "hit_extension" => self.hit_extension = parse(key, v)?,
            "gn_max_iters" => self.gn_max_iters = parse(key, v)?,
            "gn_tol" => self.gn_tol = parse(key, v)?,
            "coverage_target" => self.coverage_target = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// One `key = value` line per field, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::keys() {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("listed key"));
        }
        s
    }

    /// Applies `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("loop_boost", self.loop_boost),
            ("node_spacing", self.node_spacing),
            ("loop_radius", self.loop_radius),
            ("speed", self.speed),
            ("mi_range", self.mi_range),
            ("mi_range_step", self.mi_range_step),
            ("hit_increment", self.hit_increment),
            ("miss_decrement", self.miss_decrement),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("free_threshold", self.free_threshold),
            ("occ_threshold", self.occ_threshold),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.coverage_target) {
            return Err(Error::Config("coverage_target must lie in [0, 1]".into()));
        }
        if self.replan_period == 0 || self.mi_beams == 0 {
            return Err(Error::Config(
                "replan_period and mi_beams must be positive".into(),
            ));
        }
        for (name, v) in [
            ("odom_sigma_xy", self.odom_sigma_xy),
            ("odom_sigma_theta_deg", self.odom_sigma_theta_deg),
            ("loop_sigma_xy", self.loop_sigma_xy),
            ("loop_sigma_theta_deg", self.loop_sigma_theta_deg),
            ("hit_extension", self.hit_extension),
            ("blacklist_radius_cells", self.blacklist_radius_cells),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        self.sensor_model().validate()
    }

    pub fn sensor_model(&self) -> SensorModel {
        SensorModel {
            num_beams: self.sensor_beams,
            fov: self.sensor_fov_deg.to_radians(),
            max_range: self.sensor_range,
            range_sigma: self.sensor_range_sigma,
            label_error: self.sensor_label_error,
        }
    }

    pub fn inverse_model(&self) -> InverseSensorModel {
        InverseSensorModel {
            hit_increment: self.hit_increment,
            miss_decrement: self.miss_decrement,
            hit_extension: self.hit_extension,
        }
    }

    pub fn mi_config(&self) -> SensorConfig {
        SensorConfig {
            num_beams: self.mi_beams,
            fov: self.sensor_fov_deg.to_radians(),
            max_range: self.mi_range,
            range_discretization: self.mi_range_step,
            inverse_model: self.inverse_model(),
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            free: self.free_threshold,
            occupied: self.occ_threshold,
        }
    }

    /// Noise of a single motion step.
    pub fn odometry_noise(&self) -> GaussianNoise {
        GaussianNoise::diagonal(
            self.odom_sigma_xy,
            self.odom_sigma_xy,
            self.odom_sigma_theta_deg.to_radians(),
        )
    }

    pub fn loop_noise(&self) -> GaussianNoise {
        GaussianNoise::diagonal(
            self.loop_sigma_xy,
            self.loop_sigma_xy,
            self.loop_sigma_theta_deg.to_radians(),
        )
    }

    /// Information assigned to loop edges, real and predicted.
    pub fn loop_information(&self) -> Matrix3<f64> {
        information_or_default(&self.loop_noise().covariance)
    }

    /// Information of an odometry edge spanning `steps` motion steps.
    pub fn odometry_information(&self, steps: f64) -> Matrix3<f64> {
        information_or_default(&(self.odometry_noise().covariance * steps.max(1.0)))
    }
}

/// Inverse covariance, with a floor so noiseless models stay usable as weights.
fn information_or_default(cov: &Matrix3<f64>) -> Matrix3<f64> {
    let floored = cov + Matrix3::identity() * 1e-12;
    let inv = floored
        .try_inverse()
        .expect("floored covariance is invertible");
    (inv + inv.transpose()) * 0.5
}
