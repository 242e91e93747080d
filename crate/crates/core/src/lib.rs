//! Active metric-semantic SLAM at desk scale.
//!
//! A robot explores a labeled grid world. Candidate trajectories towards
//! frontiers are scored by the semantic mutual information they are expected
//! to collect and by the D-optimality of the pose graph they would produce,
//! the latter approximated through the weighted Laplacian spectrum of the
//! graph topology.

pub mod error;
pub mod infotheory;
pub mod metrics;
pub mod planner;
pub mod pose;
pub mod posegraph;
pub mod runner;
pub mod semgrid;
pub mod simworld;
pub mod spectral;
pub mod utility;

pub use error::{Error, Result};
pub use pose::Pose2;
