//! Experiment drivers: the rendezvous loop and the numerical comparison.
//! Double precision only.

mod config;
mod experiment;
mod metrics;
mod rendezvous;

pub use config::{default_waypoints, ConfigError, ExperimentConfig, Mode, MotionNoise, Strategy};
pub use experiment::{
    numerical_experiment, run_map, scenario, summarize, MapFailure, MapOutcome, NumevalResult, NumevalSummary,
    Scenario, StrategyOutcome, StrategySummary, ROVER_MARGIN,
};
pub use metrics::{median, ErrorStats};
pub use rendezvous::{
    course_world, kalman_update, plan_view, run_rendezvous_loop, run_rendezvous_loop_in, simulate_measurement,
    MeasurementStatus, RunSummary, TrajectoryLog, ViewReport, WaypointRecord,
};

use thiserror::Error;

use crate::constraints::InfeasibleReason;
use crate::lupp::LuppError;
use crate::sdsmm::SdsmmError;
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("world: {0}")]
    World(#[from] WorldError),
    #[error("uncertainty prediction: {0}")]
    Lupp(#[from] LuppError),
    #[error("measurement model: {0}")]
    Sdsmm(#[from] SdsmmError),
    #[error("search: {0}")]
    Search(String),
    #[error("measurement geometry infeasible: {0:?}")]
    InfeasibleMeasurement(InfeasibleReason),
}
