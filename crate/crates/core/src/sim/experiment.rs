//! Numerical experiment: random maps, random rover poses and priors, every
//! strategy on the same scenario.

use nalgebra::{DMatrix, Vector2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Strategy};
use super::metrics::median;
use super::rendezvous::{plan_view, stream_rng, STREAM_PLANNER, STREAM_SCENARIO};
use super::SimError;
use crate::geometry::{Pose2, SphericalOffset};
use crate::lupp::{Belief, Lupp};
use crate::world::{random_map, WorldModel};

/// Rover position is drawn this far inside the workspace edges.
pub const ROVER_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub world: WorldModel<f64>,
    pub belief: Belief<f64>,
}

/// Map, rover pose and prior `AᵀA + εI` for one seed.
pub fn scenario(cfg: &ExperimentConfig, seed: u64) -> Result<Scenario, SimError> {
    let mut rng = stream_rng(seed, STREAM_SCENARIO);
    let ws = &cfg.map.workspace;
    let margin_x = ROVER_MARGIN.min(0.5 * (ws.xmax - ws.xmin));
    let margin_y = ROVER_MARGIN.min(0.5 * (ws.ymax - ws.ymin));
    let x = rng.random_range(ws.xmin + margin_x..=ws.xmax - margin_x);
    let y = rng.random_range(ws.ymin + margin_y..=ws.ymax - margin_y);
    let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let n = cfg.belief_mode.dim();
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let prior = a.transpose() * &a + DMatrix::identity(n, n) * cfg.prior_regularization;

    let world = random_map(seed, &cfg.map, &[Vector2::new(x, y)])?.with_glare_exponent(cfg.glare_exponent);
    Ok(Scenario {
        seed,
        world,
        belief: Belief::new(Pose2::new(x, y, theta), prior)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    /// `None` when no feasible pose was found.
    pub best_cost: Option<f64>,
    pub best_point: SphericalOffset<f64>,
    pub evaluations: usize,
    pub feasible_evaluations: usize,
    pub wall_time_s: f64,
}

impl StrategyOutcome {
    pub fn cost(&self) -> f64 {
        self.best_cost.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapOutcome {
    pub seed: u64,
    pub rover: Pose2<f64>,
    pub prior: Vec<f64>,
    pub sun_direction: [f64; 3],
    pub outcomes: Vec<StrategyOutcome>,
}

impl MapOutcome {
    pub fn get(&self, s: Strategy) -> Option<&StrategyOutcome> {
        self.outcomes.iter().find(|o| o.strategy == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFailure {
    pub seed: u64,
    pub error: String,
}

/// Runs every strategy on one scenario. Each strategy gets its own seed
/// drawn from the map seed, so adding a strategy does not change the others.
pub fn run_map(cfg: &ExperimentConfig, seed: u64, strategies: &[Strategy]) -> Result<MapOutcome, SimError> {
    let sc = scenario(cfg, seed)?;
    let lupp = Lupp::new(&sc.world, &cfg.noise_model, &cfg.camera, &cfg.constraints);
    let mut seeds = stream_rng(seed, STREAM_PLANNER);
    let strategy_seeds: Vec<u64> = Strategy::ALL.iter().map(|_| seeds.random()).collect();
    let mut outcomes = Vec::with_capacity(strategies.len());
    for &s in strategies {
        let idx = Strategy::ALL.iter().position(|x| *x == s).expect("known strategy");
        let report = plan_view(&lupp, &sc.belief, s, cfg, strategy_seeds[idx])?;
        outcomes.push(StrategyOutcome {
            strategy: s,
            best_cost: report.found_feasible.then_some(report.best.cost).filter(|c| c.is_finite()),
            best_point: report.best_point,
            evaluations: report.evaluations,
            feasible_evaluations: report.feasible_evaluations,
            wall_time_s: if cfg.record_timing { report.wall_time } else { 0.0 },
        });
    }
    let sun = sc.world.sun_direction;
    Ok(MapOutcome {
        seed,
        rover: sc.belief.mean,
        prior: sc.belief.covariance.iter().copied().collect(),
        sun_direction: [sun.x, sun.y, sun.z],
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumevalResult {
    pub strategies: Vec<Strategy>,
    pub maps: Vec<MapOutcome>,
    /// Maps whose scenario could not be built or solved; excluded above.
    pub failures: Vec<MapFailure>,
}

/// Every configured seed, maps in parallel, results in seed order.
pub fn numerical_experiment(cfg: &ExperimentConfig, strategies: &[Strategy]) -> Result<NumevalResult, SimError> {
    if strategies.is_empty() {
        return Err(SimError::Search("no strategies requested".into()));
    }
    let runs: Vec<(u64, Result<MapOutcome, SimError>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| (seed, run_map(cfg, seed, strategies)))
        .collect();
    let mut maps = Vec::new();
    let mut failures = Vec::new();
    for (seed, run) in runs {
        match run {
            Ok(m) => maps.push(m),
            Err(e) => failures.push(MapFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(NumevalResult {
        strategies: strategies.to_vec(),
        maps,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub maps: usize,
    pub infeasible_maps: usize,
    /// Over all maps; `None` stands for infinite cost.
    pub cost_min: Option<f64>,
    pub cost_median: Option<f64>,
    pub cost_max: Option<f64>,
    pub evaluations_median: f64,
    pub evaluations_total: usize,
    pub wall_time_median_s: f64,
    pub wall_time_max_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumevalSummary {
    pub n_maps: usize,
    pub failed_maps: Vec<MapFailure>,
    pub strategies: Vec<StrategySummary>,
    pub maps: Vec<MapOutcome>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn summarize(result: &NumevalResult) -> NumevalSummary {
    let strategies = result
        .strategies
        .iter()
        .map(|&s| {
            let rows: Vec<&StrategyOutcome> = result.maps.iter().filter_map(|m| m.get(s)).collect();
            let costs: Vec<f64> = rows.iter().map(|o| o.cost()).collect();
            let evals: Vec<f64> = rows.iter().map(|o| o.evaluations as f64).collect();
            let times: Vec<f64> = rows.iter().map(|o| o.wall_time_s).collect();
            StrategySummary {
                strategy: s,
                maps: rows.len(),
                infeasible_maps: rows.iter().filter(|o| o.best_cost.is_none()).count(),
                cost_min: finite(costs.iter().copied().fold(f64::INFINITY, f64::min)),
                cost_median: median(&costs).and_then(finite),
                cost_max: finite(costs.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                evaluations_median: median(&evals).unwrap_or(0.0),
                evaluations_total: rows.iter().map(|o| o.evaluations).sum(),
                wall_time_median_s: median(&times).unwrap_or(0.0),
                wall_time_max_s: times.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    NumevalSummary {
        n_maps: result.maps.len() + result.failures.len(),
        failed_maps: result.failures.clone(),
        strategies,
        maps: result.maps.clone(),
    }
}
