//! The rover–viewer rendezvous loop: the rover announces where it will be,
//! the viewer picks a pose, the rover drives, gets measured and updates.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Strategy};
use super::metrics::ErrorStats;
use super::SimError;
use crate::constraints::{feasible, ConstraintConfig, InfeasibleReason};
use crate::geometry::{normalize_angle, CameraParams, Pose2, Pose3, SphericalOffset};
use crate::lupp::{observation_matrix, posterior_covariance, propagate_belief, Belief, BeliefMode, CandidateResult, LuppError, Lupp};
use crate::optimize::{brute_force, center_view, differential_evolution, random_view, DeParams, SearchError, SearchReport};
use crate::scalar::Real;
use crate::sdsmm::{extract_features, predict_covariance, sample_error, NoiseModel};
use crate::world::{random_map, WorldModel};

/// RNG streams derived from one run seed.
pub(crate) const STREAM_NOISE: u64 = 1;
pub(crate) const STREAM_PLANNER: u64 = 2;
pub(crate) const STREAM_SCENARIO: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub type ViewReport = SearchReport<f64, CandidateResult<f64>>;

/// Kalman measurement update with a position-only observation. The
/// covariance is exactly [`posterior_covariance`] of the prior.
pub fn kalman_update<T: Real>(b: &Belief<T>, z: &Vector2<T>, r: &Matrix2<T>) -> Result<Belief<T>, LuppError> {
    let n = b.covariance.nrows();
    let h = observation_matrix::<T>(n);
    let r = DMatrix::from_iterator(2, 2, r.iter().copied());
    let s = &h * &b.covariance * h.transpose() + &r;
    let s_inv = match s.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => s.try_inverse().ok_or(LuppError::SingularInnovation)?,
    };
    if s_inv.iter().any(|x| !x.is_finite()) {
        return Err(LuppError::SingularInnovation);
    }
    let gain = &b.covariance * h.transpose() * s_inv;
    let innovation = DVector::from_vec(vec![z.x - b.mean.x, z.y - b.mean.y]);
    let dx = gain * innovation;
    let theta = if n == 3 { normalize_angle(b.mean.theta + dx[2]) } else { b.mean.theta };
    Ok(Belief {
        mean: Pose2::new(b.mean.x + dx[0], b.mean.y + dx[1], theta),
        covariance: posterior_covariance(&b.covariance, &h, &r)?,
    })
}

/// Draws a measurement of the true rover position from `sensor`, and the
/// covariance the viewer reports with it. Both use features of the true
/// geometry.
pub fn simulate_measurement<R: Rng + ?Sized>(
    sensor: &Pose3<f64>,
    rover_true: &Pose2<f64>,
    world: &WorldModel<f64>,
    model: &NoiseModel<f64>,
    cam: &CameraParams<f64>,
    cfg: &ConstraintConfig<f64>,
    rng: &mut R,
) -> Result<(Vector2<f64>, Matrix2<f64>), SimError> {
    let viewer = cam.viewer_for_sensor(sensor);
    let verdict = feasible(sensor, &viewer, rover_true, world, cam, cfg, None);
    if !verdict.feasible {
        return Err(SimError::InfeasibleMeasurement(verdict.reason));
    }
    let features = extract_features(sensor, rover_true, world, cam)?;
    let z = rover_true.position() + sample_error(model, &features, rng);
    Ok((z, predict_covariance(model, &features)))
}

fn search_error(e: SearchError<LuppError>) -> SimError {
    match e {
        SearchError::InvalidParameters(m) => SimError::Search(m),
        SearchError::Objective(e) => SimError::Lupp(e),
    }
}

/// Runs one strategy for the rendezvous belief.
pub fn plan_view(
    lupp: &Lupp<'_, f64>,
    rendezvous: &Belief<f64>,
    strategy: Strategy,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ViewReport, SimError> {
    let bounds = cfg.search_bounds();
    let objective = |x: &SphericalOffset<f64>| lupp.evaluate(x, rendezvous);
    let feasibility = |x: &SphericalOffset<f64>| Ok(lupp.check(x, &rendezvous.mean).1.feasible);
    match strategy {
        Strategy::De => differential_evolution(objective, &bounds, &DeParams { seed, ..cfg.de }),
        Strategy::Brute => brute_force(objective, &bounds, cfg.brute_grid),
        Strategy::Random => random_view(feasibility, objective, &bounds, seed, cfg.random_max_attempts),
        Strategy::Center => center_view(feasibility, objective, &bounds, seed),
    }
    .map_err(search_error)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementStatus {
    Updated,
    /// The planner found no feasible pose; the belief only propagated.
    NoFeasibleView,
    /// The planned view fails for the rover's true position.
    Blocked(InfeasibleReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointRecord {
    pub waypoint: usize,
    pub target: Vector2<f64>,
    pub true_pose: Pose2<f64>,
    pub rendezvous: Belief<f64>,
    pub estimate: Belief<f64>,
    pub offset: Option<SphericalOffset<f64>>,
    pub sensor_pose: Option<Pose3<f64>>,
    /// Planned cost; `+∞` without a feasible view.
    pub cost: f64,
    pub evaluations: usize,
    pub wall_time: f64,
    pub measurement: Option<Vector2<f64>>,
    pub measurement_cov: Option<Matrix2<f64>>,
    pub status: MeasurementStatus,
    /// Distance between estimated and true position, meters.
    pub error_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub seed: u64,
    pub strategy: Strategy,
    pub records: Vec<WaypointRecord>,
}

impl TrajectoryLog {
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error_m).collect()
    }

    pub fn metrics(&self) -> ErrorStats {
        ErrorStats::from_errors(&self.errors()).unwrap_or_default()
    }

    pub fn summary(&self, record_timing: bool) -> RunSummary {
        let count = |f: fn(&MeasurementStatus) -> bool| self.records.iter().filter(|r| f(&r.status)).count();
        RunSummary {
            seed: self.seed,
            strategy: self.strategy,
            waypoints: self.records.len(),
            updated: count(|s| *s == MeasurementStatus::Updated),
            no_feasible_view: count(|s| *s == MeasurementStatus::NoFeasibleView),
            blocked: count(|s| matches!(s, MeasurementStatus::Blocked(_))),
            evaluations: self.records.iter().map(|r| r.evaluations).sum(),
            wall_time_s: if record_timing { self.records.iter().map(|r| r.wall_time).sum() } else { 0.0 },
            error: self.metrics(),
        }
    }
}

/// What `sim` writes to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub strategy: Strategy,
    pub waypoints: usize,
    pub updated: usize,
    pub no_feasible_view: usize,
    pub blocked: usize,
    pub evaluations: usize,
    pub wall_time_s: f64,
    pub error: ErrorStats,
}

fn initial_belief(cfg: &ExperimentConfig, start: Pose2<f64>) -> Belief<f64> {
    let v = cfg.initial_sigma.powi(2);
    let diag = match cfg.belief_mode {
        BeliefMode::Position => vec![v, v],
        BeliefMode::Full => vec![v, v, v],
    };
    Belief {
        mean: start,
        covariance: DMatrix::from_diagonal(&DVector::from_vec(diag)),
    }
}

fn gaussian<R: Rng>(cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = cov.nrows();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    match cov.clone().cholesky() {
        Some(ch) => ch.l() * z,
        None => DVector::from_iterator(n, (0..n).map(|i| cov[(i, i)].max(0.0).sqrt() * z[i])),
    }
}

/// World for a `sim` run: a random map that keeps the course clear.
pub fn course_world(cfg: &ExperimentConfig, seed: u64) -> Result<WorldModel<f64>, SimError> {
    let keepout: Vec<Vector2<f64>> = std::iter::once(cfg.start)
        .chain(cfg.waypoints.iter().copied())
        .map(|p| Vector2::new(p[0], p[1]))
        .collect();
    Ok(random_map(seed, &cfg.map, &keepout)?.with_glare_exponent(cfg.glare_exponent))
}

/// One full trajectory over `cfg.waypoints` using `cfg.strategy`.
pub fn run_rendezvous_loop(cfg: &ExperimentConfig, seed: u64) -> Result<TrajectoryLog, SimError> {
    let world = course_world(cfg, seed)?;
    run_rendezvous_loop_in(cfg, seed, &world)
}

/// As [`run_rendezvous_loop`], in a given world.
pub fn run_rendezvous_loop_in(cfg: &ExperimentConfig, seed: u64, world: &WorldModel<f64>) -> Result<TrajectoryLog, SimError> {
    if cfg.waypoints.is_empty() {
        return Err(SimError::Config(super::ConfigError("sim needs at least one waypoint".into())));
    }
    let lupp = Lupp::new(world, &cfg.noise_model, &cfg.camera, &cfg.constraints);
    let motion = cfg.motion_model();
    let mut noise = stream_rng(seed, STREAM_NOISE);
    let mut planner = stream_rng(seed, STREAM_PLANNER);

    let first = Vector2::new(cfg.waypoints[0][0] - cfg.start[0], cfg.waypoints[0][1] - cfg.start[1]);
    let start = Pose2::new(cfg.start[0], cfg.start[1], first.y.atan2(first.x));
    let mut truth = start;
    let mut belief = initial_belief(cfg, start);
    let mut records = Vec::with_capacity(cfg.waypoints.len());

    for (k, wp) in cfg.waypoints.iter().enumerate() {
        let target = Vector2::new(wp[0], wp[1]);
        let command = target - belief.mean.position();
        let rendezvous = propagate_belief(&belief, &motion, &command);
        let report = plan_view(&lupp, &rendezvous, cfg.strategy, cfg, planner.random())?;

        let jitter = gaussian(&(&motion.q_rate * command.norm()), &mut noise);
        let heading_noise = if jitter.len() == 3 { jitter[2] } else { 0.0 };
        truth = Pose2::new(
            truth.x + command.x + jitter[0],
            truth.y + command.y + jitter[1],
            normalize_angle(rendezvous.mean.theta + heading_noise),
        );

        let chosen = report.best.sensor_pose.filter(|_| report.found_feasible);
        let (estimate, measurement, measurement_cov, status) = match chosen {
            None => (rendezvous.clone(), None, None, MeasurementStatus::NoFeasibleView),
            Some(sensor) => {
                match simulate_measurement(&sensor, &truth, world, &cfg.noise_model, &cfg.camera, &cfg.constraints, &mut noise) {
                    Ok((z, r)) => (kalman_update(&rendezvous, &z, &r)?, Some(z), Some(r), MeasurementStatus::Updated),
                    Err(SimError::InfeasibleMeasurement(reason)) => {
                        (rendezvous.clone(), None, None, MeasurementStatus::Blocked(reason))
                    }
                    Err(e) => return Err(e),
                }
            }
        };

        records.push(WaypointRecord {
            waypoint: k,
            target,
            true_pose: truth,
            error_m: (estimate.mean.position() - truth.position()).norm(),
            rendezvous,
            estimate: estimate.clone(),
            offset: chosen.map(|_| report.best_point),
            sensor_pose: chosen,
            cost: report.best.cost,
            evaluations: report.evaluations,
            wall_time: report.wall_time,
            measurement,
            measurement_cov,
            status,
        });
        belief = estimate;
    }

    Ok(TrajectoryLog {
        seed,
        strategy: cfg.strategy,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn kalman_examples() {
        let b = Belief::new(Pose2::new(0.0, 0.0, 0.0), DMatrix::identity(2, 2)).unwrap();
        let post = kalman_update(&b, &Vector2::new(2.0, 0.0), &Matrix2::identity()).unwrap();
        assert_relative_eq!(post.mean.x, 1.0, epsilon = 1e-15);
        assert_relative_eq!(post.mean.y, 0.0);
        assert_relative_eq!(post.covariance, DMatrix::identity(2, 2) * 0.5, epsilon = 1e-15);

        let prior = dmatrix![0.4, 0.1; 0.1, 0.3];
        let b = Belief::new(Pose2::new(1.0, -2.0, 0.0), prior.clone()).unwrap();
        let r = Matrix2::new(0.02, 0.0, 0.0, 0.05);
        let post = kalman_update(&b, &Vector2::new(1.0, -2.0), &r).unwrap();
        assert_eq!(post.mean, b.mean);
        let direct = posterior_covariance(&prior, &observation_matrix(2), &DMatrix::from_iterator(2, 2, r.iter().copied())).unwrap();
        assert_eq!(post.covariance, direct);
        assert!(post.covariance.determinant() < prior.determinant());
    }

    #[test]
    fn kalman_full_belief_keeps_heading_consistent() {
        let cov = dmatrix![0.2, 0.0, 0.05; 0.0, 0.2, 0.0; 0.05, 0.0, 0.1];
        let b = Belief::new(Pose2::new(0.0, 0.0, 3.1), cov).unwrap();
        let post = kalman_update(&b, &Vector2::new(1.0, 0.0), &(Matrix2::identity() * 0.2)).unwrap();
        // Correlation pulls the heading, which wraps across ±π.
        assert!(post.mean.theta < 0.0);
        assert_relative_eq!(post.mean.x, 0.5, epsilon = 1e-12);
        assert!(post.covariance[(2, 2)] < 0.1);
    }

    #[test]
    fn kalman_rejects_singular_innovation() {
        let b = Belief::new(Pose2::new(0.0, 0.0, 0.0), DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(
            kalman_update(&b, &Vector2::zeros(), &Matrix2::zeros()),
            Err(LuppError::SingularInnovation)
        );
    }
}
