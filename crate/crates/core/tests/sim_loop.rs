use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use viewplan::constraints::ConstraintConfig;
use viewplan::geometry::{place_sensor, CameraParams, Pose2, SphericalOffset};
use viewplan::lupp::{observation_matrix, posterior_covariance, Belief, BeliefMode};
use viewplan::sdsmm::{NoiseModel, ReflectiveParams};
use viewplan::sim::{
    course_world, kalman_update, run_rendezvous_loop, run_rendezvous_loop_in, simulate_measurement, ExperimentConfig,
    MeasurementStatus, MotionNoise, Strategy, TrajectoryLog,
};
use viewplan::world::{sun_from_angles, Obstacle, WorldModel, Workspace};

fn quiet_model() -> NoiseModel<f64> {
    NoiseModel::ReflectiveLinear(ReflectiveParams {
        sigma1: 1e-9,
        sigma2_min: 1e-9,
        sigma2_max: 1e-9,
        sigma3_min: 1e-9,
        sigma3_max: 1e-9,
    })
}

fn clear_view(rover: &Pose2<f64>) -> viewplan::geometry::Pose3<f64> {
    let off = SphericalOffset {
        rho: 3.0,
        psi: 0.1,
        phi: -0.05,
        azimuth: 2.0,
        elevation: 0.5,
    };
    place_sensor(&rover.reference_point(), &off).unwrap()
}

fn empty_world() -> WorldModel<f64> {
    WorldModel::empty(sun_from_angles(0.3, 0.6)).unwrap()
}

#[test]
fn noise_free_measurement_recovers_position() {
    let rover = Pose2::new(9.0, 11.0, 0.4);
    let world = empty_world();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (cam, cfg) = (CameraParams::default(), ConstraintConfig::default());
    let (z, _) = simulate_measurement(&clear_view(&rover), &rover, &world, &quiet_model(), &cam, &cfg, &mut rng).unwrap();
    assert!((z - rover.position()).norm() < 1e-6);
}

#[test]
fn measurement_noise_matches_reported_covariance() {
    let rover = Pose2::new(9.0, 11.0, 0.4);
    let world = empty_world();
    let model = NoiseModel::ReflectiveLinear(ReflectiveParams::default());
    let (cam, cfg) = (CameraParams::default(), ConstraintConfig::default());
    let sensor = clear_view(&rover);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 50_000;
    let mut sum = Matrix2::zeros();
    let mut reported = Matrix2::zeros();
    for _ in 0..n {
        let (z, r) = simulate_measurement(&sensor, &rover, &world, &model, &cam, &cfg, &mut rng).unwrap();
        let e = z - rover.position();
        sum += e * e.transpose();
        reported = r;
    }
    let sample = sum / n as f64;
    for i in 0..2 {
        let rel = (sample[(i, i)] / reported[(i, i)] - 1.0).abs();
        assert!(rel < 0.05, "axis {i}: sample {} vs {}", sample[(i, i)], reported[(i, i)]);
    }
    let scale = (reported[(0, 0)] * reported[(1, 1)]).sqrt();
    assert!((sample[(0, 1)] - reported[(0, 1)]).abs() < 0.05 * scale);

    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        simulate_measurement(&sensor, &rover, &world, &model, &cam, &cfg, &mut rng).unwrap()
    };
    assert_eq!(draw(7), draw(7));
    assert_ne!(draw(7).0, draw(8).0);
}

#[test]
fn kalman_covariance_is_the_planner_posterior() {
    let prior = nalgebra::dmatrix![0.3, 0.02, 0.01; 0.02, 0.25, -0.03; 0.01, -0.03, 0.1];
    let b = Belief::new(Pose2::new(1.0, 2.0, 0.5), prior.clone()).unwrap();
    let r = Matrix2::new(0.01, 0.002, 0.002, 0.03);
    let post = kalman_update(&b, &Vector2::new(1.2, 1.9), &r).unwrap();
    let direct = posterior_covariance(&prior, &observation_matrix(3), &nalgebra::DMatrix::from_iterator(2, 2, r.iter().copied())).unwrap();
    assert_eq!(post.covariance, direct);
}

fn single_leg(strategy: Strategy) -> ExperimentConfig {
    ExperimentConfig {
        strategy,
        waypoints: vec![[8.0, 5.0]],
        ..ExperimentConfig::default()
    }
}

#[test]
fn single_waypoint_in_open_world() {
    let cfg = single_leg(Strategy::De);
    let log = run_rendezvous_loop_in(&cfg, 3, &empty_world()).unwrap();
    assert_eq!(log.records.len(), 1);
    let r = &log.records[0];
    assert!(r.cost.is_finite());
    assert_eq!(r.status, MeasurementStatus::Updated);
    assert!(r.estimate.covariance.determinant() < r.rendezvous.covariance.determinant());
}

#[test]
fn zero_noise_gives_zero_error() {
    let cfg = ExperimentConfig {
        noise_model: quiet_model(),
        motion_noise: MotionNoise {
            position_sigma: 0.0,
            heading_sigma: 0.0,
        },
        strategy: Strategy::Center,
        ..ExperimentConfig::default()
    };
    let log = run_rendezvous_loop(&cfg, 4).unwrap();
    assert_eq!(log.records.len(), cfg.waypoints.len());
    for r in &log.records {
        assert!(r.error_m < 1e-6, "waypoint {}: {}", r.waypoint, r.error_m);
    }
}

fn without_timing(mut log: TrajectoryLog) -> TrajectoryLog {
    for r in &mut log.records {
        r.wall_time = 0.0;
    }
    log
}

#[test]
fn loop_is_deterministic() {
    let cfg = ExperimentConfig {
        de: viewplan::optimize::DeParams {
            max_iters: 20,
            ..Default::default()
        },
        ..ExperimentConfig::default()
    };
    let a = without_timing(run_rendezvous_loop(&cfg, 11).unwrap());
    let b = without_timing(run_rendezvous_loop(&cfg, 11).unwrap());
    assert_eq!(a, b);
    let c = without_timing(run_rendezvous_loop(&cfg, 12).unwrap());
    assert_ne!(a.records[0].true_pose, c.records[0].true_pose);
}

#[test]
fn unmeasured_waypoints_keep_the_propagated_belief() {
    // A dense ring of tall pillars hides the only waypoint from every view.
    let center = Vector2::new(10.0, 10.0);
    let ring: Vec<Obstacle<f64>> = (0..24)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 24.0;
            Obstacle {
                center: center + Vector2::new(a.cos(), a.sin()) * 1.3,
                diameter: 0.5,
                height: 11.0,
            }
        })
        .collect();
    let world = WorldModel::new(0, Workspace::default(), 0.25, ring, sun_from_angles(0.0, 0.7)).unwrap();
    for strategy in [Strategy::Center, Strategy::Random, Strategy::De] {
        let cfg = ExperimentConfig {
            waypoints: vec![[10.0, 10.0]],
            random_max_attempts: 2_000,
            ..single_leg(strategy)
        };
        let log = run_rendezvous_loop_in(&cfg, 5, &world).unwrap();
        let r = &log.records[0];
        assert_eq!(r.status, MeasurementStatus::NoFeasibleView, "{strategy}");
        assert_eq!(r.estimate, r.rendezvous);
        assert!(r.measurement.is_none() && r.sensor_pose.is_none());
    }
}

#[test]
fn filter_is_consistent_across_seeds() {
    let cfg = ExperimentConfig {
        strategy: Strategy::Center,
        ..ExperimentConfig::default()
    };
    assert_eq!(cfg.belief_mode, BeliefMode::Position);
    let (mut total, mut count) = (0.0, 0usize);
    for seed in 0..150 {
        let world = course_world(&cfg, seed).unwrap();
        let log = run_rendezvous_loop_in(&cfg, seed, &world).unwrap();
        for r in &log.records {
            if r.status != MeasurementStatus::Updated {
                assert_eq!(r.estimate, r.rendezvous);
            }
            let e = r.estimate.mean.position() - r.true_pose.position();
            let p = r.estimate.position_covariance();
            total += (e.transpose() * p.try_inverse().unwrap() * e)[(0, 0)];
            count += 1;
        }
    }
    let nees = total / count as f64;
    assert!((1.0..=3.0).contains(&nees), "average NEES {nees} over {count} waypoints");
}
