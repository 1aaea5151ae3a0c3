//! Feasibility predicates for a candidate sensor pose: state-space
//! membership, predicted viewer collision and predicted rover occlusion.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{in_state_space, CameraParams, Pose2, Pose3};
use crate::probe::{count_raycast, EvalCounters};
use crate::scalar::Real;
use crate::world::{raycast, WorldModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintConfig<T: Real> {
    pub collision_ray_len: T,
    pub n_horizontal_rays: usize,
    pub n_vertical_rays: usize,
    pub n_perimeter_points: usize,
    pub rover_bounding_radius: T,
    pub rover_bounding_height: T,
}

impl<T: Real> Default for ConstraintConfig<T> {
    fn default() -> Self {
        Self {
            collision_ray_len: T::lit(0.75),
            n_horizontal_rays: 8,
            n_vertical_rays: 2,
            n_perimeter_points: 8,
            rover_bounding_radius: T::lit(0.75),
            rover_bounding_height: T::lit(0.5),
        }
    }
}

impl<T: Real> ConstraintConfig<T> {
    pub fn is_valid(&self) -> bool {
        self.n_horizontal_rays >= 1
            && self.n_vertical_rays >= 1
            && self.n_perimeter_points >= 1
            && self.collision_ray_len > T::zero()
            && self.rover_bounding_radius > T::zero()
            && self.rover_bounding_height > T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    Ok,
    Collision,
    Occlusion,
    OutOfStateSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub reason: InfeasibleReason,
}

impl FeasibilityVerdict {
    pub fn ok() -> Self {
        Self::from_reason(InfeasibleReason::Ok)
    }

    pub fn from_reason(reason: InfeasibleReason) -> Self {
        Self {
            feasible: reason == InfeasibleReason::Ok,
            reason,
        }
    }
}

/// Casts the collision probe rays around the viewer.
///
/// Horizontal rays are level and evenly spaced in azimuth starting at the
/// viewer's heading; vertical rays alternate down and up.
pub fn predict_collision<T: Real>(
    viewer: &Pose3<T>,
    world: &WorldModel<T>,
    cfg: &ConstraintConfig<T>,
    counters: Option<&EvalCounters>,
) -> bool {
    let grid = &world.grid;
    if grid.is_occupied(grid.voxel_of(&viewer.position)) {
        return true;
    }
    let n = cfg.n_horizontal_rays;
    let horizontal = (0..n).map(|k| {
        let a = viewer.yaw + T::two_pi() * T::lit(k as f64) / T::lit(n as f64);
        let (s, c) = a.sin_cos();
        Vector3::new(c, s, T::zero())
    });
    let vertical = (0..cfg.n_vertical_rays).map(|k| {
        if k % 2 == 0 {
            -Vector3::z()
        } else {
            Vector3::z()
        }
    });
    horizontal.chain(vertical).any(|dir| {
        count_raycast(counters);
        raycast(grid, &viewer.position, &dir, cfg.collision_ray_len)
            .map(|h| h.hit)
            .unwrap_or(false)
    })
}

/// Points on the rover's bounding cylinder that must all be visible: the top
/// rim sampled evenly, then the ranging reference point.
pub fn rover_sight_points<T: Real>(rover: &Pose2<T>, cfg: &ConstraintConfig<T>) -> Vec<Vector3<T>> {
    let n = cfg.n_perimeter_points;
    let mut pts: Vec<Vector3<T>> = (0..n)
        .map(|k| {
            let a = rover.theta + T::two_pi() * T::lit(k as f64) / T::lit(n as f64);
            let (s, c) = a.sin_cos();
            Vector3::new(
                rover.x + cfg.rover_bounding_radius * c,
                rover.y + cfg.rover_bounding_radius * s,
                cfg.rover_bounding_height,
            )
        })
        .collect();
    pts.push(rover.reference_point());
    pts
}

fn sight_blocked<T: Real>(
    from: &Vector3<T>,
    to: &Vector3<T>,
    world: &WorldModel<T>,
    counters: Option<&EvalCounters>,
) -> bool {
    let delta = to - from;
    // Stop one voxel short so the rover's own footprint never blocks itself.
    let len = delta.norm() - world.grid.resolution;
    if len <= T::zero() {
        return false;
    }
    count_raycast(counters);
    raycast(&world.grid, from, &delta, len)
        .map(|h| h.hit)
        .unwrap_or(false)
}

/// True iff any sight line from the sensor to the rover is blocked.
/// Partial visibility counts as occlusion.
pub fn predict_occlusion<T: Real>(
    sensor: &Pose3<T>,
    rover: &Pose2<T>,
    world: &WorldModel<T>,
    cfg: &ConstraintConfig<T>,
    counters: Option<&EvalCounters>,
) -> bool {
    rover_sight_points(rover, cfg)
        .iter()
        .any(|p| sight_blocked(&sensor.position, p, world, counters))
}

/// Checks membership, collision and occlusion in that order, stopping at the
/// first failure.
pub fn feasible<T: Real>(
    sensor: &Pose3<T>,
    viewer: &Pose3<T>,
    rover: &Pose2<T>,
    world: &WorldModel<T>,
    cam: &CameraParams<T>,
    cfg: &ConstraintConfig<T>,
    counters: Option<&EvalCounters>,
) -> FeasibilityVerdict {
    let reason = if !in_state_space(sensor, &rover.reference_point(), cam) {
        InfeasibleReason::OutOfStateSpace
    } else if predict_collision(viewer, world, cfg, counters) {
        InfeasibleReason::Collision
    } else if predict_occlusion(sensor, rover, world, cfg, counters) {
        InfeasibleReason::Occlusion
    } else {
        InfeasibleReason::Ok
    };
    FeasibilityVerdict::from_reason(reason)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{place_sensor, SphericalOffset};
    use crate::world::{Obstacle, Workspace};
    use nalgebra::Vector2;

    fn sun() -> Vector3<f64> {
        Vector3::new(0.6, 0.0, -0.8)
    }

    fn world_with(obstacles: Vec<Obstacle<f64>>, resolution: f64) -> WorldModel<f64> {
        WorldModel::new(0, Workspace::default(), resolution, obstacles, sun()).unwrap()
    }

    fn pillar(x: f64, y: f64, diameter: f64) -> Obstacle<f64> {
        Obstacle {
            center: Vector2::new(x, y),
            diameter,
            height: 10.0,
        }
    }

    #[test]
    fn empty_world_is_clear() {
        let w = world_with(vec![], 0.25);
        let cfg = ConstraintConfig::default();
        let viewer = Pose3::from_translation(Vector3::new(5.0, 5.0, 2.0));
        assert!(!predict_collision(&viewer, &w, &cfg, None));
        let rover = Pose2::new(8.0, 5.0, 0.0);
        assert!(!predict_occlusion(&viewer, &rover, &w, &cfg, None));
    }

    #[test]
    fn viewer_inside_obstacle_collides() {
        let w = world_with(vec![pillar(5.0, 5.0, 2.0)], 0.25);
        let viewer = Pose3::from_translation(Vector3::new(5.1, 4.9, 2.0));
        assert!(predict_collision(&viewer, &w, &ConstraintConfig::default(), None));
    }

    #[test]
    fn collision_ray_reach() {
        // Wall of a 2 m pillar at x = 6; fine voxels keep the surface sharp.
        let w = world_with(vec![pillar(5.0, 10.0, 2.0)], 0.05);
        let cfg = ConstraintConfig {
            collision_ray_len: 0.5,
            ..ConstraintConfig::default()
        };
        let near = Pose3::from_translation(Vector3::new(6.3, 10.0, 2.0));
        let far = Pose3::from_translation(Vector3::new(6.7, 10.0, 2.0));
        assert!(predict_collision(&near, &w, &cfg, None));
        assert!(!predict_collision(&far, &w, &cfg, None));
    }

    #[test]
    fn blocking_obstacle_occludes() {
        let w = world_with(vec![pillar(10.0, 10.0, 1.0)], 0.25);
        let sensor = Pose3::from_translation(Vector3::new(7.0, 10.0, 1.0));
        let rover = Pose2::new(13.0, 10.0, 0.0);
        assert!(predict_occlusion(&sensor, &rover, &w, &ConstraintConfig::default(), None));
    }

    #[test]
    fn partial_occlusion_is_occlusion() {
        // A thin pillar off to one side hides only some rim points.
        let w = world_with(vec![pillar(10.0, 10.42, 0.3)], 0.05);
        let cfg = ConstraintConfig::default();
        let sensor = Pose3::from_translation(Vector3::new(7.0, 10.0, 0.5));
        let rover = Pose2::new(13.0, 10.0, 0.0);
        let blocked: Vec<bool> = rover_sight_points(&rover, &cfg)
            .iter()
            .map(|p| sight_blocked(&sensor.position, p, &w, None))
            .collect();
        let n_blocked = blocked.iter().filter(|&&b| b).count();
        assert!(n_blocked >= 1 && n_blocked < blocked.len(), "{blocked:?}");
        assert!(predict_occlusion(&sensor, &rover, &w, &cfg, None));
    }

    fn fig3_setup() -> (WorldModel<f64>, CameraParams<f64>, ConstraintConfig<f64>, Pose2<f64>) {
        let w = world_with(vec![pillar(10.0, 13.0, 1.0), pillar(13.0, 10.0, 1.0)], 0.25);
        (w, CameraParams::default(), ConstraintConfig::default(), Pose2::new(10.0, 10.0, 0.0))
    }

    fn check(off: SphericalOffset<f64>) -> FeasibilityVerdict {
        let (w, cam, cfg, rover) = fig3_setup();
        let sensor = place_sensor(&rover.reference_point(), &off).unwrap();
        let viewer = cam.viewer_for_sensor(&sensor);
        feasible(&sensor, &viewer, &rover, &w, &cam, &cfg, None)
    }

    #[test]
    fn figure_three_states() {
        use std::f64::consts::FRAC_PI_2;
        let base = SphericalOffset {
            rho: 3.0,
            psi: 0.0,
            phi: 0.0,
            azimuth: 0.0,
            elevation: 0.3,
        };
        // Viewer parked against the pillar east of the rover.
        let collide = check(base);
        assert_eq!(collide.reason, InfeasibleReason::Collision);
        // Pillar north of the rover sits on the sight line.
        let occluded = check(SphericalOffset { rho: 5.0, azimuth: FRAC_PI_2, elevation: 0.1, ..base });
        assert_eq!(occluded.reason, InfeasibleReason::Occlusion);
        let clear = check(SphericalOffset { azimuth: -2.0, ..base });
        assert_eq!(clear.reason, InfeasibleReason::Ok);
        assert!(clear.feasible);
        let out = check(SphericalOffset { rho: 0.5, azimuth: -2.0, ..base });
        assert_eq!(out.reason, InfeasibleReason::OutOfStateSpace);
    }

    #[test]
    fn state_space_failure_skips_raycasts() {
        let (w, cam, cfg, rover) = fig3_setup();
        let counters = EvalCounters::new();
        let sensor = Pose3::from_translation(Vector3::new(10.0, 10.0, 30.0));
        let viewer = cam.viewer_for_sensor(&sensor);
        let v = feasible(&sensor, &viewer, &rover, &w, &cam, &cfg, Some(&counters));
        assert_eq!(v.reason, InfeasibleReason::OutOfStateSpace);
        assert_eq!(counters.raycasts(), 0);
    }
}
