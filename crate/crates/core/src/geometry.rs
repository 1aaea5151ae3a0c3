//! Planar and spatial poses, plus the spherical parametrization of sensor
//! placements around a rover.
//!
//! Frames follow the camera convention used throughout the crate: `x` is the
//! boresight, `y` points left and `z` points up. Orientations are stored as
//! roll/pitch/yaw with `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use nalgebra::{Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Height of the rover's ranging reference point (the marker) above ground.
pub const MARKER_HEIGHT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("sensor and target coincide")]
    Degenerate,
    #[error("elevation must lie strictly inside (-pi/2, pi/2)")]
    ElevationOutOfRange,
    #[error("spherical offset requires rho > 0 and |psi|, |phi| < pi/2")]
    InvalidOffset,
    #[error("no zero-roll orientation realizes this offset")]
    Unreachable,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle<T: Real>(angle: T) -> T {
    let pi = T::pi();
    let two_pi = T::two_pi();
    let mut a = angle - two_pi * ((angle + pi) / two_pi).floor();
    // floor() maps the open end to -pi; fold it onto +pi.
    if a <= -pi {
        a += two_pi;
    }
    if a > pi {
        a -= two_pi;
    }
    a
}

/// Rover pose on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2<T: Real> {
    pub x: T,
    pub y: T,
    pub theta: T,
}

impl<T: Real> Pose2<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Vector2<T> {
        Vector2::new(self.x, self.y)
    }

    /// The point the sensor ranges to: rover center at marker height.
    pub fn reference_point(&self) -> Vector3<T> {
        Vector3::new(self.x, self.y, T::lit(MARKER_HEIGHT))
    }
}

/// Sensor or viewer pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose3<T: Real> {
    pub position: Vector3<T>,
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
}

impl<T: Real> Pose3<T> {
    pub fn new(position: Vector3<T>, roll: T, pitch: T, yaw: T) -> Self {
        Self {
            position,
            roll: normalize_angle(roll),
            pitch: normalize_angle(pitch),
            yaw: normalize_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), T::zero(), T::zero(), T::zero())
    }

    pub fn from_translation(position: Vector3<T>) -> Self {
        Self::new(position, T::zero(), T::zero(), T::zero())
    }

    fn from_rotation(position: Vector3<T>, rotation: &Rotation3<T>) -> Self {
        let (roll, pitch, yaw) = rotation.euler_angles();
        Self::new(position, roll, pitch, yaw)
    }

    pub fn rotation(&self) -> Rotation3<T> {
        Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw)
    }

    /// Maps a point from this pose's body frame into the world frame.
    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation() * p + self.position
    }

    /// Maps a world point into this pose's body frame.
    pub fn inverse_transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation().inverse() * (p - self.position)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose3<T>) -> Pose3<T> {
        let ra = self.rotation();
        let rotation = ra * other.rotation();
        Self::from_rotation(ra * other.position + self.position, &rotation)
    }

    pub fn inverse(&self) -> Pose3<T> {
        let r_inv = self.rotation().inverse();
        Self::from_rotation(-(r_inv * self.position), &r_inv)
    }

    /// Unit boresight direction in the world frame.
    pub fn forward(&self) -> Vector3<T> {
        self.rotation() * Vector3::x()
    }
}

/// Range and image-plane angles of a target relative to a sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spherical<T: Real> {
    pub rho: T,
    pub psi: T,
    pub phi: T,
}

/// Search variable that fully determines a sensor pose around a target.
///
/// `rho`, `psi` and `phi` are what the sensor observes; `azimuth` and
/// `elevation` fix where on the sphere of radius `rho` the sensor sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalOffset<T: Real> {
    pub rho: T,
    pub psi: T,
    pub phi: T,
    pub azimuth: T,
    pub elevation: T,
}

impl<T: Real> SphericalOffset<T> {
    pub fn from_array(v: [T; 5]) -> Self {
        Self {
            rho: v[0],
            psi: v[1],
            phi: v[2],
            azimuth: v[3],
            elevation: v[4],
        }
    }

    pub fn to_array(&self) -> [T; 5] {
        [self.rho, self.psi, self.phi, self.azimuth, self.elevation]
    }
}

/// Detection range, field of view and mounting of the camera on the viewer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraParams<T: Real> {
    pub rho_min: T,
    pub rho_max: T,
    pub f_horz: T,
    pub f_vert: T,
    pub image_width: u32,
    pub image_height: u32,
    /// Sensor pose in the viewer body frame.
    pub mount_offset: Pose3<T>,
}

impl<T: Real> Default for CameraParams<T> {
    fn default() -> Self {
        Self {
            rho_min: T::lit(1.5),
            rho_max: T::lit(6.0),
            f_horz: T::lit(1.2),
            f_vert: T::lit(0.9),
            image_width: 640,
            image_height: 480,
            mount_offset: Pose3::from_translation(Vector3::new(
                T::lit(0.15),
                T::zero(),
                T::lit(-0.1),
            )),
        }
    }
}

impl<T: Real> CameraParams<T> {
    pub fn is_valid(&self) -> bool {
        T::zero() < self.rho_min
            && self.rho_min < self.rho_max
            && T::zero() < self.f_horz
            && self.f_horz < T::pi()
            && T::zero() < self.f_vert
            && self.f_vert < T::pi()
    }

    /// Viewer body pose that carries the sensor at `sensor`.
    pub fn viewer_for_sensor(&self, sensor: &Pose3<T>) -> Pose3<T> {
        sensor.compose(&self.mount_offset.inverse())
    }
}

/// Range and angles of `target` as seen from `sensor`.
pub fn relative_spherical<T: Real>(
    sensor: &Pose3<T>,
    target: &Vector3<T>,
) -> Result<Spherical<T>, GeometryError> {
    let local = sensor.inverse_transform_point(target);
    let rho = local.norm();
    if rho <= T::default_epsilon() {
        return Err(GeometryError::Degenerate);
    }
    Ok(Spherical {
        rho,
        psi: local.y.atan2(local.x),
        phi: local.z.atan2(local.x),
    })
}

/// True iff `target` is within detection range and inside the field of view.
/// All bounds are inclusive.
pub fn in_state_space<T: Real>(sensor: &Pose3<T>, target: &Vector3<T>, cam: &CameraParams<T>) -> bool {
    let half = T::lit(0.5);
    // A few ulps of slack so a sensor placed exactly on a bound stays inside
    // after the pose round trip.
    let slack = |bound: T| bound.abs() * T::default_epsilon() * T::lit(16.0);
    match relative_spherical(sensor, target) {
        Ok(s) => {
            let (psi_max, phi_max) = (half * cam.f_horz, half * cam.f_vert);
            cam.rho_min - slack(cam.rho_min) <= s.rho
                && s.rho <= cam.rho_max + slack(cam.rho_max)
                && s.psi.abs() <= psi_max + slack(psi_max)
                && s.phi.abs() <= phi_max + slack(phi_max)
        }
        Err(_) => false,
    }
}

/// Builds the zero-roll sensor pose that sees `target` at `(rho, psi, phi)`
/// from the direction given by `azimuth`/`elevation`.
pub fn place_sensor<T: Real>(
    target: &Vector3<T>,
    off: &SphericalOffset<T>,
) -> Result<Pose3<T>, GeometryError> {
    let half_pi = T::frac_pi_2();
    if !(off.elevation.abs() < half_pi) {
        return Err(GeometryError::ElevationOutOfRange);
    }
    if !(off.rho > T::zero() && off.psi.abs() < half_pi && off.phi.abs() < half_pi) {
        return Err(GeometryError::InvalidOffset);
    }

    let (sa, ca) = off.azimuth.sin_cos();
    let (se, ce) = off.elevation.sin_cos();
    let outward = Vector3::new(ce * ca, ce * sa, se);
    let position = target + outward * off.rho;
    // Line of sight from the sensor to the target, world frame.
    let sight = -outward;

    // Same line of sight expressed in the sensor frame.
    let (tan_psi, tan_phi) = (off.psi.tan(), off.phi.tan());
    let a = T::one() / (T::one() + tan_psi * tan_psi + tan_phi * tan_phi).sqrt();
    let b = a * tan_psi;
    let c = a * tan_phi;

    // With roll = 0 the sensor-frame y component survives untouched, so the
    // pitch must carry (a, c) onto the world z component.
    let r = (a * a + c * c).sqrt();
    let ratio = sight.z / r;
    let tol = T::lit(1e-12);
    if ratio.abs() > T::one() + tol {
        return Err(GeometryError::Unreachable);
    }
    let ratio = ratio.clamp(-T::one(), T::one());
    let delta = a.atan2(c);
    let spread = ratio.acos();
    let candidates = [normalize_angle(-delta + spread), normalize_angle(-delta - spread)];
    let pitch = candidates
        .iter()
        .copied()
        .filter(|p| p.abs() <= half_pi + tol)
        .min_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap())
        .ok_or(GeometryError::Unreachable)?;
    let pitch = pitch.clamp(-half_pi, half_pi);

    let (sp, cp) = pitch.sin_cos();
    let horizontal = a * cp + c * sp;
    let yaw = sight.y.atan2(sight.x) - b.atan2(horizontal);
    Ok(Pose3::new(position, T::zero(), pitch, yaw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn offset(rho: f64, psi: f64, phi: f64, azimuth: f64, elevation: f64) -> SphericalOffset<f64> {
        SphericalOffset {
            rho,
            psi,
            phi,
            azimuth,
            elevation,
        }
    }

    #[test]
    fn normalization_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert_relative_eq!(normalize_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(normalize_angle(-0.5), -0.5);
        assert_relative_eq!(normalize_angle(2.0 * PI + 0.25), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn identity_composition() {
        let p = Pose3::new(Vector3::new(1.0, -2.0, 0.5), 0.1, -0.3, 2.0);
        let q = Pose3::identity().compose(&p);
        assert_relative_eq!(q.position, p.position, epsilon = 1e-12);
        assert_relative_eq!(q.yaw, p.yaw, epsilon = 1e-12);
        let e = p.compose(&p.inverse());
        assert_relative_eq!(e.position.norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(e.roll, 0.0, epsilon = 1e-12);
        assert_relative_eq!(e.pitch, 0.0, epsilon = 1e-12);
        assert_relative_eq!(e.yaw, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn translation_then_yaw() {
        let t = Pose3::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let r = Pose3::new(Vector3::zeros(), 0.0, 0.0, FRAC_PI_2);
        let p = t.compose(&r).transform_point(&Vector3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p, Vector3::new(1.0, 1.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn spherical_examples() {
        let s = Pose3::identity();
        let r = relative_spherical(&s, &Vector3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!((r.rho, r.psi, r.phi), (2.0, 0.0, 0.0));

        let r = relative_spherical(&s, &Vector3::new(1.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(r.rho, 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r.psi, FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(r.phi, 0.0);

        let down = Pose3::new(Vector3::new(0.0, 0.0, 3.0), 0.0, FRAC_PI_2, 0.0);
        let r = relative_spherical(&down, &Vector3::zeros()).unwrap();
        assert_relative_eq!(r.rho, 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.psi, 0.0, epsilon = 1e-9);
        assert_relative_eq!(r.phi, 0.0, epsilon = 1e-9);

        assert_eq!(
            relative_spherical(&s, &Vector3::zeros()),
            Err(GeometryError::Degenerate)
        );
    }

    #[test]
    fn state_space_bounds() {
        let cam = CameraParams {
            f_horz: FRAC_PI_2,
            ..CameraParams::<f64>::default()
        };
        let s = Pose3::identity();
        assert!(!in_state_space(&s, &Vector3::new(cam.rho_min - 1e-9, 0.0, 0.0), &cam));
        let mid = 0.5 * (cam.rho_min + cam.rho_max);
        assert!(in_state_space(&s, &Vector3::new(mid, 0.0, 0.0), &cam));
        // psi exactly at half the horizontal field of view.
        assert!(in_state_space(&s, &Vector3::new(2.0, 2.0, 0.0), &cam));
        assert!(!in_state_space(&s, &Vector3::new(2.0, 2.0 + 1e-9, 0.0), &cam));
    }

    #[test]
    fn placement_examples() {
        let origin = Vector3::zeros();
        let p = place_sensor(&origin, &offset(3.0, 0.0, 0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(p.position, Vector3::new(3.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(p.forward(), Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-12);
        let s = relative_spherical(&p, &origin).unwrap();
        assert_relative_eq!(s.rho, 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.psi, 0.0, epsilon = 1e-12);

        let p = place_sensor(&origin, &offset(3.0, 0.1, 0.0, 0.0, 0.0)).unwrap();
        let s = relative_spherical(&p, &origin).unwrap();
        assert_relative_eq!(s.psi, 0.1, epsilon = 1e-6);
        assert_eq!(p.roll, 0.0);

        let p = place_sensor(&origin, &offset(2.0, 0.0, 0.0, 1.0, FRAC_PI_3)).unwrap();
        assert_relative_eq!(p.position.z, 2.0 * FRAC_PI_3.sin(), epsilon = 1e-12);
        assert_relative_eq!(p.position.z, 1.732, epsilon = 1e-3);
    }

    #[test]
    fn placement_errors() {
        let origin = Vector3::zeros();
        assert_eq!(
            place_sensor(&origin, &offset(2.0, 0.0, 0.0, 0.0, FRAC_PI_2)),
            Err(GeometryError::ElevationOutOfRange)
        );
        assert_eq!(
            place_sensor(&origin, &offset(0.0, 0.0, 0.0, 0.0, 0.3)),
            Err(GeometryError::InvalidOffset)
        );
        // Looking almost straight down with a large horizontal offset needs roll.
        assert_eq!(
            place_sensor(&origin, &offset(2.0, 0.6, 0.0, 0.0, 1.5)),
            Err(GeometryError::Unreachable)
        );
    }

    #[test]
    fn viewer_mount_round_trip() {
        let cam = CameraParams::<f64>::default();
        let sensor = Pose3::new(Vector3::new(1.0, 2.0, 3.0), 0.0, 0.7, -1.2);
        let viewer = cam.viewer_for_sensor(&sensor);
        let back = viewer.compose(&cam.mount_offset);
        assert_relative_eq!(back.position, sensor.position, epsilon = 1e-12);
        assert_relative_eq!(back.pitch, sensor.pitch, epsilon = 1e-12);
    }

    #[test]
    fn single_precision_placement() {
        let target = Vector3::new(1.0f32, 2.0, 0.2);
        let off = SphericalOffset {
            rho: 3.0f32,
            psi: 0.2,
            phi: -0.1,
            azimuth: 2.0,
            elevation: 0.6,
        };
        let p = place_sensor(&target, &off).unwrap();
        let s = relative_spherical(&p, &target).unwrap();
        assert!((s.rho - 3.0).abs() < 1e-4);
        assert!((s.psi - 0.2).abs() < 1e-4);
        assert!((s.phi + 0.1).abs() < 1e-4);
    }
}
