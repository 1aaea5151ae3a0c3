//! State-dependent sensor measurement models.
//!
//! A measurement model maps features of the (sensor, rover, environment)
//! state to the covariance of the 2D position measurement. Two variants are
//! provided: the fixed glare-aware model used for planning experiments and a
//! trainable diagonal model fitted by minimizing the Gaussian negative
//! log-likelihood.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{relative_spherical, CameraParams, Pose2, Pose3};
use crate::scalar::Real;
use crate::world::WorldModel;

/// Floor added to every trainable variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Width of the smooth ramp used to keep trainable variances positive.
pub const DEFAULT_SOFTPLUS_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdsmmError {
    #[error("rover is outside the sensor's detection range or field of view")]
    OutOfStateSpace,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training needs at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("predicted covariance is singular for record {0}")]
    SingularCovariance(usize),
    #[error("training diverged at step {0}")]
    Diverged(usize),
    #[error("model parameters malformed: {0}")]
    BadParameters(String),
}

/// Inputs of the measurement model, each normalized to a fixed range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features<T: Real> {
    /// 0 with the rover on the boresight, 1 at the edge of the field of view.
    pub edge_proximity: T,
    /// Range normalized over the detection interval, clamped to `[0, 1]`.
    pub range_frac: T,
    /// Glare severity in `[0, 2]`.
    pub reflection: T,
}

impl<T: Real> Features<T> {
    pub fn new(edge_proximity: T, range_frac: T, reflection: T) -> Self {
        Self {
            edge_proximity,
            range_frac,
            reflection,
        }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn is_valid(&self) -> bool {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        unit(self.edge_proximity)
            && unit(self.range_frac)
            && self.reflection >= T::zero()
            && self.reflection <= T::lit(2.0)
    }

    fn design_row(&self) -> [T; 4] {
        [T::one(), self.edge_proximity, self.range_frac, self.reflection]
    }
}

/// Glare severity `c = 2 * max(0, cos γ)^k`, where `γ` is the angle between
/// the sun's mirror direction off the ground and the rover-to-sensor ray.
pub fn reflection_scalar<T: Real>(sensor: &Pose3<T>, rover: &Pose2<T>, world: &WorldModel<T>) -> T {
    let sun = world.sun_direction;
    let mirror = nalgebra::Vector3::new(sun.x, sun.y, -sun.z).normalize();
    let to_sensor = sensor.position - rover.reference_point();
    let n = to_sensor.norm();
    if n <= T::zero() {
        return T::zero();
    }
    let cos = mirror.dot(&(to_sensor / n)).max(T::zero());
    T::lit(2.0) * cos.powf(world.glare_exponent)
}

pub fn extract_features<T: Real>(
    sensor: &Pose3<T>,
    rover: &Pose2<T>,
    world: &WorldModel<T>,
    cam: &CameraParams<T>,
) -> Result<Features<T>, SdsmmError> {
    let target = rover.reference_point();
    if !crate::geometry::in_state_space(sensor, &target, cam) {
        return Err(SdsmmError::OutOfStateSpace);
    }
    let s = relative_spherical(sensor, &target).map_err(|_| SdsmmError::OutOfStateSpace)?;
    let half = T::lit(0.5);
    let edge = (s.psi.abs() / (half * cam.f_horz))
        .max(s.phi.abs() / (half * cam.f_vert))
        .min(T::one());
    let range = ((s.rho - cam.rho_min) / (cam.rho_max - cam.rho_min)).clamp(T::zero(), T::one());
    Ok(Features::new(edge, range, reflection_scalar(sensor, rover, world)))
}

/// Constants of the glare-aware model. Standard deviations in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReflectiveParams<T: Real> {
    pub sigma1: T,
    pub sigma2_min: T,
    pub sigma2_max: T,
    pub sigma3_min: T,
    pub sigma3_max: T,
}

impl<T: Real> Default for ReflectiveParams<T> {
    fn default() -> Self {
        Self {
            sigma1: T::lit(0.03),
            sigma2_min: T::lit(0.03),
            sigma2_max: T::lit(0.3),
            sigma3_min: T::lit(0.03),
            sigma3_max: T::lit(0.5),
        }
    }
}

impl<T: Real> ReflectiveParams<T> {
    /// Isotropic variance for the given features.
    pub fn variance(&self, f: &Features<T>) -> T {
        let s2 = self.sigma2_min + f.edge_proximity * (self.sigma2_max - self.sigma2_min);
        let s3 = self.sigma3_min + f.range_frac * (self.sigma3_max - self.sigma3_min);
        let glare = f.reflection * s3;
        self.sigma1 * self.sigma1 + s2 * s2 + glare * glare
    }
}

/// Per-axis variance `softplus(w · [1, features])`, floored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalParams<T: Real> {
    pub weights: [[T; 4]; 2],
    pub softplus_scale: T,
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> DiagonalParams<T> {
    /// Model predicting the same constant variance everywhere.
    pub fn constant(variance: T) -> Self {
        let s = T::lit(DEFAULT_SOFTPLUS_SCALE);
        // Inverse of the scaled softplus; fine for variance well above the floor.
        let target = (variance - T::lit(VARIANCE_FLOOR)).max(T::lit(1e-12));
        let z = s * ((target / s).exp_m1()).ln();
        let bias = if z.is_finite() { z } else { target };
        Self {
            weights: [[bias, T::zero(), T::zero(), T::zero()]; 2],
            softplus_scale: s,
        }
    }

    fn activation(&self, axis: usize, f: &Features<T>) -> T {
        self.weights[axis]
            .iter()
            .zip(f.design_row())
            .fold(T::zero(), |acc, (w, x)| acc + *w * x)
    }

    /// Variance and its derivative with respect to the activation.
    fn variance_and_slope(&self, axis: usize, f: &Features<T>) -> (T, T) {
        let s = self.softplus_scale;
        let z = self.activation(axis, f) / s;
        (s * softplus(z) + T::lit(VARIANCE_FLOOR), sigmoid(z))
    }

    pub fn variances(&self, f: &Features<T>) -> [T; 2] {
        [self.variance_and_slope(0, f).0, self.variance_and_slope(1, f).0]
    }

    pub fn to_flat(&self) -> [T; 8] {
        let mut out = [T::zero(); 8];
        for axis in 0..2 {
            out[axis * 4..axis * 4 + 4].copy_from_slice(&self.weights[axis]);
        }
        out
    }

    pub fn from_flat(flat: &[T; 8], softplus_scale: T) -> Self {
        let mut weights = [[T::zero(); 4]; 2];
        for axis in 0..2 {
            weights[axis].copy_from_slice(&flat[axis * 4..axis * 4 + 4]);
        }
        Self {
            weights,
            softplus_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum NoiseModel<T: Real> {
    ReflectiveLinear(ReflectiveParams<T>),
    TrainableDiagonal(DiagonalParams<T>),
}

impl<T: Real> Default for NoiseModel<T> {
    fn default() -> Self {
        NoiseModel::ReflectiveLinear(ReflectiveParams::default())
    }
}

impl<T: Real> NoiseModel<T> {
    pub fn variant_name(&self) -> &'static str {
        match self {
            NoiseModel::ReflectiveLinear(_) => "reflective_linear",
            NoiseModel::TrainableDiagonal(_) => "trainable_diagonal",
        }
    }

    /// Flat parameter array as stored in model files.
    pub fn params(&self) -> Vec<T> {
        match self {
            NoiseModel::ReflectiveLinear(p) => {
                vec![p.sigma1, p.sigma2_min, p.sigma2_max, p.sigma3_min, p.sigma3_max]
            }
            NoiseModel::TrainableDiagonal(p) => {
                let mut v = p.to_flat().to_vec();
                v.push(p.softplus_scale);
                v
            }
        }
    }

    pub fn from_params(variant: &str, params: &[T]) -> Result<Self, SdsmmError> {
        match (variant, params.len()) {
            ("reflective_linear", 5) => {
                if params.iter().any(|p| !(*p > T::zero())) {
                    return Err(SdsmmError::BadParameters("constants must be positive".into()));
                }
                Ok(NoiseModel::ReflectiveLinear(ReflectiveParams {
                    sigma1: params[0],
                    sigma2_min: params[1],
                    sigma2_max: params[2],
                    sigma3_min: params[3],
                    sigma3_max: params[4],
                }))
            }
            ("trainable_diagonal", 9) => {
                let flat: [T; 8] = params[..8].try_into().expect("length checked");
                if !(params[8] > T::zero()) {
                    return Err(SdsmmError::BadParameters("softplus scale must be positive".into()));
                }
                Ok(NoiseModel::TrainableDiagonal(DiagonalParams::from_flat(&flat, params[8])))
            }
            (v, n) => Err(SdsmmError::BadParameters(format!(
                "unknown variant {v:?} with {n} parameters"
            ))),
        }
    }
}

/// Diagonal measurement covariance in m² for the given features.
pub fn predict_covariance<T: Real>(model: &NoiseModel<T>, f: &Features<T>) -> Matrix2<T> {
    match model {
        NoiseModel::ReflectiveLinear(p) => {
            let v = p.variance(f);
            Matrix2::new(v, T::zero(), T::zero(), v)
        }
        NoiseModel::TrainableDiagonal(p) => {
            let [vx, vy] = p.variances(f);
            Matrix2::new(vx, T::zero(), T::zero(), vy)
        }
    }
}

/// Zero-mean Gaussian draw with the predicted covariance.
pub fn sample_error<T: Real, R: Rng + ?Sized>(model: &NoiseModel<T>, f: &Features<T>, rng: &mut R) -> Vector2<T> {
    let cov = predict_covariance(model, f);
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    let z = Vector2::new(T::lit(z0), T::lit(z1));
    match cov.cholesky() {
        Some(ch) => ch.l() * z,
        None => Vector2::new(
            cov[(0, 0)].max(T::zero()).sqrt() * z.x,
            cov[(1, 1)].max(T::zero()).sqrt() * z.y,
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord<T: Real> {
    pub error: Vector2<T>,
    pub features: Features<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementDataset<T: Real> {
    pub records: Vec<MeasurementRecord<T>>,
}

impl<T: Real> MeasurementDataset<T> {
    pub fn new(records: Vec<MeasurementRecord<T>>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// `½ Σ_k (ln|Λ_k| + ε_kᵀ Λ_k⁻¹ ε_k)`: the Gaussian negative log-likelihood
/// without its constant term.
pub fn nll_loss<T: Real>(model: &NoiseModel<T>, data: &MeasurementDataset<T>) -> Result<T, SdsmmError> {
    if data.is_empty() {
        return Err(SdsmmError::EmptyDataset);
    }
    let mut total = T::zero();
    for (k, rec) in data.records.iter().enumerate() {
        let cov = predict_covariance(model, &rec.features);
        let det = cov.determinant();
        let inv = match cov.try_inverse() {
            Some(inv) if det > T::zero() && det.is_finite() => inv,
            _ => return Err(SdsmmError::SingularCovariance(k)),
        };
        total += det.ln() + (rec.error.transpose() * inv * rec.error)[(0, 0)];
    }
    Ok(T::lit(0.5) * total)
}

/// Gradient of [`nll_loss`] with respect to the flattened diagonal weights.
pub fn nll_gradient<T: Real>(params: &DiagonalParams<T>, data: &MeasurementDataset<T>) -> [T; 8] {
    let half = T::lit(0.5);
    let mut grad = [T::zero(); 8];
    for rec in &data.records {
        let row = rec.features.design_row();
        for axis in 0..2 {
            let (v, slope) = params.variance_and_slope(axis, &rec.features);
            let e = rec.error[axis];
            let dl_dv = half * (T::one() / v - e * e / (v * v));
            let dl_dz = dl_dv * slope;
            for (j, x) in row.iter().enumerate() {
                grad[axis * 4 + j] += dl_dz * *x;
            }
        }
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport<T: Real> {
    pub initial_loss: T,
    pub final_loss: T,
    pub steps: usize,
}

pub const MIN_TRAINING_RECORDS: usize = 100;

/// Full-batch gradient descent on the per-record mean of [`nll_loss`].
///
/// `step_size` is the initial trial step; each iteration backtracks until the
/// Armijo condition holds, then lets the next trial grow again.
pub fn train<T: Real>(
    model: &DiagonalParams<T>,
    data: &MeasurementDataset<T>,
    steps: usize,
    step_size: T,
) -> Result<(DiagonalParams<T>, TrainReport<T>), SdsmmError> {
    if data.len() < MIN_TRAINING_RECORDS {
        return Err(SdsmmError::TooFewRecords {
            needed: MIN_TRAINING_RECORDS,
            got: data.len(),
        });
    }
    let n = T::lit(data.len() as f64);
    let mean_loss = |p: &DiagonalParams<T>| -> Result<T, SdsmmError> {
        Ok(nll_loss(&NoiseModel::TrainableDiagonal(*p), data)? / n)
    };

    let mut current = *model;
    let mut loss = mean_loss(&current)?;
    let initial_loss = loss * n;
    let mut alpha = step_size;
    let mut taken = 0;
    for step in 0..steps {
        let grad = nll_gradient(&current, data).map(|g| g / n);
        let g2 = grad.iter().fold(T::zero(), |acc, g| acc + *g * *g);
        if !g2.is_finite() {
            return Err(SdsmmError::Diverged(step));
        }
        if g2 <= T::lit(1e-24) {
            break;
        }
        let flat = current.to_flat();
        let mut accepted = None;
        for _ in 0..60 {
            let trial_flat: [T; 8] = std::array::from_fn(|i| flat[i] - alpha * grad[i]);
            let trial = DiagonalParams::from_flat(&trial_flat, current.softplus_scale);
            match mean_loss(&trial) {
                Ok(l) if l.is_finite() && l <= loss - T::lit(1e-4) * alpha * g2 => {
                    accepted = Some((trial, l));
                    break;
                }
                _ => alpha *= T::lit(0.5),
            }
        }
        match accepted {
            Some((trial, l)) => {
                current = trial;
                loss = l;
                taken = step + 1;
                alpha *= T::lit(1.5);
            }
            // No descent possible at machine precision: converged.
            None => break,
        }
        if !loss.is_finite() {
            return Err(SdsmmError::Diverged(step));
        }
    }
    Ok((
        current,
        TrainReport {
            initial_loss,
            final_loss: loss * n,
            steps: taken,
        },
    ))
}
