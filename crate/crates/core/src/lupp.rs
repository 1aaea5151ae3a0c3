//! Localization-uncertainty prediction: belief propagation to the rendezvous,
//! the Kalman posterior covariance for a candidate view, and its log-det cost.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{feasible, ConstraintConfig, FeasibilityVerdict, InfeasibleReason};
use crate::geometry::{place_sensor, CameraParams, Pose2, Pose3, SphericalOffset};
use crate::probe::{count_riccati, count_sdsmm, EvalCounters};
use crate::scalar::Real;
use crate::sdsmm::{extract_features, predict_covariance, Features, NoiseModel, SdsmmError};
use crate::world::WorldModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LuppError {
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Sdsmm(#[from] SdsmmError),
}

/// Whether the belief tracks position only or the full planar pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BeliefMode {
    #[default]
    Position,
    Full,
}

impl BeliefMode {
    pub fn dim(self) -> usize {
        match self {
            BeliefMode::Position => 2,
            BeliefMode::Full => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Belief<T: Real> {
    pub mean: Pose2<T>,
    /// 2×2 (x, y) or 3×3 (x, y, θ) covariance.
    pub covariance: DMatrix<T>,
}

impl<T: Real> Belief<T> {
    pub fn new(mean: Pose2<T>, covariance: DMatrix<T>) -> Result<Self, LuppError> {
        let n = covariance.nrows();
        if !(n == 2 || n == 3) || covariance.ncols() != n {
            return Err(LuppError::Dimension(format!(
                "belief covariance must be 2x2 or 3x3, got {}x{}",
                n,
                covariance.ncols()
            )));
        }
        Ok(Self { mean, covariance })
    }

    pub fn mode(&self) -> BeliefMode {
        if self.covariance.nrows() == 3 {
            BeliefMode::Full
        } else {
            BeliefMode::Position
        }
    }

    pub fn position_covariance(&self) -> Matrix2<T> {
        self.covariance.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

/// Direct-displacement odometry: the covariance grows by `Q_rate` per meter.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel<T: Real> {
    pub q_rate: DMatrix<T>,
}

impl<T: Real> MotionModel<T> {
    /// Default odometry noise: 0.02² m²/m per axis, plus 0.01² rad²/m heading.
    pub fn default_for(mode: BeliefMode) -> Self {
        let d = match mode {
            BeliefMode::Position => vec![T::lit(0.02 * 0.02); 2],
            BeliefMode::Full => vec![T::lit(0.02 * 0.02), T::lit(0.02 * 0.02), T::lit(0.01 * 0.01)],
        };
        Self {
            q_rate: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)),
        }
    }
}

/// Advances the belief by a commanded displacement. The heading follows the
/// direction of travel.
pub fn propagate_belief<T: Real>(b: &Belief<T>, motion: &MotionModel<T>, displacement: &Vector2<T>) -> Belief<T> {
    let d = displacement.norm();
    let theta = if d > T::zero() {
        displacement.y.atan2(displacement.x)
    } else {
        b.mean.theta
    };
    Belief {
        mean: Pose2::new(b.mean.x + displacement.x, b.mean.y + displacement.y, theta),
        covariance: &b.covariance + &motion.q_rate * d,
    }
}

/// `[I₂ | 0]`: position-only observation of a `dim`-dimensional state.
pub fn observation_matrix<T: Real>(dim: usize) -> DMatrix<T> {
    DMatrix::from_fn(2, dim, |r, c| if r == c { T::one() } else { T::zero() })
}

fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Kalman posterior covariance `(I − K H) P` with `K = P Hᵀ S⁻¹` and
/// innovation covariance `S = H P Hᵀ + R`.
pub fn posterior_covariance<T: Real>(
    prior: &DMatrix<T>,
    h: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<DMatrix<T>, LuppError> {
    let n = prior.nrows();
    if prior.ncols() != n || h.ncols() != n || r.nrows() != h.nrows() || r.ncols() != h.nrows() {
        return Err(LuppError::Dimension("prior, observation and noise shapes disagree".into()));
    }
    let s = h * prior * h.transpose() + r;
    let s_inv = match s.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => s.try_inverse().ok_or(LuppError::SingularInnovation)?,
    };
    if s_inv.iter().any(|x| !x.is_finite()) {
        return Err(LuppError::SingularInnovation);
    }
    let gain = prior * h.transpose() * s_inv;
    let posterior = (DMatrix::identity(n, n) - gain * h) * prior;
    Ok(symmetrize(&posterior))
}

/// D-optimality cost `ln det P`, via Cholesky.
pub fn cost<T: Real>(p: &DMatrix<T>) -> Result<T, LuppError> {
    let ch = p.clone().cholesky().ok_or(LuppError::NotPositiveDefinite)?;
    let l = ch.l_dirty();
    let mut acc = T::zero();
    for i in 0..p.nrows() {
        acc += l[(i, i)].ln();
    }
    let out = acc * T::lit(2.0);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(LuppError::NotPositiveDefinite)
    }
}

/// Outcome of evaluating one candidate sensor placement.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult<T: Real> {
    pub offset: SphericalOffset<T>,
    pub sensor_pose: Option<Pose3<T>>,
    pub verdict: FeasibilityVerdict,
    pub features: Option<Features<T>>,
    pub predicted_measurement_cov: Option<Matrix2<T>>,
    pub posterior_cov: Option<DMatrix<T>>,
    /// ln det of the posterior; `+∞` when infeasible.
    pub cost: T,
}

impl<T: Real> CandidateResult<T> {
    fn infeasible(offset: SphericalOffset<T>, sensor_pose: Option<Pose3<T>>, reason: InfeasibleReason) -> Self {
        Self {
            offset,
            sensor_pose,
            verdict: FeasibilityVerdict::from_reason(reason),
            features: None,
            predicted_measurement_cov: None,
            posterior_cov: None,
            cost: T::infinity(),
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.verdict.feasible
    }
}

/// Shared read-only context for evaluating many candidates against one
/// world, camera and measurement model.
#[derive(Debug, Clone, Copy)]
pub struct Lupp<'a, T: Real> {
    pub world: &'a WorldModel<T>,
    pub model: &'a NoiseModel<T>,
    pub cam: &'a CameraParams<T>,
    pub cfg: &'a ConstraintConfig<T>,
    pub counters: Option<&'a EvalCounters>,
}

impl<'a, T: Real> Lupp<'a, T> {
    pub fn new(
        world: &'a WorldModel<T>,
        model: &'a NoiseModel<T>,
        cam: &'a CameraParams<T>,
        cfg: &'a ConstraintConfig<T>,
    ) -> Self {
        Self {
            world,
            model,
            cam,
            cfg,
            counters: None,
        }
    }

    pub fn with_counters(mut self, counters: &'a EvalCounters) -> Self {
        self.counters = Some(counters);
        self
    }

    /// Places the sensor and runs the constraint checks only.
    pub fn check(&self, candidate: &SphericalOffset<T>, rover: &Pose2<T>) -> (Option<Pose3<T>>, FeasibilityVerdict) {
        let sensor = match place_sensor(&rover.reference_point(), candidate) {
            Ok(s) => s,
            Err(_) => return (None, FeasibilityVerdict::from_reason(InfeasibleReason::OutOfStateSpace)),
        };
        let viewer = self.cam.viewer_for_sensor(&sensor);
        let verdict = feasible(&sensor, &viewer, rover, self.world, self.cam, self.cfg, self.counters);
        (Some(sensor), verdict)
    }

    /// Full pipeline; SDSMM and Riccati work happen only for feasible poses.
    pub fn evaluate(&self, candidate: &SphericalOffset<T>, rendezvous: &Belief<T>) -> Result<CandidateResult<T>, LuppError> {
        let rover = &rendezvous.mean;
        let (sensor, verdict) = self.check(candidate, rover);
        let sensor = match (sensor, verdict.feasible) {
            (Some(s), true) => s,
            _ => return Ok(CandidateResult::infeasible(*candidate, sensor, verdict.reason)),
        };
        count_sdsmm(self.counters);
        let features = extract_features(&sensor, rover, self.world, self.cam)?;
        let r = predict_covariance(self.model, &features);
        let h = observation_matrix(rendezvous.covariance.nrows());
        count_riccati(self.counters);
        let r_dyn = DMatrix::from_iterator(2, 2, r.iter().copied());
        let posterior = posterior_covariance(&rendezvous.covariance, &h, &r_dyn)?;
        let c = cost(&posterior)?;
        Ok(CandidateResult {
            offset: *candidate,
            sensor_pose: Some(sensor),
            verdict,
            features: Some(features),
            predicted_measurement_cov: Some(r),
            posterior_cov: Some(posterior),
            cost: c,
        })
    }
}

/// Convenience wrapper around [`Lupp::evaluate`].
pub fn evaluate<T: Real>(
    candidate: &SphericalOffset<T>,
    rendezvous: &Belief<T>,
    world: &WorldModel<T>,
    model: &NoiseModel<T>,
    cam: &CameraParams<T>,
    cfg: &ConstraintConfig<T>,
) -> Result<CandidateResult<T>, LuppError> {
    Lupp::new(world, model, cam, cfg).evaluate(candidate, rendezvous)
}
