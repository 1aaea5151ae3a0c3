//! Viewpoint planning for cooperative localization.
//!
//! A viewer robot carries a camera and observes a ground rover that cannot
//! localize itself. For each rendezvous the planner searches sensor poses
//! around the rover's predicted position, discards those where the viewer
//! would collide or the rover would be hidden, predicts the measurement
//! noise from the viewing geometry, and keeps the pose whose Kalman
//! posterior has the smallest log-determinant.
//!
//! The core is generic over [`scalar::Real`] (`f32` or `f64`); the
//! experiment drivers in [`sim`] and the file formats in [`io`] are `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod geometry;
pub mod io;
pub mod lupp;
pub mod optimize;
pub mod probe;
pub mod scalar;
pub mod sdsmm;
pub mod sim;
pub mod world;

pub use scalar::Real;

pub type Pose2F64 = geometry::Pose2<f64>;
pub type Pose2F32 = geometry::Pose2<f32>;
pub type Pose3F64 = geometry::Pose3<f64>;
pub type Pose3F32 = geometry::Pose3<f32>;
pub type SphericalOffsetF64 = geometry::SphericalOffset<f64>;
pub type SphericalOffsetF32 = geometry::SphericalOffset<f32>;
pub type CameraParamsF64 = geometry::CameraParams<f64>;
pub type CameraParamsF32 = geometry::CameraParams<f32>;
pub type VoxelGridF64 = world::VoxelGrid<f64>;
pub type VoxelGridF32 = world::VoxelGrid<f32>;
pub type WorldModelF64 = world::WorldModel<f64>;
pub type WorldModelF32 = world::WorldModel<f32>;
pub type ConstraintConfigF64 = constraints::ConstraintConfig<f64>;
pub type ConstraintConfigF32 = constraints::ConstraintConfig<f32>;
pub type FeaturesF64 = sdsmm::Features<f64>;
pub type FeaturesF32 = sdsmm::Features<f32>;
pub type NoiseModelF64 = sdsmm::NoiseModel<f64>;
pub type NoiseModelF32 = sdsmm::NoiseModel<f32>;
pub type BeliefF64 = lupp::Belief<f64>;
pub type BeliefF32 = lupp::Belief<f32>;
pub type CandidateResultF64 = lupp::CandidateResult<f64>;
pub type CandidateResultF32 = lupp::CandidateResult<f32>;
pub type SearchBoundsF64 = optimize::SearchBounds<f64>;
pub type SearchBoundsF32 = optimize::SearchBounds<f32>;
