//! Multi-view 3D motion from 2D motion diffusion.
//!
//! A 2D motion denoiser, trained on single-view pixel trajectories and
//! fine-tuned with view and ground-plane attention, is run jointly on every
//! camera of a calibrated rig. After each reverse step the per-view estimates
//! are triangulated and re-projected so they stay geometrically consistent,
//! and the final triangulation is the lifted 3D motion.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`, with `…32` variants for `f32`.

// Negated float comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lifting;
pub mod metrics;
pub mod motion;
pub mod refine;
pub mod representation;
pub mod scalar;
pub mod skeleton;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;
pub use skeleton::Skeleton;
pub use synth::MotionKind;

pub type Camera = geometry::Camera<f64>;
pub type Camera32 = geometry::Camera<f32>;
pub type CameraRig = geometry::CameraRig<f64>;
pub type CameraRig32 = geometry::CameraRig<f32>;
pub type Pointmap = geometry::Pointmap<f64>;
pub type Pointmap32 = geometry::Pointmap<f32>;
pub type Motion3 = motion::Motion3<f64>;
pub type Motion3f32 = motion::Motion3<f32>;
pub type GlobalMotion2D = motion::GlobalMotion2D<f64>;
pub type GlobalMotion2Df32 = motion::GlobalMotion2D<f32>;
pub type DisentangledMotion = representation::DisentangledMotion<f64>;
pub type DisentangledMotion32 = representation::DisentangledMotion<f32>;
pub type MotionTensor = diffusion::MotionTensor<f64>;
pub type MotionTensor32 = diffusion::MotionTensor<f32>;
pub type DenoiserModel = diffusion::DenoiserModel<f32>;
pub type DenoiserModel64 = diffusion::DenoiserModel<f64>;
pub type LiftResult = lifting::LiftResult;
pub type FitConfig = refine::FitConfig;
pub type MetricsReport = metrics::MetricsReport;
