//! Diffusion prior over multi-view 2D motion.

pub mod checkpoint;
pub mod denoiser;
pub mod model;
pub mod nn;
pub mod schedule;
pub mod tensor;
pub mod train;

pub use denoiser::{Conditioning, Denoiser, OracleDenoiser};
pub use model::{DenoiserModel, ModelConfig, ModelMode};
pub use schedule::{make_schedule, posterior_step, q_sample, DiffusionSchedule, ScheduleKind};
pub use tensor::{MotionLayout, MotionTensor, RowStats};
pub use train::{evaluate_loss, train, train_with, Stage, TrainConfig, TrainLog, TrainingSet};
