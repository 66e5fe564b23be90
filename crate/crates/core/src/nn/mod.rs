//! Minimal dense neural-network engine: 64-bit matrices, dense and batch
//! norm layers, activations, losses, Adam and a step learning-rate schedule.

mod activation;
mod adam;
mod batchnorm;
mod dense;
pub mod gradcheck;
mod loss;
mod matrix;
mod network;
mod schedule;

pub use activation::Activation;
pub use adam::{adam_step, AdamConfig, AdamState};
pub use batchnorm::{BatchNorm1d, Mode, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
pub use dense::{Dense, Init};
pub use loss::{mse_loss, softmax, softmax_cross_entropy};
pub use matrix::Matrix;
pub use network::{fit, ActivationLayer, Adam, BatchObjective, Layer, Sequential};
pub use schedule::TrainConfig;
