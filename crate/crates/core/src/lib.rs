//! Multi-output Gaussian process regression of species-specific forest
//! stand attributes from plot-level remote-sensing metrics.
//!
//! The numeric core ([`linalg`], [`kernel`], [`gpr`], [`truncation`]) is
//! generic over the scalar type; the crate root exposes `f64` aliases used
//! by the data, baseline, and evaluation layers.

// `!(x > 0.0)` is the NaN-rejecting form used for validation throughout;
// index loops mirror the matrix algebra.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod baselines;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod gpr;
pub mod kernel;
pub mod linalg;
pub mod persist;
pub mod scalar;
pub mod truncation;

pub use error::{DataError, Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type KernelParams = kernel::KernelParams<f64>;
pub type GprConfig = gpr::GprConfig<f64>;
pub type GprConfigF32 = gpr::GprConfig<f32>;
pub type TrainingSet = gpr::TrainingSet<f64>;
pub type TrainingSetF32 = gpr::TrainingSet<f32>;
pub type GprModel = gpr::TrainedGprModel<f64>;
pub type GprModelF32 = gpr::TrainedGprModel<f32>;
pub type PredictiveDistribution = gpr::PredictiveDistribution<f64>;
pub type CorrectedPrediction = truncation::CorrectedPrediction<f64>;
pub type Interval = truncation::Interval<f64>;
