//! Multi-pointer co-attention rating prediction from user and item review
//! banks, together with the data pipeline, interaction-only baselines, a
//! trainer and pointer-behaviour analysis.
//!
//! All numeric code is generic over [`Scalar`] (`f32` for training, `f64` for
//! verification); the `*32` / `*64` aliases below pin the common choices.

pub mod analysis;
pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod model;
pub mod train;
mod error;
mod rng;
mod scalar;

pub use autodiff::{Graph, NodeId, ParamStore, Tensor};
pub use error::{Error, Result};
pub use rng::RngState;
pub use scalar::{Precision, Scalar};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
