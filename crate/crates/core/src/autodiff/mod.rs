//! Minimal reverse-mode differentiation over dense tensors.

pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod params;
pub mod tensor;

pub use graph::{Gradients, Graph, NodeId};
pub use ops::{dropout, gumbel_softmax_with_noise, masked_softmax, st_gumbel_softmax, GumbelSample, MASK_VALUE};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::Tensor;
