//! Minimal neural-network engine: tensors, a differentiable graph that
//! supports gradients of gradients, 1D (transpose) convolutions, spectral
//! normalization and Adam.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod conv;
pub mod error;
pub mod graph;
pub mod init;
pub mod spectral;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::ConvGeometry;
pub use error::{Result, TensorError};
pub use graph::{Graph, NodeId};
pub use spectral::{spectral_normalize, SpectralState};
pub use tensor::Tensor;
