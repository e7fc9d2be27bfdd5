//! Retrieval-augmented sequence modeling with KNN-based information
//! fetching over fixed, pre-encoded external memories.
//!
//! The numeric kernel (tensors, layers, optimizer, gradient checker, vector
//! index) is generic over the scalar type via [`scalar::Scalar`]; the
//! modeling and persistence layers pin `f64` for training fidelity and
//! store bank keys as `f32` on disk. Concrete aliases for the common
//! instantiations live at the crate root.

pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod optim;
pub mod param;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default training-precision tensor.
pub type Tensor64 = tensor::Tensor<f64>;
/// Storage-width tensor, matching the on-disk key format.
pub type Tensor32 = tensor::Tensor<f32>;
/// Default parameter store.
pub type ParamStore64 = param::ParamStore<f64>;
