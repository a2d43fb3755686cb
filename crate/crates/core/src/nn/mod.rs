//! A small dense-tensor toolkit for convolutional networks.
//!
//! Layers are plain functions with a matching `*_backward`. Forward passes
//! never mutate parameters; caches needed by the backward pass are returned
//! to the caller. Scalars are generic so that training can run in `f32`
//! while gradient checks run in `f64`.

pub mod adam;
pub mod ops;
pub mod params;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};
