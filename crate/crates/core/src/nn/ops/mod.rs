//! Layer primitives with explicit backward passes.

mod activation;
mod conv;
mod norm;
mod resample;

pub use activation::{
    leaky_relu, leaky_relu_backward, relu, relu_backward, tanh, tanh_backward,
};
pub use conv::{conv2d, conv2d_backward, conv_output_size, ConvGeom, ConvGrads};
pub use norm::{
    batch_norm_eval, batch_norm_train, batch_norm_backward, instance_norm,
    instance_norm_backward, BatchNormStats, NormCache, NORM_EPS,
};
pub use resample::{upsample2x, upsample2x_backward};
