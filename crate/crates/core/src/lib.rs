//! Background matting toolkit.
//!
//! Recovers per-pixel foreground color and alpha for a subject photographed
//! in front of a known background plate. The crate is organised by pipeline
//! stage:
//!
//! * [`raster`] and [`compose`]: image containers and the compositing algebra.
//! * [`preprocess`]: segmentation refinement, plate alignment, motion cues,
//!   cropping and trimaps.
//! * [`augment`]: synthetic composite generation for supervised training.
//! * [`nn`] and [`model`]: tensors, layers with explicit backward passes, the
//!   matting generator and the patch discriminator.
//! * [`train`]: losses, the supervised phase and the adversarial
//!   teacher-student phase.
//! * [`evalpost`]: post-processing, SAD/MSE metrics and composite rendering.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iteration otherwise.

pub mod augment;
pub mod compose;
pub mod error;
pub mod evalpost;
pub mod model;
pub mod nn;
pub mod par;
pub mod preprocess;
pub mod raster;
pub mod toy;
pub mod train;

pub use compose::{composite, composite_residual, solve_foreground, to_grayscale};
pub use error::{MattingError, Result};
pub use raster::{AlphaMatte, GrayImage, Image, Plane, ProbMap, SoftSegmentation};
