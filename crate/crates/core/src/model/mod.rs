//! The matting generator with its Context Switching block, the patch
//! discriminator, and the checkpoint format.

mod checkpoint;
mod discriminator;
mod generator;
mod layers;

pub use checkpoint::{Archive, CHECKPOINT_VERSION};
pub use discriminator::{DiscTape, Discriminator};
pub use generator::{Encoder, GenOutput, GenTape, Generator, ShapeLog};

use serde::{Deserialize, Serialize};

use crate::error::{check_same_size, MattingError, Result};
use crate::nn::{Scalar, Tensor};
use crate::preprocess::MotionStack;
use crate::raster::{AlphaMatte, Image, Plane, SoftSegmentation};

/// Channel widths and depths of the generator. The discriminator reuses
/// `base_channels` as its first-layer width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub base_channels: usize,
    pub enc_channels: usize,
    pub selector_channels: usize,
    pub shared_resblocks: usize,
    pub branch_resblocks: usize,
    /// Nominal training resolution. The network is fully convolutional and
    /// accepts any size divisible by 4.
    pub input_size: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig::paper()
    }
}

impl NetConfig {
    pub fn paper() -> Self {
        NetConfig {
            base_channels: 64,
            enc_channels: 256,
            selector_channels: 64,
            shared_resblocks: 7,
            branch_resblocks: 3,
            input_size: 512,
        }
    }

    /// Small network for desk-scale experiments and tests.
    pub fn toy() -> Self {
        NetConfig {
            base_channels: 4,
            enc_channels: 16,
            selector_channels: 4,
            shared_resblocks: 2,
            branch_resblocks: 1,
            input_size: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("base_channels", self.base_channels),
            ("enc_channels", self.enc_channels),
            ("selector_channels", self.selector_channels),
            ("shared_resblocks", self.shared_resblocks),
            ("branch_resblocks", self.branch_resblocks),
            ("input_size", self.input_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(MattingError::contract(format!("network config: {name} must be at least 1")));
            }
        }
        if !self.input_size.is_multiple_of(4) {
            return Err(MattingError::contract("network config: input_size must be divisible by 4"));
        }
        Ok(())
    }
}

/// The generator's input bundle `{I, B', S, M}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MattingInput {
    pub image: Image,
    pub background: Image,
    pub segmentation: SoftSegmentation,
    pub motion: MotionStack,
}

impl MattingInput {
    pub fn new(image: Image, background: Image, segmentation: SoftSegmentation, motion: MotionStack) -> Result<Self> {
        let s = image.size();
        check_same_size("input background", s, background.size())?;
        check_same_size("input segmentation", s, segmentation.size())?;
        check_same_size("input motion", s, motion.size())?;
        Ok(MattingInput {
            image,
            background,
            segmentation,
            motion,
        })
    }

    /// Input for a still photo: the motion cue is four copies of the image.
    pub fn still(image: Image, background: Image, segmentation: SoftSegmentation) -> Result<Self> {
        let motion = MotionStack::still(&image);
        Self::new(image, background, segmentation, motion)
    }

    pub fn size(&self) -> (usize, usize) {
        self.image.size()
    }
}

/// Planar `[n, c, h, w]` tensors for a batch of inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct InputBatch<T> {
    pub image: Tensor<T>,
    pub background: Tensor<T>,
    pub segmentation: Tensor<T>,
    pub motion: Tensor<T>,
}

impl<T: Scalar> InputBatch<T> {
    pub fn from_inputs(inputs: &[&MattingInput]) -> Result<Self> {
        let first = inputs
            .first()
            .ok_or_else(|| MattingError::contract("empty input batch"))?;
        for x in inputs {
            check_same_size("batch member", first.size(), x.size())?;
        }
        let images: Vec<&Image> = inputs.iter().map(|x| &x.image).collect();
        let bgs: Vec<&Image> = inputs.iter().map(|x| &x.background).collect();
        let segs: Vec<&Plane> = inputs.iter().map(|x| &x.segmentation).collect();
        let mots: Vec<&Plane> = inputs.iter().flat_map(|x| x.motion.frames.iter()).collect();
        let n = inputs.len();
        let (h, w) = first.size();
        Ok(InputBatch {
            image: images_to_tensor(&images),
            background: images_to_tensor(&bgs),
            segmentation: planes_to_tensor(&segs, 1),
            motion: planes_to_tensor(&mots, 4),
        }
        .checked(n, h, w))
    }

    fn checked(self, n: usize, h: usize, w: usize) -> Self {
        debug_assert_eq!(self.motion.shape(), &[n, 4, h, w]);
        self
    }

    pub fn len(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn size(&self) -> (usize, usize) {
        let s = self.image.shape();
        (s[2], s[3])
    }
}

/// Interleaved RGB images to a `[n, 3, h, w]` tensor.
pub fn images_to_tensor<T: Scalar>(images: &[&Image]) -> Tensor<T> {
    let (h, w) = images[0].size();
    let hw = h * w;
    let mut data = vec![T::zero(); images.len() * 3 * hw];
    for (s, img) in images.iter().enumerate() {
        assert_eq!(img.size(), (h, w), "batch images differ in size");
        for (p, px) in img.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[(s * 3 + c) * hw + p] = T::lit(px[c] as f64);
            }
        }
    }
    Tensor::from_vec(&[images.len(), 3, h, w], data).expect("sizes agree")
}

/// Planes grouped `channels` at a time into a `[n, channels, h, w]` tensor.
pub fn planes_to_tensor<T: Scalar>(planes: &[&Plane], channels: usize) -> Tensor<T> {
    let (h, w) = planes[0].size();
    assert_eq!(planes.len() % channels, 0);
    let mut data = Vec::with_capacity(planes.len() * h * w);
    for p in planes {
        assert_eq!(p.size(), (h, w), "batch planes differ in size");
        data.extend(p.data().iter().map(|&v| T::lit(v as f64)));
    }
    Tensor::from_vec(&[planes.len() / channels, channels, h, w], data).expect("sizes agree")
}

/// Sample `n` of a `[_, 3, h, w]` tensor as an image, clamped to [0, 1].
pub fn tensor_to_image<T: Scalar>(t: &Tensor<T>, n: usize) -> Image {
    let (_, c, h, w) = t.dims4();
    assert_eq!(c, 3, "expected 3 channels");
    let hw = h * w;
    let s = t.sample(n);
    let mut data = vec![0.0f32; 3 * hw];
    for p in 0..hw {
        for ch in 0..3 {
            data[p * 3 + ch] = s[ch * hw + p].as_f64() as f32;
        }
    }
    Image::from_vec_clamped(h, w, data).expect("sizes agree")
}

/// Channel `c` of sample `n` as a plane, clamped to [0, 1].
pub fn tensor_to_plane<T: Scalar>(t: &Tensor<T>, n: usize, c: usize) -> AlphaMatte {
    let (_, _, h, w) = t.dims4();
    let hw = h * w;
    let s = &t.sample(n)[c * hw..(c + 1) * hw];
    Plane::from_vec_clamped(h, w, s.iter().map(|v| v.as_f64() as f32).collect()).expect("sizes agree")
}


#[cfg(test)]
mod net_tests;
