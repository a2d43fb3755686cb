use crate::compose::to_grayscale;
use crate::error::{MattingError, Result};
use crate::raster::{GrayImage, Image};

/// Frame interval for 60 fps captures.
pub const DEFAULT_MOTION_INTERVAL: usize = 20;

/// Grey frames at offsets `{-2T, -T, +T, +2T}` around the current frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionStack {
    pub frames: [GrayImage; 4],
}

impl MotionStack {
    /// `{I, I, I, I}` in grey, used for still photos.
    pub fn still(img: &Image) -> Self {
        let g = to_grayscale(img);
        MotionStack {
            frames: [g.clone(), g.clone(), g.clone(), g],
        }
    }

    pub fn size(&self) -> (usize, usize) {
        self.frames[0].size()
    }
}

/// Offsets relative to the current frame, in stack order.
pub const MOTION_OFFSETS: [i64; 4] = [-2, -1, 1, 2];

/// Motion cue for frame `index`; offsets outside the sequence fall back to
/// the current frame.
pub fn build_motion_stack(frames: &[Image], index: usize, interval: usize) -> Result<MotionStack> {
    if frames.is_empty() {
        return Err(MattingError::contract("motion stack needs at least one frame"));
    }
    if interval == 0 {
        return Err(MattingError::contract("motion interval must be >= 1"));
    }
    if index >= frames.len() {
        return Err(MattingError::contract(format!(
            "frame index {index} outside a {}-frame sequence",
            frames.len()
        )));
    }
    let size = frames[index].size();
    let pick = |k: i64| -> Result<GrayImage> {
        let j = index as i64 + k * interval as i64;
        let f = if j < 0 || j >= frames.len() as i64 {
            &frames[index]
        } else {
            &frames[j as usize]
        };
        crate::error::check_same_size("motion frame", size, f.size())?;
        Ok(to_grayscale(f))
    };
    Ok(MotionStack {
        frames: [
            pick(MOTION_OFFSETS[0])?,
            pick(MOTION_OFFSETS[1])?,
            pick(MOTION_OFFSETS[2])?,
            pick(MOTION_OFFSETS[3])?,
        ],
    })
}
