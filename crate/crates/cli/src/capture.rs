//! Capture sessions: a background plate plus frames and their person
//! probability maps.
//!
//! ```text
//! <capture>/background.png
//! <capture>/frames/<name>.png
//! <capture>/prob/<name>.png
//! ```
//!
//! A still photo is a session with a single frame.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bgmatte_core::model::MattingInput;
use bgmatte_core::preprocess::{
    binarize, build_motion_stack, estimate_homography, gaussian_blur, refine_segmentation, warp_background,
    CropWindow, MotionStack,
};
use bgmatte_core::{Image, MattingError, ProbMap};
use log::{info, warn};

use crate::config::PreprocessConfig;
use crate::error::{CliError, CliResult};
use crate::io::{file_stem, list_pngs, read_image, read_plane};

pub const PLATE_FILE: &str = "background.png";
pub const FRAMES_DIR: &str = "frames";
pub const PROB_DIR: &str = "prob";

/// Blur applied to binary masks under `prob_from_threshold`.
const MASK_SOFTEN_SIGMA: f64 = 2.0;

#[derive(Clone, Debug)]
pub struct CaptureSession {
    pub dir: PathBuf,
    pub plate: PathBuf,
    pub frames: Vec<PathBuf>,
    pub probs: Vec<PathBuf>,
}

impl CaptureSession {
    /// Checks the layout without decoding any image.
    pub fn open(dir: &Path) -> CliResult<Self> {
        if !dir.is_dir() {
            return Err(CliError::config(format!("capture directory {} does not exist", dir.display())));
        }
        let plate = dir.join(PLATE_FILE);
        if !plate.is_file() {
            return Err(CliError::config(format!(
                "capture {} has no background plate: expected {}",
                dir.display(),
                plate.display()
            )));
        }
        let frames_dir = dir.join(FRAMES_DIR);
        let frames = if frames_dir.is_dir() { list_pngs(&frames_dir)? } else { Vec::new() };
        if frames.is_empty() {
            return Err(CliError::config(format!("no frames found in {}", frames_dir.display())));
        }
        let mut probs = Vec::with_capacity(frames.len());
        for f in &frames {
            let p = dir.join(PROB_DIR).join(f.file_name().expect("listed files have names"));
            if !p.is_file() {
                return Err(CliError::config(format!("missing probability map {}", p.display())));
            }
            probs.push(p);
        }
        Ok(CaptureSession {
            dir: dir.to_path_buf(),
            plate,
            frames,
            probs,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn name(&self) -> String {
        self.dir
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("capture")
            .to_string()
    }

    pub fn frame_name(&self, i: usize) -> Result<String> {
        file_stem(&self.frames[i])
    }
}

/// Network input for one frame, with where it sits in the full frame.
pub struct PreparedFrame {
    pub name: String,
    pub frame_size: (usize, usize),
    pub window: CropWindow,
    pub input: MattingInput,
    pub prob: ProbMap,
}

/// Outcome of preparing a frame.
pub enum Prepared {
    Ready(Box<PreparedFrame>),
    /// No pixel of the probability map exceeds 0.5.
    NoSubject { name: String, frame_size: (usize, usize) },
}

/// Loads the probability map for frame `i`, softening it if it is a mask.
fn load_prob(session: &CaptureSession, i: usize, opts: &PreprocessConfig) -> Result<ProbMap> {
    let prob = read_plane(&session.probs[i])?;
    if opts.prob_from_threshold {
        Ok(gaussian_blur(&binarize(&prob), MASK_SOFTEN_SIGMA)?)
    } else {
        Ok(prob)
    }
}

/// Plate brought into the frame's geometry.
fn align_plate(plate: &Image, frame: &Image, opts: &PreprocessConfig, seed: u64, name: &str) -> Result<Image> {
    let size = frame.size();
    if opts.align {
        match estimate_homography(plate, frame, seed) {
            Ok(fit) => {
                if let Some(w) = &fit.warning {
                    warn!("{name}: {w}; using the unaligned plate");
                }
                return Ok(warp_background(plate, &fit.homography, size)?);
            }
            Err(e) => warn!("{name}: plate alignment failed ({e}); using the unaligned plate"),
        }
    }
    if plate.size() != size {
        info!(
            "{name}: resizing {}x{} plate to the {}x{} frame",
            plate.height(),
            plate.width(),
            size.0,
            size.1
        );
        return Ok(plate.resize(size.0, size.1));
    }
    Ok(plate.clone())
}

/// Crop side actually used for a frame: the configured size, shrunk to the
/// largest multiple of 4 that fits.
pub fn effective_crop(frame_size: (usize, usize), crop_size: usize) -> usize {
    let fit = frame_size.0.min(frame_size.1) / 4 * 4;
    crop_size.min(fit)
}

/// Grey motion cue: neighbours at ±T and ±2T, clamped to the current
/// frame outside the sequence. Only the five frames involved are decoded.
fn motion_for(session: &CaptureSession, i: usize, frame: &Image, interval: usize) -> Result<MotionStack> {
    let mut local = Vec::with_capacity(5);
    for k in [-2i64, -1, 0, 1, 2] {
        let j = i as i64 + k * interval as i64;
        if k == 0 || j < 0 || j >= session.len() as i64 {
            local.push(frame.clone());
        } else {
            local.push(read_image(&session.frames[j as usize])?);
        }
    }
    Ok(build_motion_stack(&local, 2, 1)?)
}

/// Align, soften the segmentation, crop around the subject and build the
/// motion cue for frame `i`.
pub fn prepare_frame(
    session: &CaptureSession,
    plate: &Image,
    i: usize,
    opts: &PreprocessConfig,
    seed: u64,
) -> Result<Prepared> {
    let name = session.frame_name(i)?;
    let frame = read_image(&session.frames[i])?;
    let prob = load_prob(session, i, opts)?;
    let frame_size = frame.size();
    if prob.size() != frame_size {
        anyhow::bail!(
            "{}: probability map is {}x{} but the frame is {}x{}",
            session.probs[i].display(),
            prob.height(),
            prob.width(),
            frame_size.0,
            frame_size.1
        );
    }
    let crop = effective_crop(frame_size, opts.crop_size);
    if crop == 0 {
        anyhow::bail!("{name}: frame {}x{} is too small", frame_size.0, frame_size.1);
    }
    if crop != opts.crop_size {
        info!("{name}: frame smaller than the crop size, using a {crop}px crop");
    }
    let window = match CropWindow::around_subject(&prob, crop) {
        Ok(w) => w,
        Err(MattingError::SubjectNotFound) => return Ok(Prepared::NoSubject { name, frame_size }),
        Err(e) => return Err(e.into()),
    };
    let aligned = align_plate(plate, &frame, opts, seed, &name)?;
    let seg = refine_segmentation(&prob);
    let motion = if opts.motion && session.len() > 1 {
        motion_for(session, i, &frame, opts.motion_interval)?
    } else {
        MotionStack::still(&frame)
    };
    let motion = MotionStack {
        frames: [
            window.crop_plane(&motion.frames[0])?,
            window.crop_plane(&motion.frames[1])?,
            window.crop_plane(&motion.frames[2])?,
            window.crop_plane(&motion.frames[3])?,
        ],
    };
    let input = MattingInput::new(
        window.crop_image(&frame)?,
        window.crop_image(&aligned)?,
        window.crop_plane(&seg)?,
        motion,
    )
    .with_context(|| format!("{name}: inconsistent inputs"))?;
    Ok(Prepared::Ready(Box::new(PreparedFrame {
        name,
        frame_size,
        window,
        input,
        prob,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_shrinks_to_fit_small_frames() {
        assert_eq!(effective_crop((1080, 1920), 512), 512);
        assert_eq!(effective_crop((130, 200), 512), 128);
        assert_eq!(effective_crop((3, 3), 512), 0);
    }

    #[test]
    fn missing_plate_names_the_expected_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = CaptureSession::open(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains(PLATE_FILE), "{err}");
    }
}
