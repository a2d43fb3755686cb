//! On-disk synthetic datasets.
//!
//! One directory per example holding 16-bit PNGs, plus `manifest.json`
//! recording each example's source asset, background and seed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bgmatte_core::augment::SynExample;
use bgmatte_core::composite;
use bgmatte_core::par;
use bgmatte_core::preprocess::MotionStack;
use serde::{Deserialize, Serialize};

use crate::io::{read_image, read_plane, write_image_u16, write_plane_u16};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub key: String,
    pub asset: String,
    pub background: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedAsset {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub out_size: usize,
    pub examples: Vec<ManifestEntry>,
    pub skipped: Vec<SkippedAsset>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))
    }
}

const IMAGE: &str = "image.png";
const BACKGROUND: &str = "background.png";
const PLATE: &str = "plate.png";
const SEGMENTATION: &str = "segmentation.png";
const FOREGROUND: &str = "foreground.png";
const ALPHA: &str = "alpha.png";

fn motion_file(i: usize) -> String {
    format!("motion_{i}.png")
}

/// Writes an example atomically: files go to a scratch directory that is
/// renamed into place once complete.
pub fn write_example(root: &Path, ex: &SynExample) -> Result<PathBuf> {
    let dir = root.join(&ex.key);
    let tmp = root.join(format!(".{}.partial", ex.key));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    write_image_u16(&tmp.join(IMAGE), &ex.img)?;
    write_image_u16(&tmp.join(BACKGROUND), &ex.bg_true)?;
    write_image_u16(&tmp.join(PLATE), &ex.bg_input)?;
    write_plane_u16(&tmp.join(SEGMENTATION), &ex.seg)?;
    for (i, m) in ex.motion.frames.iter().enumerate() {
        write_plane_u16(&tmp.join(motion_file(i)), m)?;
    }
    write_image_u16(&tmp.join(FOREGROUND), &ex.fg_gt)?;
    write_plane_u16(&tmp.join(ALPHA), &ex.alpha_gt)?;
    std::fs::rename(&tmp, &dir).with_context(|| format!("cannot move example into {}", dir.display()))?;
    Ok(dir)
}

pub fn read_example(root: &Path, key: &str) -> Result<SynExample> {
    let dir = root.join(key);
    let motion = MotionStack {
        frames: [
            read_plane(&dir.join(motion_file(0)))?,
            read_plane(&dir.join(motion_file(1)))?,
            read_plane(&dir.join(motion_file(2)))?,
            read_plane(&dir.join(motion_file(3)))?,
        ],
    };
    let mut ex = SynExample {
        key: key.to_string(),
        img: read_image(&dir.join(IMAGE))?,
        bg_true: read_image(&dir.join(BACKGROUND))?,
        bg_input: read_image(&dir.join(PLATE))?,
        seg: read_plane(&dir.join(SEGMENTATION))?,
        motion,
        fg_gt: read_image(&dir.join(FOREGROUND))?,
        alpha_gt: read_plane(&dir.join(ALPHA))?,
    };
    // Each of I, F, α and B is off by at most half a 16-bit step, so the
    // stored composite can miss the recomposition by up to four of them.
    // Within that, recompose I so the example is exact again.
    let tol = 2.0 / 65535.0 + 1e-7;
    let again = composite(&ex.fg_gt, &ex.alpha_gt, &ex.bg_true)
        .with_context(|| format!("invalid example {}", dir.display()))?;
    let worst = again.data().iter().zip(ex.img.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    if worst > tol {
        bail!("invalid example {}: image differs from its recomposition by {worst}", dir.display());
    }
    ex.img = again;
    ex.validate().with_context(|| format!("invalid example {}", dir.display()))?;
    Ok(ex)
}

/// Every example listed in the manifest, in manifest order.
pub fn load_dataset(root: &Path) -> Result<Vec<SynExample>> {
    let manifest = Manifest::load(root)?;
    if manifest.examples.is_empty() {
        bail!("dataset {} lists no examples", root.display());
    }
    par::map_slice(&manifest.examples, |e| read_example(root, &e.key)).into_iter().collect()
}
