use std::path::Path;

use anyhow::Result;
use bgmatte_core::toy::{textured_background, toy_asset, toy_scene};
use log::info;

use crate::capture::{FRAMES_DIR, PLATE_FILE, PROB_DIR};
use crate::error::CliResult;
use crate::io::{write_image_u16, write_image_u8, write_plane_u16};

/// Sizes of a generated toy workspace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToyDataOptions {
    pub size: usize,
    pub assets: usize,
    pub backgrounds: usize,
    pub captures: usize,
    pub seed: u64,
}

impl Default for ToyDataOptions {
    fn default() -> Self {
        ToyDataOptions {
            size: 128,
            assets: 16,
            backgrounds: 4,
            captures: 16,
            seed: 0,
        }
    }
}

// Seed offsets keep assets, backgrounds, training captures and the
// held-out capture disjoint.
const BG_SEEDS: u64 = 500;
const CAPTURE_SEEDS: u64 = 1000;
const HOLDOUT_SEED: u64 = 5000;

fn write_capture(dir: &Path, size: usize, seed: u64) -> Result<()> {
    let scene = toy_scene(size, seed);
    write_image_u8(&dir.join(PLATE_FILE), &scene.background)?;
    write_image_u8(&dir.join(FRAMES_DIR).join("0000.png"), &scene.image)?;
    write_plane_u16(&dir.join(PROB_DIR).join("0000.png"), &scene.prob)?;
    write_plane_u16(&dir.join("alpha").join("0000.png"), &scene.alpha)?;
    Ok(())
}

fn sample_config(size: usize) -> String {
    format!(
        r#"seed = 0

[paths]
assets = "assets"
backgrounds = "backgrounds"
dataset = "dataset"
captures = "captures"
output = "out"

[net]
base_channels = 4
enc_channels = 16
selector_channels = 4
shared_resblocks = 2
branch_resblocks = 1
input_size = {size}

[train]
batch_size = 8
lr_g = 1e-3
lr_d = 1e-4
lambda0 = 1.0
lambda_halve_every = 4
epochs = 8
steps_per_epoch = 100

[preprocess]
crop_size = {size}

[synth]
out_size = {size}
"#
    )
}

/// Writes a self-contained toy workspace: matte assets, textured
/// backgrounds, single-frame captures with ground-truth alpha, one held-out
/// capture and a `bgmatte.toml` wired to them.
pub fn cmd_toy_data(out: &Path, opts: &ToyDataOptions) -> CliResult<()> {
    let s = opts.size;
    for i in 0..opts.assets as u64 {
        let a = toy_asset(s, opts.seed + i);
        let dir = out.join("assets").join(&a.id);
        write_image_u16(&dir.join("foreground.png"), &a.fg)?;
        write_plane_u16(&dir.join("alpha.png"), &a.alpha)?;
    }
    for i in 0..opts.backgrounds as u64 {
        let bg = textured_background(s, s, opts.seed + BG_SEEDS + i);
        write_image_u16(&out.join("backgrounds").join(format!("bg{i:02}.png")), &bg)?;
    }
    for i in 0..opts.captures as u64 {
        write_capture(&out.join("captures").join(format!("cap{i:02}")), s, opts.seed + CAPTURE_SEEDS + i)?;
    }
    write_capture(&out.join("holdout").join("cap00"), s, opts.seed + HOLDOUT_SEED)?;
    std::fs::write(out.join("bgmatte.toml"), sample_config(s))?;
    info!("toy workspace written to {}", out.display());
    Ok(())
}
