//! PNG reading and writing for rasters.
//!
//! Colour images load as RGB in [0, 1] whatever their bit depth;
//! single-channel rasters load through 16-bit luma.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bgmatte_core::{Image, Plane};
use image::{ImageBuffer, Luma, Rgb};

pub fn read_image(path: &Path) -> Result<Image> {
    let img = image::open(path).with_context(|| format!("cannot read image {}", path.display()))?;
    let rgb = img.into_rgb32f();
    let (w, h) = rgb.dimensions();
    Ok(Image::from_vec_clamped(h as usize, w as usize, rgb.into_raw())?)
}

pub fn read_plane(path: &Path) -> Result<Plane> {
    let img = image::open(path).with_context(|| format!("cannot read image {}", path.display()))?;
    let luma = img.into_luma16();
    let (w, h) = luma.dimensions();
    let data = luma.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
    Ok(Plane::from_vec(h as usize, w as usize, data)?)
}

fn quantize<const MAX: u32>(v: f32) -> u32 {
    (v.clamp(0.0, 1.0) * MAX as f32).round() as u32
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}

/// 8-bit RGB.
pub fn write_image_u8(path: &Path, img: &Image) -> Result<()> {
    ensure_parent(path)?;
    let data: Vec<u8> = img.data().iter().map(|&v| quantize::<255>(v) as u8).collect();
    let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data)
        .context("image buffer size mismatch")?;
    buf.save(path).with_context(|| format!("cannot write {}", path.display()))
}

/// 16-bit RGB, used for dataset storage.
pub fn write_image_u16(path: &Path, img: &Image) -> Result<()> {
    ensure_parent(path)?;
    let data: Vec<u16> = img.data().iter().map(|&v| quantize::<65535>(v) as u16).collect();
    let buf: ImageBuffer<Rgb<u16>, _> = ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data)
        .context("image buffer size mismatch")?;
    buf.save(path).with_context(|| format!("cannot write {}", path.display()))
}

/// 16-bit single channel.
pub fn write_plane_u16(path: &Path, p: &Plane) -> Result<()> {
    ensure_parent(path)?;
    let data: Vec<u16> = p.data().iter().map(|&v| quantize::<65535>(v) as u16).collect();
    let buf: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(p.width() as u32, p.height() as u32, data)
        .context("image buffer size mismatch")?;
    buf.save(path).with_context(|| format!("cannot write {}", path.display()))
}

/// Sorted `*.png` files directly inside `dir`.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Sorted subdirectories of `dir`.
pub fn list_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn file_stem(path: &Path) -> Result<String> {
    match path.file_stem().and_then(|s| s.to_str()) {
        Some(s) => Ok(s.to_string()),
        None => bail!("{} has no usable file name", path.display()),
    }
}

/// Writes `contents` only when the file is missing or different.
pub fn write_if_changed(path: &Path, contents: &str) -> Result<bool> {
    if std::fs::read_to_string(path).is_ok_and(|old| old == contents) {
        return Ok(false);
    }
    ensure_parent(path)?;
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(true)
}
