//! Procedural toy scenes: textured backgrounds and soft-edged geometric
//! subjects. Used for smoke tests, benchmarks and the demo pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::MatteAsset;
use crate::compose::composite;
use crate::preprocess::gaussian_blur;
use crate::raster::{AlphaMatte, Image, Plane, ProbMap};

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Background with sinusoidal texture and sharp-edged rectangles (so corner
/// detectors have something to find).
pub fn textured_background(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6267_7465_7874);
    let base: [f64; 3] = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
    let waves: Vec<(f64, f64, f64, usize)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.05..0.5),
                rng.random_range(0.05..0.5),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0..3),
            )
        })
        .collect();
    let n_rects = 6 + (height * width) / 2048;
    let rects: Vec<(f64, f64, f64, f64, [f64; 3])> = (0..n_rects)
        .map(|_| {
            let rh = rng.random_range(3.0..(height as f64 / 4.0).max(4.0));
            let rw = rng.random_range(3.0..(width as f64 / 4.0).max(4.0));
            let y0 = rng.random_range(0.0..height as f64);
            let x0 = rng.random_range(0.0..width as f64);
            let col = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            (y0, x0, rh, rw, col)
        })
        .collect();
    Image::from_fn(height, width, |y, x| {
        let (yf, xf) = (y as f64, x as f64);
        let mut px = base;
        for &(fy, fx, ph, c) in &waves {
            px[c] += 0.12 * (fy * yf + fx * xf + ph).sin();
        }
        for &(y0, x0, rh, rw, col) in &rects {
            if yf >= y0 && yf < y0 + rh && xf >= x0 && xf < x0 + rw {
                px = [0.5 * px[0] + 0.5 * col[0], 0.5 * px[1] + 0.5 * col[1], 0.5 * px[2] + 0.5 * col[2]];
            }
        }
        [px[0] as f32, px[1] as f32, px[2] as f32]
    })
}

/// Soft-edged subject: an ellipse "torso" with a round "head", shaded with a
/// colour gradient and stripes. The subject is roughly centred and covers a
/// fraction of the frame controlled by the seed.
pub fn toy_subject(height: usize, width: usize, seed: u64) -> (Image, AlphaMatte) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7375_626a);
    let (h, w) = (height as f64, width as f64);
    let cy = h * rng.random_range(0.55..0.65);
    let cx = w * rng.random_range(0.4..0.6);
    let ry = h * rng.random_range(0.22..0.3);
    let rx = w * rng.random_range(0.12..0.2);
    let head_r = rx * rng.random_range(0.6..0.8);
    let head_cy = cy - ry - head_r * 0.8;
    let edge = rng.random_range(1.0..3.0);
    let c0 = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
    let c1 = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
    let stripe = rng.random_range(0.2..0.6);
    let alpha = Plane::from_fn(height, width, |y, x| {
        let (yf, xf) = (y as f64, x as f64);
        // Approximate signed distance (pixels, positive inside).
        let e = (((yf - cy) / ry).powi(2) + ((xf - cx) / rx).powi(2)).sqrt();
        let d_body = (1.0 - e) * rx.min(ry);
        let d_head = head_r - ((yf - head_cy).powi(2) + (xf - cx).powi(2)).sqrt();
        smoothstep(-edge, edge, d_body.max(d_head)) as f32
    });
    let fg = Image::from_fn(height, width, |y, x| {
        let t = y as f64 / h;
        let s = 0.5 + 0.5 * (x as f64 * stripe).sin();
        let mut px = [0.0f32; 3];
        for c in 0..3 {
            px[c] = ((1.0 - t) * c0[c] + t * c1[c] + 0.1 * (s - 0.5)) as f32;
        }
        px
    });
    (fg, alpha)
}

pub fn toy_asset(size: usize, seed: u64) -> MatteAsset {
    let (fg, alpha) = toy_subject(size, size, seed);
    MatteAsset::new(format!("toy{seed:03}"), fg, alpha).expect("toy subject is non-empty")
}

/// A captured toy scene: the frame, the clean plate, the ground truth and a
/// person-probability map such as a segmenter would produce.
#[derive(Clone, Debug)]
pub struct ToyScene {
    pub image: Image,
    pub background: Image,
    pub foreground: Image,
    pub alpha: AlphaMatte,
    pub prob: ProbMap,
}

pub fn toy_scene(size: usize, seed: u64) -> ToyScene {
    let (foreground, alpha) = toy_subject(size, size, seed);
    let background = textured_background(size, size, seed.wrapping_mul(7919).wrapping_add(1));
    let image = composite(&foreground, &alpha, &background).expect("same size");
    let prob = gaussian_blur(&alpha, 1.5).expect("positive sigma");
    ToyScene {
        image,
        background,
        foreground,
        alpha,
        prob,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subject_is_soft_and_partial() {
        let (_, a) = toy_subject(64, 64, 1);
        let on = a.data().iter().filter(|&&v| v > 0.99).count();
        let soft = a.data().iter().filter(|&&v| v > 0.01 && v < 0.99).count();
        assert!(on > 200 && on < 64 * 64 / 2, "{on}");
        assert!(soft > 20);
    }

    #[test]
    fn scenes_are_deterministic() {
        let a = toy_scene(48, 5);
        let b = toy_scene(48, 5);
        assert_eq!(a.image, b.image);
        assert_ne!(a.image, toy_scene(48, 6).image);
    }
}
