use crate::error::{MattingError, Result};
use crate::par;
use crate::raster::Plane;

/// Normalised 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Mirror index without repeating the edge sample (`…c b | a b c | b a…`).
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur(img: &Plane, sigma: f64) -> Result<Plane> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(MattingError::contract(format!(
            "gaussian blur sigma must be positive, got {sigma}"
        )));
    }
    let (h, w) = img.size();
    let src: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    let out = blur_f64(&src, h, w, sigma)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0) as f32)
        .collect();
    Plane::from_vec(h, w, out)
}

/// Separable Gaussian blur of an arbitrary-valued `h×w` buffer.
pub(crate) fn blur_f64(src: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0f64; h * w];
    par::for_each_chunk_mut(&mut tmp, w, |y, row| {
        let s = &src[y * w..(y + 1) * w];
        for (x, o) in row.iter_mut().enumerate() {
            *o = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * s[reflect(x as i64 + j as i64 - r, w)])
                .sum();
        }
    });
    let mut out = vec![0.0f64; h * w];
    par::for_each_chunk_mut(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * tmp[reflect(y as i64 + j as i64 - r, h) * w + x])
                .sum();
        }
    });
    out
}
