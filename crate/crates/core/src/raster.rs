//! In-memory rasters.
//!
//! [`Image`] is an interleaved RGB raster, [`Plane`] a single-channel one.
//! Every value lives in `[0, 1]`; constructors either validate or clamp.

use crate::error::{MattingError, Result};

/// Single-channel raster with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Per-pixel opacity of the foreground layer.
pub type AlphaMatte = Plane;
/// Luma image used for motion cues.
pub type GrayImage = Plane;
/// Blurred, morphologically regularised person mask.
pub type SoftSegmentation = Plane;
/// Per-pixel person-class probability.
pub type ProbMap = Plane;

/// Interleaved RGB raster (row-major, 3 channels) with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(MattingError::contract(format!(
            "raster dimensions must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

fn check_range(data: &[f32]) -> Result<()> {
    if let Some((i, v)) = data
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(MattingError::contract(format!(
            "raster value {v} at index {i} outside [0, 1]"
        )));
    }
    Ok(())
}

fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

impl Plane {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0, "raster dimensions must be positive");
        assert!((0.0..=1.0).contains(&value), "fill value outside [0, 1]");
        Plane {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(MattingError::contract(format!(
                "plane buffer has {} values, expected {}",
                data.len(),
                height * width
            )));
        }
        check_range(&data)?;
        Ok(Plane { height, width, data })
    }

    /// Like [`Plane::from_vec`] but clamps out-of-range values (NaN becomes 0).
    pub fn from_vec_clamped(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        data.iter_mut().for_each(|v| *v = clamp01(*v));
        Self::from_vec(height, width, data)
    }

    /// Builds a plane from `f(y, x)`, clamping the results.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        assert!(height > 0 && width > 0, "raster dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(clamp01(f(y, x)));
            }
        }
        Plane { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the raw buffer. Callers keep values inside `[0, 1]`.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        debug_assert!((0.0..=1.0).contains(&v));
        self.data[y * self.width + x] = v;
    }

    pub fn is_valid(&self) -> bool {
        check_range(&self.data).is_ok()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| clamp01(f(v))).collect(),
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Plane> {
        check_crop(self.size(), y0, x0, height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for y in y0..y0 + height {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
        }
        Ok(Plane { height, width, data })
    }

    pub fn flip_horizontal(&self) -> Plane {
        let mut out = self.clone();
        for y in 0..self.height {
            out.data[y * self.width..(y + 1) * self.width].reverse();
        }
        out
    }

    /// Bilinear resize with half-pixel centres.
    pub fn resize(&self, height: usize, width: usize) -> Plane {
        assert!(height > 0 && width > 0, "raster dimensions must be positive");
        let data = resize_bilinear(&self.data, self.height, self.width, 1, height, width);
        Plane { height, width, data }
    }

    /// Bilinear sample at continuous pixel coordinates; coordinates outside
    /// the raster read the nearest border pixel.
    pub fn sample(&self, y: f64, x: f64) -> f32 {
        let mut out = [0.0f32];
        sample_bilinear(&self.data, self.height, self.width, 1, y, x, &mut out);
        out[0]
    }
}

impl Image {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, [0.0; 3])
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        assert!(height > 0 && width > 0, "raster dimensions must be positive");
        assert!(
            rgb.iter().all(|v| (0.0..=1.0).contains(v)),
            "fill colour outside [0, 1]"
        );
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Image { height, width, data }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(MattingError::contract(format!(
                "image buffer has {} values, expected {}",
                data.len(),
                height * width * 3
            )));
        }
        check_range(&data)?;
        Ok(Image { height, width, data })
    }

    /// Like [`Image::from_vec`] but clamps out-of-range values (NaN becomes 0).
    pub fn from_vec_clamped(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        data.iter_mut().for_each(|v| *v = clamp01(*v));
        Self::from_vec(height, width, data)
    }

    /// Builds an image from `f(y, x) -> rgb`, clamping the results.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        assert!(height > 0 && width > 0, "raster dimensions must be positive");
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(y, x).iter().map(|&v| clamp01(v)));
            }
        }
        Image { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the interleaved buffer. Callers keep values inside `[0, 1]`.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        debug_assert!(rgb.iter().all(|v| (0.0..=1.0).contains(v)));
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn is_valid(&self) -> bool {
        check_range(&self.data).is_ok()
    }

    /// One channel as a plane.
    pub fn channel(&self, c: usize) -> Plane {
        assert!(c < 3);
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Image> {
        check_crop(self.size(), y0, x0, height, width)?;
        let mut data = Vec::with_capacity(height * width * 3);
        for y in y0..y0 + height {
            let row = y * self.width;
            data.extend_from_slice(&self.data[(row + x0) * 3..(row + x0 + width) * 3]);
        }
        Ok(Image { height, width, data })
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, x, self.pixel(y, self.width - 1 - x));
            }
        }
        out
    }

    /// Bilinear resize with half-pixel centres.
    pub fn resize(&self, height: usize, width: usize) -> Image {
        assert!(height > 0 && width > 0, "raster dimensions must be positive");
        let data = resize_bilinear(&self.data, self.height, self.width, 3, height, width);
        Image { height, width, data }
    }

    /// Bilinear sample at continuous pixel coordinates with border clamping.
    pub fn sample(&self, y: f64, x: f64) -> [f32; 3] {
        let mut out = [0.0f32; 3];
        sample_bilinear(&self.data, self.height, self.width, 3, y, x, &mut out);
        out
    }
}

fn check_crop(size: (usize, usize), y0: usize, x0: usize, h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || y0 + h > size.0 || x0 + w > size.1 {
        return Err(MattingError::contract(format!(
            "crop {h}x{w} at ({y0}, {x0}) does not fit in {}x{}",
            size.0, size.1
        )));
    }
    Ok(())
}

/// Bilinear sample of an interleaved raster at `(y, x)` (pixel centres at
/// integer coordinates), clamping coordinates to the raster.
pub(crate) fn sample_bilinear(
    data: &[f32],
    height: usize,
    width: usize,
    channels: usize,
    y: f64,
    x: f64,
    out: &mut [f32],
) {
    let yc = y.clamp(0.0, (height - 1) as f64);
    let xc = x.clamp(0.0, (width - 1) as f64);
    let y0 = yc.floor() as usize;
    let x0 = xc.floor() as usize;
    let y1 = (y0 + 1).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let fy = (yc - y0 as f64) as f32;
    let fx = (xc - x0 as f64) as f32;
    for c in 0..channels {
        let p = |yy: usize, xx: usize| data[(yy * width + xx) * channels + c];
        let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
        let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
        out[c] = clamp01(top * (1.0 - fy) + bot * fy);
    }
}

pub(crate) fn resize_bilinear(
    data: &[f32],
    height: usize,
    width: usize,
    channels: usize,
    new_height: usize,
    new_width: usize,
) -> Vec<f32> {
    if (height, width) == (new_height, new_width) {
        return data.to_vec();
    }
    let sy = height as f64 / new_height as f64;
    let sx = width as f64 / new_width as f64;
    let mut out = vec![0.0f32; new_height * new_width * channels];
    let mut px = vec![0.0f32; channels];
    for y in 0..new_height {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..new_width {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            sample_bilinear(data, height, width, channels, src_y, src_x, &mut px);
            let o = (y * new_width + x) * channels;
            out[o..o + channels].copy_from_slice(&px);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_out_of_range() {
        assert!(Plane::from_vec(1, 2, vec![0.0, 1.5]).is_err());
        assert!(Image::from_vec(1, 1, vec![0.0, -0.1, 0.2]).is_err());
        assert!(Plane::from_vec(0, 2, vec![]).is_err());
    }

    #[test]
    fn clamped_constructor_clamps_and_zeroes_nan() {
        let p = Plane::from_vec_clamped(1, 3, vec![-1.0, 2.0, f32::NAN]).unwrap();
        assert_eq!(p.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn crop_and_flip() {
        let img = Image::from_fn(3, 4, |y, x| [y as f32 / 4.0, x as f32 / 4.0, 0.0]);
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.pixel(0, 0), img.pixel(1, 1));
        assert_eq!(c.pixel(1, 1), img.pixel(2, 2));
        assert!(img.crop(2, 2, 2, 3).is_err());
        let f = img.flip_horizontal();
        assert_eq!(f.pixel(0, 0), img.pixel(0, 3));
    }

    #[test]
    fn resize_identity_and_constant() {
        let p = Plane::filled(5, 7, 0.3);
        assert_eq!(p.resize(5, 7), p);
        let r = p.resize(11, 3);
        assert!(r.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn sample_clamps_to_border() {
        let p = Plane::from_fn(2, 2, |y, x| (y * 2 + x) as f32 / 3.0);
        assert_eq!(p.sample(-5.0, -5.0), p.get(0, 0));
        assert_eq!(p.sample(9.0, 9.0), p.get(1, 1));
        assert!((p.sample(0.5, 0.5) - 0.5).abs() < 1e-6);
    }
}
