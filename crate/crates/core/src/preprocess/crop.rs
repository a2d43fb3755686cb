use crate::error::{MattingError, Result};
use crate::raster::{Image, Plane, ProbMap};

/// Square crop placed in a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropWindow {
    pub y0: usize,
    pub x0: usize,
    pub size: usize,
}

impl CropWindow {
    /// Square window of side `size` centred on the bounding box of
    /// `prob > 0.5`, shifted to stay inside the frame.
    pub fn around_subject(prob: &ProbMap, size: usize) -> Result<Self> {
        let (h, w) = prob.size();
        if size == 0 || size > h || size > w {
            return Err(MattingError::contract(format!(
                "crop size {size} does not fit in a {h}x{w} frame"
            )));
        }
        let (y_min, x_min, y_max, x_max) = subject_bbox(prob).ok_or(MattingError::SubjectNotFound)?;
        // Centre in doubled coordinates keeps the arithmetic integral.
        let cy2 = y_min + y_max + 1;
        let cx2 = x_min + x_max + 1;
        let place = |c2: usize, extent: usize| -> usize {
            let start = (c2 as i64 - size as i64) / 2;
            start.clamp(0, (extent - size) as i64) as usize
        };
        Ok(CropWindow {
            y0: place(cy2, h),
            x0: place(cx2, w),
            size,
        })
    }

    pub fn crop_image(&self, img: &Image) -> Result<Image> {
        img.crop(self.y0, self.x0, self.size, self.size)
    }

    pub fn crop_plane(&self, p: &Plane) -> Result<Plane> {
        p.crop(self.y0, self.x0, self.size, self.size)
    }

    /// Writes a cropped plane back into a zero-filled frame.
    pub fn paste_plane(&self, crop: &Plane, frame: (usize, usize)) -> Plane {
        let mut out = Plane::zeros(frame.0, frame.1);
        for y in 0..self.size {
            for x in 0..self.size {
                out.set(self.y0 + y, self.x0 + x, crop.get(y, x));
            }
        }
        out
    }

    /// Writes a cropped image back into `base`.
    pub fn paste_image(&self, crop: &Image, base: &Image) -> Image {
        let mut out = base.clone();
        for y in 0..self.size {
            for x in 0..self.size {
                out.set_pixel(self.y0 + y, self.x0 + x, crop.pixel(y, x));
            }
        }
        out
    }
}

/// Inclusive bounding box `(y_min, x_min, y_max, x_max)` of `prob > 0.5`.
pub fn subject_bbox(prob: &ProbMap) -> Option<(usize, usize, usize, usize)> {
    let (h, w) = prob.size();
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for y in 0..h {
        for x in 0..w {
            if prob.get(y, x) > 0.5 {
                bbox = Some(match bbox {
                    None => (y, x, y, x),
                    Some((a, b, c, d)) => (a.min(y), b.min(x), c.max(y), d.max(x)),
                });
            }
        }
    }
    bbox
}

/// Square crop of side `size` around the subject; returns the crop and its
/// top-left `(y, x)` offset for pasting results back.
pub fn crop_around_subject(frame: &Image, prob: &ProbMap, size: usize) -> Result<(Image, (usize, usize))> {
    crate::error::check_same_size("probability map", frame.size(), prob.size())?;
    let win = CropWindow::around_subject(prob, size)?;
    Ok((win.crop_image(frame)?, (win.y0, win.x0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(h: usize, w: usize, ys: std::ops::Range<usize>, xs: std::ops::Range<usize>) -> Plane {
        Plane::from_fn(h, w, |y, x| if ys.contains(&y) && xs.contains(&x) { 1.0 } else { 0.0 })
    }

    #[test]
    fn centred_subject_in_hd_frame() {
        let frame = Image::zeros(1080, 1920);
        let prob = blob(1080, 1920, 300..800, 700..1100);
        let (crop, (y0, x0)) = crop_around_subject(&frame, &prob, 512).unwrap();
        assert_eq!(crop.size(), (512, 512));
        // bbox rows 300..=799 and cols 700..=1099 -> centres 550 and 900.
        assert_eq!((y0 + 256, x0 + 256), (550, 900));
    }

    #[test]
    fn subject_at_left_edge_is_clamped() {
        let prob = blob(200, 400, 50..150, 0..20);
        let win = CropWindow::around_subject(&prob, 128).unwrap();
        assert_eq!(win.x0, 0);
        assert!(win.y0 + 128 <= 200);
    }

    #[test]
    fn size_equal_to_height_spans_it() {
        let prob = blob(100, 300, 10..20, 140..160);
        let win = CropWindow::around_subject(&prob, 100).unwrap();
        assert_eq!(win.y0, 0);
        assert_eq!(win.x0, 100);
    }

    #[test]
    fn empty_subject_and_oversized_crop_fail() {
        let prob = Plane::filled(50, 50, 0.5);
        assert!(matches!(CropWindow::around_subject(&prob, 20), Err(MattingError::SubjectNotFound)));
        assert!(CropWindow::around_subject(&blob(50, 50, 0..5, 0..5), 51).is_err());
    }

    #[test]
    fn paste_restores_position() {
        let prob = blob(40, 40, 10..20, 10..20);
        let win = CropWindow::around_subject(&prob, 16).unwrap();
        let c = win.crop_plane(&prob).unwrap();
        assert_eq!(win.paste_plane(&c, (40, 40)), prob);
    }
}
