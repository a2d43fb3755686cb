use crate::error::{check_same_size, Result};
use crate::preprocess::morphology::{binarize, dilate, erode};
use crate::raster::{AlphaMatte, ProbMap};

/// Three-way pixel label consumed by trimap-based matting methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrimapLabel {
    Background,
    Unknown,
    Foreground,
}

impl TrimapLabel {
    /// Grey level used when writing trimaps: 0, 128 or 255.
    pub fn to_u8(self) -> u8 {
        match self {
            TrimapLabel::Background => 0,
            TrimapLabel::Unknown => 128,
            TrimapLabel::Foreground => 255,
        }
    }

    /// Nearest label for a grey level.
    pub fn from_u8(v: u8) -> Self {
        match v {
            0..=63 => TrimapLabel::Background,
            64..=191 => TrimapLabel::Unknown,
            _ => TrimapLabel::Foreground,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trimap {
    height: usize,
    width: usize,
    labels: Vec<TrimapLabel>,
}

impl Trimap {
    pub fn from_labels(height: usize, width: usize, labels: Vec<TrimapLabel>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(crate::MattingError::contract(format!(
                "trimap needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Trimap { height, width, labels })
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[TrimapLabel] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> TrimapLabel {
        self.labels[y * self.width + x]
    }

    pub fn count(&self, label: TrimapLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.to_u8()).collect()
    }
}

/// Probability > 0.95 is foreground, < 0.05 background, the rest unknown.
pub fn auto_trimap(prob: &ProbMap) -> Trimap {
    let labels = prob
        .data()
        .iter()
        .map(|&p| {
            if p > 0.95 {
                TrimapLabel::Foreground
            } else if p < 0.05 {
                TrimapLabel::Background
            } else {
                TrimapLabel::Unknown
            }
        })
        .collect();
    Trimap {
        height: prob.height(),
        width: prob.width(),
        labels,
    }
}

/// Trimap from a ground-truth matte: the eroded mask is foreground, the band
/// between erosion and dilation (both by `steps`) is unknown.
pub fn trimap_from_alpha(alpha: &AlphaMatte, steps: usize) -> Result<Trimap> {
    if steps == 0 {
        return Err(crate::MattingError::contract("trimap_from_alpha needs steps >= 1"));
    }
    let bin = binarize(alpha);
    let grown = dilate(&bin, steps);
    let shrunk = erode(&bin, steps);
    check_same_size("trimap", grown.size(), shrunk.size())?;
    let labels = grown
        .data()
        .iter()
        .zip(shrunk.data())
        .map(|(&g, &s)| {
            if s > 0.5 {
                TrimapLabel::Foreground
            } else if g > 0.5 {
                TrimapLabel::Unknown
            } else {
                TrimapLabel::Background
            }
        })
        .collect();
    Ok(Trimap {
        height: alpha.height(),
        width: alpha.width(),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Plane;
    use TrimapLabel::*;

    #[test]
    fn auto_trimap_thresholds() {
        assert!(auto_trimap(&Plane::filled(3, 3, 1.0)).labels().iter().all(|&l| l == Foreground));
        assert!(auto_trimap(&Plane::filled(3, 3, 0.5)).labels().iter().all(|&l| l == Unknown));
        let t = auto_trimap(&Plane::from_vec(1, 3, vec![0.96, 0.04, 0.5]).unwrap());
        assert_eq!(t.labels(), &[Foreground, Background, Unknown]);
        // Boundaries are exclusive.
        let t = auto_trimap(&Plane::from_vec(1, 2, vec![0.95, 0.05]).unwrap());
        assert_eq!(t.labels(), &[Unknown, Unknown]);
    }

    #[test]
    fn trimap_from_constant_mattes() {
        let t = trimap_from_alpha(&Plane::filled(9, 7, 1.0), 3).unwrap();
        assert_eq!(t.count(Foreground), 63);
        let t = trimap_from_alpha(&Plane::zeros(9, 7), 3).unwrap();
        assert_eq!(t.count(Background), 63);
        assert!(trimap_from_alpha(&Plane::zeros(2, 2), 0).is_err());
    }

    #[test]
    fn square_band_is_two_pixels_each_side() {
        let a = Plane::from_fn(60, 60, |y, x| {
            if (20..40).contains(&y) && (20..40).contains(&x) { 1.0 } else { 0.0 }
        });
        let t = trimap_from_alpha(&a, 2).unwrap();
        // Along the middle row: BG up to 17, UNKNOWN 18..=21, FG 22..=37,
        // UNKNOWN 38..=41, BG from 42.
        let row: Vec<TrimapLabel> = (0..60).map(|x| t.get(30, x)).collect();
        for (x, l) in row.iter().enumerate() {
            let want = match x {
                0..=17 => Background,
                18..=21 => Unknown,
                22..=37 => Foreground,
                38..=41 => Unknown,
                _ => Background,
            };
            assert_eq!(*l, want, "x = {x}");
        }
        // Cross dilation cuts corners: the diagonal corner pixel (18,18) is
        // at L1 distance 4 from the square.
        assert_eq!(t.get(18, 18), Background);
        assert_eq!(t.get(19, 19), Unknown);
        assert_eq!(t.count(Foreground), 16 * 16);
    }

    #[test]
    fn u8_round_trip() {
        for l in [Background, Unknown, Foreground] {
            assert_eq!(TrimapLabel::from_u8(l.to_u8()), l);
        }
    }
}
