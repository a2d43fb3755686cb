//! Matte post-processing, SAD/MSE metrics and composite rendering.

use std::collections::VecDeque;

use crate::compose::composite;
use crate::error::{check_same_size, MattingError, Result};
use crate::raster::{AlphaMatte, Image, ProbMap};

/// Alpha above this value counts as part of a subject.
pub const COMPONENT_THRESHOLD: f32 = 0.05;

/// Default solid backdrop for composites.
pub const GREEN: [f32; 3] = [0.0, 177.0 / 255.0, 64.0 / 255.0];

/// 4-connected component labels. Id 0 is background; ids run from 1 in
/// raster-scan order of each component's first pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    /// `sizes[k - 1]` is the pixel count of component `k`.
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn label(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Component ids ordered by decreasing size, ties to the smaller id.
    pub fn by_size(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = (1..=self.sizes.len() as u32).collect();
        ids.sort_by(|&a, &b| self.sizes[b as usize - 1].cmp(&self.sizes[a as usize - 1]).then(a.cmp(&b)));
        ids
    }
}

pub fn label_components(mask: &[bool], height: usize, width: usize) -> ComponentLabeling {
    assert_eq!(mask.len(), height * width, "mask size");
    let mut labels = vec![0u32; mask.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(k) = queue.pop_front() {
            size += 1;
            let (y, x) = (k / width, k % width);
            let mut visit = |n: usize| {
                if mask[n] && labels[n] == 0 {
                    labels[n] = id;
                    queue.push_back(n);
                }
            };
            if y > 0 {
                visit(k - width);
            }
            if y + 1 < height {
                visit(k + width);
            }
            if x > 0 {
                visit(k - 1);
            }
            if x + 1 < width {
                visit(k + 1);
            }
        }
        sizes.push(size);
    }
    ComponentLabeling {
        height,
        width,
        labels,
        sizes,
    }
}

/// What [`postprocess_alpha_report`] kept.
#[derive(Clone, Debug, PartialEq)]
pub struct PostprocessReport {
    pub components: usize,
    pub kept: Vec<u32>,
    pub warning: Option<String>,
}

/// Keeps the `n_subjects` largest connected regions of `α > 0.05`; alpha
/// elsewhere becomes 0 and inside is unchanged.
pub fn postprocess_alpha_report(alpha: &AlphaMatte, n_subjects: usize) -> Result<(AlphaMatte, PostprocessReport)> {
    if n_subjects == 0 {
        return Err(MattingError::contract("n_subjects must be at least 1"));
    }
    let (h, w) = alpha.size();
    let mask: Vec<bool> = alpha.data().iter().map(|&a| a > COMPONENT_THRESHOLD).collect();
    let lab = label_components(&mask, h, w);
    if lab.count() == 0 {
        let warning = format!("no region with alpha > {COMPONENT_THRESHOLD}; returning an empty matte");
        log::warn!("{warning}");
        return Ok((
            AlphaMatte::zeros(h, w),
            PostprocessReport {
                components: 0,
                kept: Vec::new(),
                warning: Some(warning),
            },
        ));
    }
    let kept: Vec<u32> = lab.by_size().into_iter().take(n_subjects).collect();
    let mut keep = vec![false; lab.count() + 1];
    for &id in &kept {
        keep[id as usize] = true;
    }
    let mut out = alpha.clone();
    for (v, &l) in out.data_mut().iter_mut().zip(&lab.labels) {
        if !keep[l as usize] {
            *v = 0.0;
        }
    }
    Ok((
        out,
        PostprocessReport {
            components: lab.count(),
            kept,
            warning: None,
        },
    ))
}

pub fn postprocess_alpha(alpha: &AlphaMatte, n_subjects: usize) -> Result<AlphaMatte> {
    postprocess_alpha_report(alpha, n_subjects).map(|(a, _)| a)
}

/// Number of disjoint regions where the person probability exceeds 0.5
/// (at least 1).
pub fn count_subjects(prob: &ProbMap) -> usize {
    let mask: Vec<bool> = prob.data().iter().map(|&p| p > 0.5).collect();
    label_components(&mask, prob.height(), prob.width()).count().max(1)
}

/// Sum of absolute differences, divided by 1000.
pub fn sad(alpha: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    check_same_size("sad operands", gt.size(), alpha.size())?;
    Ok(sad_values(widen(alpha, gt)))
}

/// Mean squared error in units of 10⁻².
pub fn mse(alpha: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    check_same_size("mse operands", gt.size(), alpha.size())?;
    Ok(mse_values(widen(alpha, gt)))
}

fn widen<'a>(a: &'a AlphaMatte, b: &'a AlphaMatte) -> impl Iterator<Item = (f64, f64)> + 'a {
    a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64, y as f64))
}

/// [`sad`] over `(prediction, truth)` pairs in double precision.
pub fn sad_values(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    pairs.into_iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / 1000.0
}

/// [`mse`] over `(prediction, truth)` pairs in double precision; zero for
/// no pairs.
pub fn mse_values(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        s += (a - b) * (a - b);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        100.0 * s / n as f64
    }
}

/// Target of a composite.
#[derive(Clone, Debug, PartialEq)]
pub enum Backdrop {
    Image(Image),
    Solid([f32; 3]),
}

impl Default for Backdrop {
    fn default() -> Self {
        Backdrop::Solid(GREEN)
    }
}

/// Composites `(F, α)` over a background image or a solid colour.
pub fn render_composite(fg: &Image, alpha: &AlphaMatte, target: &Backdrop) -> Result<Image> {
    match target {
        Backdrop::Image(bg) => composite(fg, alpha, bg),
        Backdrop::Solid(rgb) => composite(fg, alpha, &Image::filled(fg.height(), fg.width(), *rgb)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn from_rows(rows: &[&str]) -> AlphaMatte {
        let h = rows.len();
        let w = rows[0].len();
        AlphaMatte::from_fn(h, w, |y, x| match rows[y].as_bytes()[x] {
            b'#' => 1.0,
            b'+' => 0.5,
            _ => 0.0,
        })
    }

    #[test]
    fn labels_follow_raster_order() {
        let a = from_rows(&["#.#", "#.#", "..#", "#.."]);
        let mask: Vec<bool> = a.data().iter().map(|&v| v > 0.05).collect();
        let lab = label_components(&mask, 4, 3);
        assert_eq!(lab.labels, vec![1, 0, 2, 1, 0, 2, 0, 0, 2, 3, 0, 0]);
        assert_eq!(lab.sizes, vec![2, 3, 1]);
        assert_eq!(lab.by_size(), vec![2, 1, 3]);
    }

    #[test]
    fn diagonal_pixels_are_separate() {
        let a = from_rows(&["#.", ".#"]);
        let (out, rep) = postprocess_alpha_report(&a, 1).unwrap();
        assert_eq!(rep.components, 2);
        // Equal sizes: the smaller id wins.
        assert_eq!(out, from_rows(&["#.", ".."]));
    }

    #[test]
    fn empty_matte_warns() {
        let a = AlphaMatte::filled(5, 5, 0.04);
        let (out, rep) = postprocess_alpha_report(&a, 1).unwrap();
        assert_eq!(out, AlphaMatte::zeros(5, 5));
        assert!(rep.warning.is_some());
        assert!(postprocess_alpha(&a, 0).is_err());
    }

    #[test]
    fn metric_closed_forms() {
        let gt = AlphaMatte::zeros(10, 10);
        let mut one = gt.clone();
        one.set(3, 4, 1.0);
        assert!((sad(&one, &gt).unwrap() - 0.001).abs() < 1e-12);
        assert!((mse(&one, &gt).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(sad(&gt, &gt).unwrap(), 0.0);
        assert!(sad(&gt, &AlphaMatte::zeros(10, 9)).is_err());
        let n = 512 * 512;
        let off = std::iter::repeat_n((0.01, 0.0), n);
        assert!((sad_values(off.clone()) - 2.62144).abs() < 1e-9);
        assert!((mse_values(off) - 0.01).abs() < 1e-12);
        assert_eq!(mse_values(std::iter::empty()), 0.0);
    }

    #[test]
    fn solid_backdrop() {
        let fg = Image::filled(3, 3, [0.2, 0.4, 0.6]);
        let out = render_composite(&fg, &AlphaMatte::zeros(3, 3), &Backdrop::default()).unwrap();
        assert!(out.data().chunks(3).all(|p| p == GREEN));
        let out = render_composite(&fg, &AlphaMatte::filled(3, 3, 1.0), &Backdrop::default()).unwrap();
        assert_eq!(out, fg);
    }

    #[test]
    fn subject_count_from_probability() {
        let p = from_rows(&["##..#", "##..#", ".....", "+++.."]);
        assert_eq!(count_subjects(&p), 2);
        assert_eq!(count_subjects(&AlphaMatte::zeros(3, 3)), 1);
    }

    proptest! {
        #[test]
        fn metrics_are_symmetric(a in proptest::collection::vec(0.0f32..=1.0, 36), b in proptest::collection::vec(0.0f32..=1.0, 36)) {
            let a = AlphaMatte::from_vec(6, 6, a).unwrap();
            let b = AlphaMatte::from_vec(6, 6, b).unwrap();
            prop_assert_eq!(sad(&a, &b).unwrap(), sad(&b, &a).unwrap());
            prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
            prop_assert_eq!(sad(&a, &b).unwrap() == 0.0, a == b);
        }
    }
}
