//! Compositing algebra: `I = αF + (1 − α)B` and its inverses.

use crate::error::{check_same_size, Result};
use crate::par;
use crate::raster::{AlphaMatte, GrayImage, Image, Plane};

/// Alpha below which [`solve_foreground`] falls back to `F = I`.
pub const DEFAULT_FOREGROUND_EPS: f32 = 1e-3;

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Blends `fg` over `bg` with per-pixel opacity `alpha`.
pub fn composite(fg: &Image, alpha: &AlphaMatte, bg: &Image) -> Result<Image> {
    check_same_size("composite background", fg.size(), bg.size())?;
    check_same_size("composite alpha", fg.size(), alpha.size())?;
    let mut out = vec![0.0f32; fg.data().len()];
    let (f, b, a) = (fg.data(), bg.data(), alpha.data());
    par::for_each_chunk_mut(&mut out, 3 * fg.width(), |row, chunk| {
        let base = row * fg.width();
        for (x, px) in chunk.chunks_exact_mut(3).enumerate() {
            let p = base + x;
            let al = a[p] as f64;
            for c in 0..3 {
                let v = al * f[3 * p + c] as f64 + (1.0 - al) * b[3 * p + c] as f64;
                debug_assert!((0.0..=1.0 + 1e-12).contains(&v));
                px[c] = v as f32;
            }
        }
    });
    Image::from_vec(fg.height(), fg.width(), out)
}

/// Per-pixel absolute residual `|I − αF − (1 − α)B|` of the compositing equation.
pub fn composite_residual(img: &Image, fg: &Image, alpha: &AlphaMatte, bg: &Image) -> Result<Image> {
    check_same_size("residual foreground", img.size(), fg.size())?;
    check_same_size("residual background", img.size(), bg.size())?;
    check_same_size("residual alpha", img.size(), alpha.size())?;
    let (i, f, b, a) = (img.data(), fg.data(), bg.data(), alpha.data());
    let mut out = vec![0.0f32; i.len()];
    par::fill_indexed(&mut out, |k| {
        let al = a[k / 3] as f64;
        (i[k] as f64 - al * f[k] as f64 - (1.0 - al) * b[k] as f64).abs() as f32
    });
    // |I - C| with I, C in [0,1] stays in [0,1].
    Image::from_vec(img.height(), img.width(), out)
}

/// Inverts the compositing equation for the foreground.
///
/// Where `alpha > eps`, `F = clamp((I − (1 − α)B) / α, 0, 1)`; elsewhere the
/// foreground is undetermined and `F = I`.
pub fn solve_foreground(img: &Image, alpha: &AlphaMatte, bg: &Image, eps: f32) -> Result<Image> {
    check_same_size("solve_foreground background", img.size(), bg.size())?;
    check_same_size("solve_foreground alpha", img.size(), alpha.size())?;
    if !(eps > 0.0) {
        return Err(crate::MattingError::contract(format!(
            "solve_foreground eps must be positive, got {eps}"
        )));
    }
    let (i, b, a) = (img.data(), bg.data(), alpha.data());
    let mut out = vec![0.0f32; i.len()];
    par::fill_indexed(&mut out, |k| {
        let al = a[k / 3];
        if al > eps {
            let al = al as f64;
            ((i[k] as f64 - (1.0 - al) * b[k] as f64) / al).clamp(0.0, 1.0) as f32
        } else {
            i[k]
        }
    });
    Image::from_vec(img.height(), img.width(), out)
}

/// Rec.601 luma.
pub fn to_grayscale(img: &Image) -> GrayImage {
    let d = img.data();
    let mut out = vec![0.0f32; img.height() * img.width()];
    par::fill_indexed(&mut out, |p| {
        let [r, g, b] = [d[3 * p] as f64, d[3 * p + 1] as f64, d[3 * p + 2] as f64];
        (LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b).clamp(0.0, 1.0) as f32
    });
    Plane::from_vec(img.height(), img.width(), out).expect("luma of a valid image is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::MattingError;
    use proptest::prelude::*;

    fn img1(rgb: [f32; 3]) -> Image {
        Image::filled(1, 1, rgb)
    }

    #[test]
    fn composite_identity_cases() {
        let fg = Image::from_fn(4, 5, |y, x| [y as f32 / 4.0, x as f32 / 5.0, 0.5]);
        let bg = Image::from_fn(4, 5, |y, x| [x as f32 / 5.0, 0.1, y as f32 / 4.0]);
        assert_eq!(composite(&fg, &Plane::filled(4, 5, 1.0), &bg).unwrap(), fg);
        assert_eq!(composite(&fg, &Plane::filled(4, 5, 0.0), &bg).unwrap(), bg);
    }

    #[test]
    fn composite_scalar() {
        let out = composite(&img1([1.0; 3]), &Plane::filled(1, 1, 0.25), &img1([0.0; 3])).unwrap();
        assert_eq!(out.pixel(0, 0), [0.25; 3]);
    }

    #[test]
    fn composite_reports_mismatched_dimension() {
        let err = composite(&Image::zeros(2, 3), &Plane::zeros(2, 4), &Image::zeros(2, 3)).unwrap_err();
        match err {
            MattingError::SizeMismatch { dimension, expected, found, .. } => {
                assert_eq!((dimension, expected, found), ("width", 3, 4));
            }
            e => panic!("unexpected error {e}"),
        }
        let err = composite(&Image::zeros(2, 3), &Plane::zeros(2, 3), &Image::zeros(5, 3)).unwrap_err();
        assert!(err.to_string().contains("height"));
    }

    #[test]
    fn residual_zero_on_exact_recomposition_and_unit_case() {
        let fg = Image::from_fn(3, 3, |y, x| [0.2 * y as f32, 0.1 * x as f32, 0.7]);
        let bg = Image::filled(3, 3, [0.3, 0.9, 0.1]);
        let a = Plane::from_fn(3, 3, |y, x| (y + x) as f32 / 4.0);
        let img = composite(&fg, &a, &bg).unwrap();
        let r = composite_residual(&img, &fg, &a, &bg).unwrap();
        assert!(r.data().iter().all(|&v| v < 1e-7));

        let r = composite_residual(&img1([1.0; 3]), &img1([0.0; 3]), &Plane::filled(1, 1, 0.37), &img1([0.0; 3])).unwrap();
        assert_eq!(r.pixel(0, 0), [1.0; 3]);
    }

    #[test]
    fn residual_matches_loop_oracle() {
        // 2x2 instance with hand-picked values; oracle is a direct per-pixel loop in f64.
        let i = Image::from_vec(2, 2, vec![0.9, 0.1, 0.5, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.0, 1.0, 0.25]).unwrap();
        let f = Image::from_vec(2, 2, vec![0.3, 0.6, 0.9, 0.1, 0.5, 0.2, 0.8, 0.4, 0.7, 0.5, 0.5, 0.5]).unwrap();
        let b = Image::from_vec(2, 2, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.35]).unwrap();
        let a = Plane::from_vec(2, 2, vec![0.0, 0.33, 0.75, 1.0]).unwrap();
        let r = composite_residual(&i, &f, &a, &b).unwrap();
        for p in 0..4 {
            for c in 0..3 {
                let k = 3 * p + c;
                let al = a.data()[p] as f64;
                let want = (i.data()[k] as f64 - al * f.data()[k] as f64 - (1.0 - al) * b.data()[k] as f64).abs();
                assert!((r.data()[k] as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn solve_foreground_cases() {
        let f = solve_foreground(&img1([0.6; 3]), &Plane::filled(1, 1, 0.5), &img1([0.2; 3]), DEFAULT_FOREGROUND_EPS).unwrap();
        assert_eq!(f.pixel(0, 0), [1.0; 3]);

        let img = Image::from_fn(3, 4, |y, x| [0.1 * y as f32, 0.2 * x as f32 / 3.0, 0.4]);
        let f = solve_foreground(&img, &Plane::zeros(3, 4), &Image::filled(3, 4, [0.5; 3]), 1e-3).unwrap();
        assert_eq!(f, img);

        assert!(solve_foreground(&img, &Plane::zeros(3, 4), &img, 0.0).is_err());
    }

    #[test]
    fn solve_foreground_recovers_composited_foreground() {
        let f0 = Image::from_fn(8, 8, |y, x| [(y * 8 + x) as f32 / 64.0, 0.5, 1.0 - x as f32 / 8.0]);
        let b = Image::from_fn(8, 8, |y, x| [0.2, (x * y) as f32 / 49.0, 0.9]);
        let a = Plane::from_fn(8, 8, |y, x| 0.5 + 0.5 * ((y + x) as f32 / 14.0));
        let i = composite(&f0, &a, &b).unwrap();
        let f = solve_foreground(&i, &a, &b, DEFAULT_FOREGROUND_EPS).unwrap();
        for (u, v) in f.data().iter().zip(f0.data()) {
            assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }

    #[test]
    fn grayscale_values() {
        let g = to_grayscale(&Image::filled(2, 2, [0.42; 3]));
        assert!(g.data().iter().all(|&v| (v - 0.42).abs() < 1e-6));
        assert!((to_grayscale(&img1([1.0, 0.0, 0.0])).get(0, 0) - 0.299).abs() < 1e-7);
        assert_eq!(to_grayscale(&Image::zeros(3, 3)), Plane::zeros(3, 3));
    }

    fn raster(h: usize, w: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(0.0f32..=1.0, h * w * 3)
    }

    proptest! {
        #[test]
        fn composite_is_affine_in_alpha(
            f in raster(4, 4), b in raster(4, 4),
            a1 in prop::collection::vec(0.0f32..=1.0, 16),
            a2 in prop::collection::vec(0.0f32..=1.0, 16),
            lam in 0.0f32..=1.0,
        ) {
            let f = Image::from_vec(4, 4, f).unwrap();
            let b = Image::from_vec(4, 4, b).unwrap();
            let mix: Vec<f32> = a1.iter().zip(&a2).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
            let c1 = composite(&f, &Plane::from_vec(4, 4, a1).unwrap(), &b).unwrap();
            let c2 = composite(&f, &Plane::from_vec(4, 4, a2).unwrap(), &b).unwrap();
            let cm = composite(&f, &Plane::from_vec_clamped(4, 4, mix).unwrap(), &b).unwrap();
            for k in 0..48 {
                let want = lam * c1.data()[k] + (1.0 - lam) * c2.data()[k];
                prop_assert!((cm.data()[k] - want).abs() < 1e-6);
            }
        }

        #[test]
        fn composite_stays_in_unit_range(f in raster(3, 5), b in raster(3, 5), a in prop::collection::vec(0.0f32..=1.0, 15)) {
            let out = composite(
                &Image::from_vec(3, 5, f).unwrap(),
                &Plane::from_vec(3, 5, a).unwrap(),
                &Image::from_vec(3, 5, b).unwrap(),
            ).unwrap();
            prop_assert!(out.is_valid());
        }
    }
}
