//! Binary morphology with a 3×3 cross structuring element.
//!
//! Pixels outside the raster count as background for dilation and as
//! foreground for erosion, so a full-frame mask is a fixed point of both.

use crate::raster::Plane;

/// Thresholds at 0.5 (strictly greater is foreground) into `{0, 1}`.
pub fn binarize(mask: &Plane) -> Plane {
    mask.map(|v| if v > 0.5 { 1.0 } else { 0.0 })
}

fn step(src: &[bool], h: usize, w: usize, dst: &mut [bool], erode: bool) {
    for y in 0..h {
        for x in 0..w {
            let c = src[y * w + x];
            // Out-of-frame neighbours take the neutral value of the operator.
            let up = if y > 0 { src[(y - 1) * w + x] } else { erode };
            let down = if y + 1 < h { src[(y + 1) * w + x] } else { erode };
            let left = if x > 0 { src[y * w + x - 1] } else { erode };
            let right = if x + 1 < w { src[y * w + x + 1] } else { erode };
            dst[y * w + x] = if erode {
                c && up && down && left && right
            } else {
                c || up || down || left || right
            };
        }
    }
}

fn iterate(mask: &Plane, steps: usize, erode: bool) -> Plane {
    let (h, w) = mask.size();
    let mut cur: Vec<bool> = mask.data().iter().map(|&v| v > 0.5).collect();
    let mut next = vec![false; cur.len()];
    for _ in 0..steps {
        step(&cur, h, w, &mut next, erode);
        std::mem::swap(&mut cur, &mut next);
    }
    Plane::from_vec(h, w, cur.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect())
        .expect("binary mask is in range")
}

/// Erodes the mask thresholded at 0.5, `steps` times.
pub fn erode(mask: &Plane, steps: usize) -> Plane {
    iterate(mask, steps, true)
}

/// Dilates the mask thresholded at 0.5, `steps` times.
pub fn dilate(mask: &Plane, steps: usize) -> Plane {
    iterate(mask, steps, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(rows: &[&str]) -> Plane {
        let h = rows.len();
        let w = rows[0].len();
        Plane::from_fn(h, w, |y, x| if rows[y].as_bytes()[x] == b'#' { 1.0 } else { 0.0 })
    }

    /// Brute-force oracle: dilation by k cross steps is the L1 ball of radius
    /// k; erosion keeps pixels whose in-frame L1 ball lies inside the mask.
    fn l1_oracle(mask: &Plane, k: usize, erode: bool) -> Plane {
        let (h, w) = mask.size();
        Plane::from_fn(h, w, |y, x| {
            let mut any = false;
            let mut all = true;
            for yy in 0..h {
                for xx in 0..w {
                    if y.abs_diff(yy) + x.abs_diff(xx) <= k {
                        let on = mask.get(yy, xx) > 0.5;
                        any |= on;
                        all &= on;
                    }
                }
            }
            if (erode && all) || (!erode && any) { 1.0 } else { 0.0 }
        })
    }

    #[test]
    fn erode_square_keeps_interior() {
        let m = grid(&[
            ".......",
            ".#####.",
            ".#####.",
            ".#####.",
            ".#####.",
            ".#####.",
            ".......",
        ]);
        let want = grid(&[
            ".......",
            ".......",
            "..###..",
            "..###..",
            "..###..",
            ".......",
            ".......",
        ]);
        assert_eq!(erode(&m, 1), want);
    }

    #[test]
    fn erode_full_frame_is_fixed_point() {
        let m = Plane::filled(5, 5, 1.0);
        assert_eq!(erode(&m, 3), m);
    }

    #[test]
    fn erode_isolated_pixel_vanishes() {
        let m = grid(&[".....", ".....", "..#..", ".....", "....."]);
        assert_eq!(erode(&m, 1), Plane::zeros(5, 5));
    }

    #[test]
    fn dilate_center_pixel_is_cross() {
        let m = grid(&[".....", ".....", "..#..", ".....", "....."]);
        let want = grid(&[".....", "..#..", ".###.", "..#..", "....."]);
        assert_eq!(dilate(&m, 1), want);
    }

    #[test]
    fn zero_steps_threshold_only() {
        let m = Plane::from_fn(3, 4, |y, x| (y * 4 + x) as f32 / 11.0);
        assert_eq!(erode(&m, 0), binarize(&m));
        assert_eq!(dilate(&m, 0), binarize(&m));
        assert_eq!(dilate(&Plane::zeros(6, 6), 7), Plane::zeros(6, 6));
    }

    #[test]
    fn matches_l1_oracle_on_crafted_grid() {
        let m = grid(&[
            "..........",
            ".####.....",
            ".####..#..",
            ".####.....",
            "......###.",
            "......###.",
            "#.........",
        ]);
        for k in 0..4 {
            assert_eq!(dilate(&m, k), l1_oracle(&m, k, false), "dilate {k}");
            assert_eq!(erode(&m, k), l1_oracle(&m, k, true), "erode {k}");
        }
    }

    proptest! {
        #[test]
        fn opening_and_closing_order(bits in prop::collection::vec(any::<bool>(), 12 * 9), k in 0usize..4) {
            let m = Plane::from_vec(12, 9, bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).unwrap();
            let closed = erode(&dilate(&m, k), k);
            let opened = dilate(&erode(&m, k), k);
            for i in 0..m.data().len() {
                prop_assert!(closed.data()[i] >= m.data()[i]);
                prop_assert!(opened.data()[i] <= m.data()[i]);
            }
        }
    }
}
