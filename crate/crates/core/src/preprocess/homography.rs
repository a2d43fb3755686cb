//! Feature-based homography estimation and background warping.
//!
//! Harris corners with sub-pixel refinement, normalised-patch descriptors
//! matched with a ratio test and a mutual-best check, then seeded RANSAC over
//! normalised DLT fits followed by least-squares refinement on the inliers.

use log::warn;
use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compose::to_grayscale;
use crate::error::{MattingError, Result};
use crate::par;
use crate::preprocess::blur::blur_f64;
use crate::raster::{Image, Plane};

/// Projective map between pixel coordinates `(x, y)` = (column, row).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Homography { m: Matrix3::identity() }
    }

    /// Normalises so the bottom-right entry is 1 and checks invertibility.
    pub fn from_matrix(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_nalgebra(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    fn from_nalgebra(m: Matrix3<f64>) -> Result<Self> {
        let s = m[(2, 2)];
        if !s.is_finite() || s.abs() < 1e-12 || m.iter().any(|v| !v.is_finite()) {
            return Err(MattingError::AlignmentFailed(
                "homography cannot be normalised".into(),
            ));
        }
        let m = m / s;
        if m.determinant().abs() <= 1e-8 {
            return Err(MattingError::AlignmentFailed("homography is singular".into()));
        }
        Ok(Homography { m })
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Rotation by `degrees` about `(cx, cy)` followed by a translation.
    pub fn rigid(degrees: f64, cx: f64, cy: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        let m = Matrix3::new(
            c,
            -s,
            cx - c * cx + s * cy + tx,
            s,
            c,
            cy - s * cx - c * cy + ty,
            0.0,
            0.0,
            1.0,
        );
        Homography { m }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.m * Vector3::new(x, y, 1.0);
        (p.x / p.z, p.y / p.z)
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .m
            .try_inverse()
            .ok_or_else(|| MattingError::AlignmentFailed("homography is singular".into()))?;
        Self::from_nalgebra(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::from_nalgebra(self.m * other.m)
    }

    /// Largest distance between where `self` and `other` send the four
    /// corners of a `width × height` image.
    pub fn max_corner_error(&self, other: &Homography, width: usize, height: usize) -> f64 {
        let (w, h) = ((width - 1) as f64, (height - 1) as f64);
        [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .map(|&(x, y)| {
                let (a, b) = self.apply(x, y);
                let (c, d) = other.apply(x, y);
                ((a - c).powi(2) + (b - d).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// RANSAC and feature settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub max_keypoints: usize,
    pub ratio: f64,
    pub min_matches: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            iterations: 1000,
            inlier_threshold: 3.0,
            max_keypoints: 800,
            ratio: 0.8,
            min_matches: 8,
        }
    }
}

/// Result of [`estimate_homography`].
#[derive(Clone, Debug)]
pub struct HomographyFit {
    /// Maps source pixel coordinates to destination pixel coordinates.
    pub homography: Homography,
    pub matches: usize,
    pub inliers: usize,
    /// Set when the estimate fell back to the identity.
    pub warning: Option<String>,
}

impl HomographyFit {
    fn fallback(matches: usize, inliers: usize, reason: String) -> Self {
        warn!("homography: {reason}; using identity");
        HomographyFit {
            homography: Homography::identity(),
            matches,
            inliers,
            warning: Some(reason),
        }
    }
}

const DESC_RADIUS: i64 = 5;
const BORDER: usize = 10;

#[derive(Clone, Debug)]
struct Keypoint {
    x: f64,
    y: f64,
    desc: Vec<f64>,
}

struct Gray {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Gray {
    fn at(&self, y: usize, x: usize) -> f64 {
        self.v[y * self.w + x]
    }

    fn sample(&self, y: f64, x: f64) -> f64 {
        let yc = y.clamp(0.0, (self.h - 1) as f64);
        let xc = x.clamp(0.0, (self.w - 1) as f64);
        let (y0, x0) = (yc.floor() as usize, xc.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(self.h - 1), (x0 + 1).min(self.w - 1));
        let (fy, fx) = (yc - y0 as f64, xc - x0 as f64);
        let top = self.at(y0, x0) * (1.0 - fx) + self.at(y0, x1) * fx;
        let bot = self.at(y1, x0) * (1.0 - fx) + self.at(y1, x1) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

fn detect(img: &Image, max_keypoints: usize) -> Vec<Keypoint> {
    let (h, w) = img.size();
    let g = to_grayscale(img);
    let raw: Vec<f64> = g.data().iter().map(|&v| v as f64).collect();
    let gray = Gray { h, w, v: blur_f64(&raw, h, w, 1.0) };

    let mut ixx = vec![0.0; h * w];
    let mut iyy = vec![0.0; h * w];
    let mut ixy = vec![0.0; h * w];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (gray.at(y - 1, x + 1) + 2.0 * gray.at(y, x + 1) + gray.at(y + 1, x + 1)
                - gray.at(y - 1, x - 1)
                - 2.0 * gray.at(y, x - 1)
                - gray.at(y + 1, x - 1))
                / 8.0;
            let gy = (gray.at(y + 1, x - 1) + 2.0 * gray.at(y + 1, x) + gray.at(y + 1, x + 1)
                - gray.at(y - 1, x - 1)
                - 2.0 * gray.at(y - 1, x)
                - gray.at(y - 1, x + 1))
                / 8.0;
            ixx[y * w + x] = gx * gx;
            iyy[y * w + x] = gy * gy;
            ixy[y * w + x] = gx * gy;
        }
    }
    let sxx = blur_f64(&ixx, h, w, 1.5);
    let syy = blur_f64(&iyy, h, w, 1.5);
    let sxy = blur_f64(&ixy, h, w, 1.5);
    let resp: Vec<f64> = (0..h * w)
        .map(|i| sxx[i] * syy[i] - sxy[i] * sxy[i] - 0.04 * (sxx[i] + syy[i]).powi(2))
        .collect();
    let max_r = resp.iter().cloned().fold(0.0, f64::max);
    if max_r <= 1e-12 {
        return Vec::new();
    }
    let thresh = 0.01 * max_r;
    let nms = 3usize;
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for y in BORDER..h.saturating_sub(BORDER) {
        for x in BORDER..w.saturating_sub(BORDER) {
            let r = resp[y * w + x];
            if r <= thresh {
                continue;
            }
            let mut is_max = true;
            'win: for yy in y.saturating_sub(nms)..=(y + nms).min(h - 1) {
                for xx in x.saturating_sub(nms)..=(x + nms).min(w - 1) {
                    let o = resp[yy * w + xx];
                    if o > r || (o == r && (yy, xx) < (y, x)) {
                        is_max = false;
                        break 'win;
                    }
                }
            }
            if is_max {
                cands.push((r, y, x));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    cands.truncate(max_keypoints);

    let parabola = |a: f64, b: f64, c: f64| {
        let d = a - 2.0 * b + c;
        if d.abs() < 1e-18 {
            0.0
        } else {
            (0.5 * (a - c) / d).clamp(-0.5, 0.5)
        }
    };
    cands
        .into_iter()
        .filter_map(|(_, y, x)| {
            let r = |yy: usize, xx: usize| resp[yy * w + xx];
            let dx = parabola(r(y, x - 1), r(y, x), r(y, x + 1));
            let dy = parabola(r(y - 1, x), r(y, x), r(y + 1, x));
            let (fx, fy) = (x as f64 + dx, y as f64 + dy);
            let mut desc = Vec::with_capacity(((2 * DESC_RADIUS + 1) * (2 * DESC_RADIUS + 1)) as usize);
            for py in -DESC_RADIUS..=DESC_RADIUS {
                for px in -DESC_RADIUS..=DESC_RADIUS {
                    desc.push(gray.sample(fy + py as f64, fx + px as f64));
                }
            }
            let mean = desc.iter().sum::<f64>() / desc.len() as f64;
            desc.iter_mut().for_each(|v| *v -= mean);
            let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-6 {
                return None;
            }
            desc.iter_mut().for_each(|v| *v /= norm);
            Some(Keypoint { x: fx, y: fy, desc })
        })
        .collect()
}

fn match_keypoints(a: &[Keypoint], b: &[Keypoint], ratio: f64) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let dist = |p: &Keypoint, q: &Keypoint| -> f64 {
        let ncc: f64 = p.desc.iter().zip(&q.desc).map(|(u, v)| u * v).sum();
        (2.0 - 2.0 * ncc).max(0.0).sqrt()
    };
    let best = |p: &Keypoint, pool: &[Keypoint]| -> (usize, f64, f64) {
        let mut b1 = (usize::MAX, f64::INFINITY);
        let mut d2 = f64::INFINITY;
        for (j, q) in pool.iter().enumerate() {
            let d = dist(p, q);
            if d < b1.1 {
                d2 = b1.1;
                b1 = (j, d);
            } else if d < d2 {
                d2 = d;
            }
        }
        (b1.0, b1.1, d2)
    };
    let forward: Vec<(usize, f64, f64)> = par::map_slice(a, |p| best(p, b));
    let backward: Vec<usize> = par::map_slice(b, |q| best(q, a).0);
    forward
        .iter()
        .enumerate()
        .filter(|(i, &(j, d1, d2))| backward[j] == *i && d1 < ratio * d2)
        .map(|(i, &(j, _, _))| (i, j))
        .collect()
}

fn normalizer(pts: &[(f64, f64)]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let md = pts
        .iter()
        .map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if md > 1e-12 { std::f64::consts::SQRT_2 / md } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Normalised direct linear transform over all given correspondences.
fn dlt(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Option<Homography> {
    let ts = normalizer(src);
    let td = normalizer(dst);
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (&(x, y), &(u, v)) in src.iter().zip(dst) {
        let p = ts * Vector3::new(x, y, 1.0);
        let q = td * Vector3::new(u, v, 1.0);
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r1 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r2 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for r in [r1, r2] {
            for i in 0..9 {
                for j in 0..9 {
                    ata[(i, j)] += r[i] * r[j];
                }
            }
        }
    }
    let eig = SymmetricEigen::new(ata);
    let k = eig.eigenvalues.imin();
    let h = eig.eigenvectors.column(k);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let m = td.try_inverse()? * hn * ts;
    Homography::from_nalgebra(m).ok()
}

fn reprojection_error(h: &Homography, s: (f64, f64), d: (f64, f64)) -> f64 {
    let (u, v) = h.apply(s.0, s.1);
    let e = ((u - d.0).powi(2) + (v - d.1).powi(2)).sqrt();
    if e.is_finite() { e } else { f64::INFINITY }
}

fn inlier_set(h: &Homography, src: &[(f64, f64)], dst: &[(f64, f64)], thresh: f64) -> (Vec<usize>, f64) {
    let mut idx = Vec::new();
    let mut total = 0.0;
    for (i, (&s, &d)) in src.iter().zip(dst).enumerate() {
        let e = reprojection_error(h, s, d);
        if e < thresh {
            idx.push(i);
            total += e;
        }
    }
    (idx, total)
}

/// Estimates the homography taking `src` pixel coordinates to `dst`.
///
/// Falls back to the identity (with a warning in the returned fit) when fewer
/// than `min_matches` correspondences survive; fails only when the fitted
/// matrix is degenerate.
pub fn estimate_homography(src: &Image, dst: &Image, seed: u64) -> Result<HomographyFit> {
    estimate_homography_with(src, dst, seed, &RansacParams::default())
}

pub fn estimate_homography_with(
    src: &Image,
    dst: &Image,
    seed: u64,
    params: &RansacParams,
) -> Result<HomographyFit> {
    for img in [src, dst] {
        if img.height() < 64 || img.width() < 64 {
            return Err(MattingError::contract(format!(
                "homography estimation needs images of at least 64x64, got {}x{}",
                img.height(),
                img.width()
            )));
        }
    }
    let ka = detect(src, params.max_keypoints);
    let kb = detect(dst, params.max_keypoints);
    let pairs = match_keypoints(&ka, &kb, params.ratio);
    if pairs.len() < params.min_matches {
        return Ok(HomographyFit::fallback(
            pairs.len(),
            0,
            format!("only {} feature matches", pairs.len()),
        ));
    }
    let ps: Vec<(f64, f64)> = pairs.iter().map(|&(i, _)| (ka[i].x, ka[i].y)).collect();
    let pd: Vec<(f64, f64)> = pairs.iter().map(|&(_, j)| (kb[j].x, kb[j].y)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..params.iterations.max(1) {
        let pick = sample(&mut rng, ps.len(), 4).into_vec();
        let s4: Vec<_> = pick.iter().map(|&i| ps[i]).collect();
        let d4: Vec<_> = pick.iter().map(|&i| pd[i]).collect();
        let Some(h) = dlt(&s4, &d4) else { continue };
        let (inl, err) = inlier_set(&h, &ps, &pd, params.inlier_threshold);
        let better = match &best {
            None => true,
            Some((b, e)) => inl.len() > b.len() || (inl.len() == b.len() && err < *e),
        };
        if better {
            best = Some((inl, err));
        }
    }
    let Some((mut inliers, _)) = best else {
        return Err(MattingError::AlignmentFailed("no non-degenerate RANSAC sample".into()));
    };
    if inliers.len() < params.min_matches {
        return Ok(HomographyFit::fallback(
            pairs.len(),
            inliers.len(),
            format!("only {} RANSAC inliers", inliers.len()),
        ));
    }
    let mut h = Homography::identity();
    for _ in 0..5 {
        let s: Vec<_> = inliers.iter().map(|&i| ps[i]).collect();
        let d: Vec<_> = inliers.iter().map(|&i| pd[i]).collect();
        h = dlt(&s, &d).ok_or_else(|| {
            MattingError::AlignmentFailed("least-squares refinement is degenerate".into())
        })?;
        let (next, _) = inlier_set(&h, &ps, &pd, params.inlier_threshold);
        if next == inliers || next.len() < params.min_matches {
            break;
        }
        inliers = next;
    }
    Ok(HomographyFit {
        homography: h,
        matches: pairs.len(),
        inliers: inliers.len(),
        warning: None,
    })
}

/// Inverse-warps `img` into an `out_size = (height, width)` frame:
/// `out(p) = img(h⁻¹ p)` with bilinear sampling and border clamping.
pub fn warp_image(img: &Image, h: &Homography, out_size: (usize, usize)) -> Result<Image> {
    let inv = h.inverse()?;
    let (oh, ow) = out_size;
    let mut data = vec![0.0f32; oh * ow * 3];
    par::for_each_chunk_mut(&mut data, ow * 3, |y, row| {
        for x in 0..ow {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            row[3 * x..3 * x + 3].copy_from_slice(&img.sample(sy, sx));
        }
    });
    Image::from_vec(oh, ow, data)
}

/// Single-channel counterpart of [`warp_image`].
pub fn warp_plane(p: &Plane, h: &Homography, out_size: (usize, usize)) -> Result<Plane> {
    let inv = h.inverse()?;
    let (oh, ow) = out_size;
    let mut data = vec![0.0f32; oh * ow];
    par::for_each_chunk_mut(&mut data, ow, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            *o = p.sample(sy, sx);
        }
    });
    Plane::from_vec(oh, ow, data)
}

/// Aligns a background plate to a frame with the plate→frame homography.
pub fn warp_background(bg: &Image, h: &Homography, out_size: (usize, usize)) -> Result<Image> {
    warp_image(bg, h, out_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::textured_background;

    #[test]
    fn identity_warp_is_exact() {
        let bg = textured_background(40, 50, 3);
        assert_eq!(warp_background(&bg, &Homography::identity(), (40, 50)).unwrap(), bg);
    }

    #[test]
    fn integer_translation_shifts_pixels() {
        let bg = textured_background(30, 40, 4);
        let out = warp_background(&bg, &Homography::translation(3.0, 0.0), (30, 40)).unwrap();
        for y in 0..30 {
            for x in 3..40 {
                let (a, b) = (out.pixel(y, x), bg.pixel(y, x - 3));
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() <= 1e-6);
                }
            }
            // Left strip reads the clamped border column.
            assert_eq!(out.pixel(y, 0), bg.pixel(y, 0));
        }
    }

    #[test]
    fn warp_round_trip_interior() {
        // Smooth content so two bilinear resamplings stay close.
        let bg = Image::from_fn(64, 64, |y, x| {
            let (y, x) = (y as f32, x as f32);
            [0.5 + 0.3 * (0.15 * x).sin(), 0.5 + 0.3 * (0.11 * y).cos(), 0.5 + 0.2 * (0.07 * (x + y)).sin()]
        });
        let h = Homography::rigid(2.0, 32.0, 32.0, 1.5, -0.7);
        let there = warp_image(&bg, &h, (64, 64)).unwrap();
        let back = warp_image(&there, &h.inverse().unwrap(), (64, 64)).unwrap();
        for y in 8..56 {
            for x in 8..56 {
                for c in 0..3 {
                    assert!((back.pixel(y, x)[c] - bg.pixel(y, x)[c]).abs() < 2e-2);
                }
            }
        }
    }

    #[test]
    fn from_matrix_normalises_and_rejects_singular() {
        let h = Homography::from_matrix([[2.0, 0.0, 4.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(h.matrix()[2][2], 1.0);
        assert_eq!(h.apply(1.0, 1.0), (3.0, 1.0));
        assert!(Homography::from_matrix([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn dlt_recovers_exact_correspondences() {
        let h0 = Homography::from_matrix([[1.01, 0.02, 3.0], [-0.01, 0.99, -2.0], [1e-5, -2e-5, 1.0]]).unwrap();
        let src: Vec<(f64, f64)> = (0..10).map(|i| ((i * 13 % 97) as f64, (i * 29 % 83) as f64)).collect();
        let dst: Vec<(f64, f64)> = src.iter().map(|&(x, y)| h0.apply(x, y)).collect();
        let h = dlt(&src, &dst).unwrap();
        assert!(h.max_corner_error(&h0, 100, 100) < 1e-8);
    }

    #[test]
    fn same_image_gives_identity() {
        let img = textured_background(96, 96, 6);
        let fit = estimate_homography(&img, &img, 1).unwrap();
        assert!(fit.warning.is_none());
        assert!(fit.homography.max_corner_error(&Homography::identity(), 96, 96) < 1e-2);
    }

    #[test]
    fn translation_is_recovered() {
        let img = textured_background(128, 128, 7);
        let h0 = Homography::translation(5.0, 0.0);
        let dst = warp_image(&img, &h0, (128, 128)).unwrap();
        let fit = estimate_homography(&img, &dst, 2).unwrap();
        assert!(fit.homography.max_corner_error(&h0, 128, 128) < 0.5, "{:?}", fit);
    }

    #[test]
    fn textureless_falls_back_to_identity() {
        let img = Image::filled(80, 80, [0.4, 0.5, 0.6]);
        let fit = estimate_homography(&img, &img, 3).unwrap();
        assert!(fit.warning.is_some());
        assert_eq!(fit.homography, Homography::identity());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let img = textured_background(96, 96, 8);
        let dst = warp_image(&img, &Homography::rigid(1.0, 48.0, 48.0, 2.0, 1.0), (96, 96)).unwrap();
        let a = estimate_homography(&img, &dst, 11).unwrap();
        let b = estimate_homography(&img, &dst, 11).unwrap();
        assert_eq!(a.homography, b.homography);
        assert_eq!(a.inliers, b.inliers);
    }

    #[test]
    fn small_images_are_rejected() {
        let img = Image::zeros(32, 100);
        assert!(estimate_homography(&img, &img, 0).is_err());
    }
}
