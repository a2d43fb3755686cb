use crate::nn::tensor::{Scalar, Tensor};
use crate::par;

/// Stride and zero padding of a square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub const fn new(stride: usize, pad: usize) -> Self {
        ConvGeom { stride, pad }
    }
}

/// Output extent of a convolution along one axis.
pub fn conv_output_size(input: usize, kernel: usize, geom: ConvGeom) -> usize {
    assert!(
        input + 2 * geom.pad >= kernel,
        "kernel {kernel} larger than padded input {input}+2*{}",
        geom.pad
    );
    (input + 2 * geom.pad - kernel) / geom.stride + 1
}

/// Upper bound on the im2col buffer in the forward pass (elements).
const MAX_COLS_ELEMENTS: usize = 1 << 24;

/// Stride-1 convolutions with at most this many `c_in·c_out` channel pairs
/// and rows at least `DIRECT_MIN_WIDTH` wide run directly on shifted rows
/// instead of through im2col + GEMM. With few channels the unfolded buffer
/// costs far more than the arithmetic.
const DIRECT_MAX_CHANNEL_PAIRS: usize = 256;
const DIRECT_MIN_WIDTH: usize = 48;

/// Kernel selection; tests force the GEMM route to compare both.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Path {
    Auto,
    #[cfg(test)]
    Gemm,
    #[cfg(test)]
    Direct,
}

struct Layout {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    ho: usize,
    wo: usize,
    geom: ConvGeom,
}

impl Layout {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.geom.stride == 1 && self.geom.pad == 0
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn use_direct(&self, co: usize, path: Path) -> bool {
        match path {
            Path::Auto => {
                self.geom.stride == 1
                    && !self.is_pointwise()
                    && self.c * co <= DIRECT_MAX_CHANNEL_PAIRS
                    && self.wo >= DIRECT_MIN_WIDTH
            }
            #[cfg(test)]
            Path::Gemm => false,
            #[cfg(test)]
            Path::Direct => self.geom.stride == 1 && !self.is_pointwise(),
        }
    }

    /// Output columns `lo..hi` whose input column `ox + kx - pad` is in
    /// range (stride 1).
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let p = self.geom.pad;
        let lo = p.saturating_sub(kx).min(self.wo);
        let hi = (self.w + p).saturating_sub(kx).min(self.wo);
        (lo, hi.max(lo))
    }

    /// Input row read by output row `oy` at kernel row `ky` (stride 1).
    fn input_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy + ky).checked_sub(self.geom.pad)?;
        (iy < self.h).then_some(iy)
    }
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (d, &s) in y.iter_mut().zip(x) {
        *d = *d + a * s;
    }
}

/// Dot product with eight independent accumulators so it vectorizes.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (xa, xb) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] = acc[i] + xa[i] * xb[i];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Stride-1 forward for one sample: `ys` (zeroed, `[co, ho, wo]`).
fn direct_forward<T: Scalar>(xs: &[T], w: &[T], l: &Layout, co: usize, ys: &mut [T]) {
    let (k, p) = (l.k, l.geom.pad);
    for (o, yo) in ys.chunks_exact_mut(l.cols()).enumerate() {
        for c in 0..l.c {
            let plane = &xs[c * l.h * l.w..(c + 1) * l.h * l.w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w[((o * l.c + c) * k + ky) * k + kx];
                    let (lo, hi) = l.valid_cols(kx);
                    if lo == hi {
                        continue;
                    }
                    for oy in 0..l.ho {
                        let Some(iy) = l.input_row(oy, ky) else { continue };
                        let src = &plane[iy * l.w + lo + kx - p..iy * l.w + hi + kx - p];
                        axpy(&mut yo[oy * l.wo + lo..oy * l.wo + hi], wv, src);
                    }
                }
            }
        }
    }
    debug_assert_eq!(ys.len(), co * l.cols());
}

/// Stride-1 input gradient for one sample: `dxs` (zeroed, `[c, h, w]`).
fn direct_backward_dx<T: Scalar>(dys: &[T], w: &[T], l: &Layout, co: usize, dxs: &mut [T]) {
    let (k, p) = (l.k, l.geom.pad);
    for (c, plane) in dxs.chunks_exact_mut(l.h * l.w).enumerate() {
        for o in 0..co {
            let dyo = &dys[o * l.cols()..(o + 1) * l.cols()];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w[((o * l.c + c) * k + ky) * k + kx];
                    let (lo, hi) = l.valid_cols(kx);
                    if lo == hi {
                        continue;
                    }
                    for oy in 0..l.ho {
                        let Some(iy) = l.input_row(oy, ky) else { continue };
                        let dst = &mut plane[iy * l.w + lo + kx - p..iy * l.w + hi + kx - p];
                        axpy(dst, wv, &dyo[oy * l.wo + lo..oy * l.wo + hi]);
                    }
                }
            }
        }
    }
}

/// Stride-1 weight gradient for one sample, accumulated into `dw`.
fn direct_backward_dw<T: Scalar>(xs: &[T], dys: &[T], l: &Layout, co: usize, dw: &mut [T]) {
    let (k, p) = (l.k, l.geom.pad);
    for o in 0..co {
        let dyo = &dys[o * l.cols()..(o + 1) * l.cols()];
        for c in 0..l.c {
            let plane = &xs[c * l.h * l.w..(c + 1) * l.h * l.w];
            for ky in 0..k {
                for kx in 0..k {
                    let (lo, hi) = l.valid_cols(kx);
                    if lo == hi {
                        continue;
                    }
                    let mut acc = T::zero();
                    for oy in 0..l.ho {
                        let Some(iy) = l.input_row(oy, ky) else { continue };
                        let src = &plane[iy * l.w + lo + kx - p..iy * l.w + hi + kx - p];
                        acc = acc + dot(&dyo[oy * l.wo + lo..oy * l.wo + hi], src);
                    }
                    let i = ((o * l.c + c) * k + ky) * k + kx;
                    dw[i] = dw[i] + acc;
                }
            }
        }
    }
}

fn im2col<T: Scalar>(x: &[T], l: &Layout, cols: &mut [T]) {
    im2col_rows(x, l, 0..l.ho, cols);
}

/// im2col restricted to output rows `oys`; `cols` is `rows × (|oys|·wo)`.
fn im2col_rows<T: Scalar>(x: &[T], l: &Layout, oys: std::ops::Range<usize>, cols: &mut [T]) {
    let (k, s, p) = (l.k, l.geom.stride as isize, l.geom.pad as isize);
    let npix = oys.len() * l.wo;
    for ci in 0..l.c {
        let plane = &x[ci * l.h * l.w..(ci + 1) * l.h * l.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * npix..(row + 1) * npix];
                for (band_row, oy) in oys.clone().enumerate() {
                    let iy = oy as isize * s + ky as isize - p;
                    let drow = &mut dst[band_row * l.wo..(band_row + 1) * l.wo];
                    if iy < 0 || iy >= l.h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * l.w..(iy as usize + 1) * l.w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = ox as isize * s + kx as isize - p;
                        *d = if ix < 0 || ix >= l.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], l: &Layout, dx: &mut [T]) {
    let (k, s, p) = (l.k, l.geom.stride as isize, l.geom.pad as isize);
    let npix = l.cols();
    for ci in 0..l.c {
        let plane = &mut dx[ci * l.h * l.w..(ci + 1) * l.h * l.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * npix..(row + 1) * npix];
                for oy in 0..l.ho {
                    let iy = oy as isize * s + ky as isize - p;
                    if iy < 0 || iy >= l.h as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * l.w..(iy as usize + 1) * l.w];
                    for ox in 0..l.wo {
                        let ix = ox as isize * s + kx as isize - p;
                        if ix >= 0 && ix < l.w as isize {
                            drow[ix as usize] = drow[ix as usize] + src[oy * l.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn layout<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, geom: ConvGeom) -> (usize, usize, Layout) {
    let (n, c, h, wd) = x.dims4();
    assert_eq!(w.shape().len(), 4, "conv weight must be [out, in, k, k]");
    let (co, ci, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    assert_eq!(kh, kw, "square kernels only");
    assert_eq!(ci, c, "conv input channels: weight expects {ci}, input has {c}");
    let ho = conv_output_size(h, kh, geom);
    let wo = conv_output_size(wd, kw, geom);
    (
        n,
        co,
        Layout {
            c,
            h,
            w: wd,
            k: kh,
            ho,
            wo,
            geom,
        },
    )
}

/// 2-D convolution (cross-correlation) with zero padding.
///
/// `x` is `[n, c_in, h, w]`, `weight` is `[c_out, c_in, k, k]` and `bias`,
/// when present, has `c_out` elements.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: ConvGeom,
) -> Tensor<T> {
    conv2d_budget(x, weight, bias, geom, MAX_COLS_ELEMENTS, Path::Auto)
}

fn conv2d_budget<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: ConvGeom,
    max_cols: usize,
    path: Path,
) -> Tensor<T> {
    let (n, co, l) = layout(x, weight, geom);
    let out_len = co * l.cols();
    let mut y = Tensor::zeros(&[n, co, l.ho, l.wo]);
    par::for_each_chunk_mut(y.data_mut(), out_len, |s, ys| {
        let xs = x.sample(s);
        let band = (max_cols / (l.rows() * l.wo)).max(1);
        if l.is_pointwise() {
            T::gemm(co, l.rows(), l.cols(), weight.data(), false, xs, false, ys, false);
        } else if l.use_direct(co, path) {
            direct_forward(xs, weight.data(), &l, co, ys);
        } else if band >= l.ho {
            let mut cols = vec![T::zero(); l.rows() * l.cols()];
            im2col(xs, &l, &mut cols);
            T::gemm(co, l.rows(), l.cols(), weight.data(), false, &cols, false, ys, false);
        } else {
            // Large inputs: unfold a band of output rows at a time.
            let mut cols = vec![T::zero(); l.rows() * band * l.wo];
            let mut out = vec![T::zero(); co * band * l.wo];
            let mut oy0 = 0;
            while oy0 < l.ho {
                let oy1 = (oy0 + band).min(l.ho);
                let npix = (oy1 - oy0) * l.wo;
                im2col_rows(xs, &l, oy0..oy1, &mut cols[..l.rows() * npix]);
                T::gemm(co, l.rows(), npix, weight.data(), false, &cols, false, &mut out, false);
                for o in 0..co {
                    let dst = o * l.cols() + oy0 * l.wo;
                    ys[dst..dst + npix].copy_from_slice(&out[o * npix..(o + 1) * npix]);
                }
                oy0 = oy1;
            }
        }
        if let Some(b) = bias {
            for (o, chunk) in ys.chunks_exact_mut(l.cols()).enumerate() {
                let bo = b.data()[o];
                chunk.iter_mut().for_each(|v| *v = *v + bo);
            }
        }
    });
    y
}

/// Gradients produced by [`conv2d_backward`].
#[derive(Debug)]
pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dweight: Option<Tensor<T>>,
    pub dbias: Option<Tensor<T>>,
}

/// Backward pass of [`conv2d`]. Only the requested gradients are computed.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    geom: ConvGeom,
    need_dx: bool,
    need_dweight: bool,
    has_bias: bool,
) -> ConvGrads<T> {
    conv2d_backward_path(x, weight, dy, geom, need_dx, need_dweight, has_bias, Path::Auto)
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward_path<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &Tensor<T>,
    geom: ConvGeom,
    need_dx: bool,
    need_dweight: bool,
    has_bias: bool,
    path: Path,
) -> ConvGrads<T> {
    let (n, co, l) = layout(x, weight, geom);
    assert_eq!(dy.shape(), &[n, co, l.ho, l.wo], "conv backward: dy shape");
    let rows = l.rows();
    let npix = l.cols();
    let wlen = weight.len();

    let per_sample: Vec<(Option<Vec<T>>, Option<Vec<T>>)> = par::map_range(n, |s| {
        let xs = x.sample(s);
        let dys = dy.sample(s);
        let dw = need_dweight.then(|| {
            let mut dw = vec![T::zero(); wlen];
            if l.is_pointwise() {
                T::gemm(co, npix, rows, dys, false, xs, true, &mut dw, false);
            } else if l.use_direct(co, path) {
                direct_backward_dw(xs, dys, &l, co, &mut dw);
            } else {
                let mut cols = vec![T::zero(); rows * npix];
                im2col(xs, &l, &mut cols);
                T::gemm(co, npix, rows, dys, false, &cols, true, &mut dw, false);
            }
            dw
        });
        let dx = need_dx.then(|| {
            let mut dxs = vec![T::zero(); l.c * l.h * l.w];
            if l.is_pointwise() {
                T::gemm(rows, co, npix, weight.data(), true, dys, false, &mut dxs, false);
            } else if l.use_direct(co, path) {
                direct_backward_dx(dys, weight.data(), &l, co, &mut dxs);
            } else {
                let mut dcols = vec![T::zero(); rows * npix];
                T::gemm(rows, co, npix, weight.data(), true, dys, false, &mut dcols, false);
                col2im(&dcols, &l, &mut dxs);
            }
            dxs
        });
        (dw, dx)
    });

    let mut dweight = need_dweight.then(|| Tensor::zeros(weight.shape()));
    let mut dx_data = need_dx.then(|| Vec::with_capacity(x.len()));
    for (dw, dx) in per_sample {
        if let (Some(acc), Some(dw)) = (dweight.as_mut(), dw) {
            acc.data_mut().iter_mut().zip(dw).for_each(|(a, b)| *a = *a + b);
        }
        if let (Some(acc), Some(dx)) = (dx_data.as_mut(), dx) {
            acc.extend(dx);
        }
    }
    let dbias = has_bias.then(|| {
        let mut db = Tensor::zeros(&[co]);
        for s in 0..n {
            for (o, chunk) in dy.sample(s).chunks_exact(npix).enumerate() {
                db.data_mut()[o] = db.data()[o] + chunk.iter().copied().sum::<T>();
            }
        }
        db
    });
    ConvGrads {
        dx: dx_data.map(|d| Tensor::from_vec(x.shape(), d).expect("dx has the input's shape")),
        dweight,
        dbias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct six-loop convolution.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, g: ConvGeom) -> Tensor<f64> {
        let (n, c, h, wd) = x.dims4();
        let (co, _, k, _) = w.dims4();
        let ho = (h + 2 * g.pad - k) / g.stride + 1;
        let wo = (wd + 2 * g.pad - k) / g.stride + 1;
        let mut y = Tensor::zeros(&[n, co, ho, wo]);
        for s in 0..n {
            for o in 0..co {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b.map_or(0.0, |b| b.data()[o]);
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((s * c + ci) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((o * c + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                        y.data_mut()[((s * co + o) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, g) in [(3, ConvGeom::new(1, 1)), (3, ConvGeom::new(2, 1)), (4, ConvGeom::new(2, 1)), (1, ConvGeom::new(1, 0)), (7, ConvGeom::new(1, 3))] {
            let x = random(&[2, 3, 9, 8], &mut rng);
            let w = random(&[4, 3, k, k], &mut rng);
            let b = random(&[4], &mut rng);
            let want = naive_conv(&x, &w, Some(&b), g);
            for path in [Path::Gemm, Path::Direct] {
                let y = conv2d_budget(&x, &w, Some(&b), g, MAX_COLS_ELEMENTS, path);
                assert_eq!(y.shape(), want.shape());
                for (a, b) in y.data().iter().zip(want.data()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn banded_forward_matches_whole() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[1, 2, 11, 7], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        for g in [ConvGeom::new(1, 1), ConvGeom::new(2, 1)] {
            let whole = conv2d_budget(&x, &w, None, g, MAX_COLS_ELEMENTS, Path::Gemm);
            for budget in [1, 18 * 7, 18 * 7 * 3] {
                assert_eq!(conv2d_budget(&x, &w, None, g, budget, Path::Gemm), whole);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (k, g) in [(3, ConvGeom::new(2, 1)), (1, ConvGeom::new(1, 0)), (4, ConvGeom::new(1, 1))] {
            let x = random(&[2, 2, 6, 5], &mut rng);
            let w = random(&[3, 2, k, k], &mut rng);
            let b = random(&[3], &mut rng);
            let y = conv2d(&x, &w, Some(&b), g);
            // Loss = <y, r> for a fixed random r, so dL/dy = r.
            let r = random(y.shape(), &mut rng);
            let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
                conv2d(x, w, Some(b), g).data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
            };
            let grads = conv2d_backward(&x, &w, &r, g, true, true, true);
            let h = 1e-6;
            let check = |analytic: &Tensor<f64>, which: usize| {
                for i in (0..analytic.len()).step_by(3) {
                    let (mut xp, mut wp, mut bp) = (x.clone(), w.clone(), b.clone());
                    let (mut xm, mut wm, mut bm) = (x.clone(), w.clone(), b.clone());
                    match which {
                        0 => { xp.data_mut()[i] += h; xm.data_mut()[i] -= h; }
                        1 => { wp.data_mut()[i] += h; wm.data_mut()[i] -= h; }
                        _ => { bp.data_mut()[i] += h; bm.data_mut()[i] -= h; }
                    }
                    let fd = (loss(&xp, &wp, &bp) - loss(&xm, &wm, &bm)) / (2.0 * h);
                    assert!((fd - analytic.data()[i]).abs() < 1e-6, "{which}[{i}]: {fd} vs {}", analytic.data()[i]);
                }
            };
            check(grads.dx.as_ref().unwrap(), 0);
            check(grads.dweight.as_ref().unwrap(), 1);
            check(grads.dbias.as_ref().unwrap(), 2);
        }
    }

    #[test]
    fn direct_and_gemm_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Includes kernels wider than the padded image edge.
        for (k, pad, h, w) in [(3, 1, 9, 8), (7, 3, 10, 12), (7, 3, 3, 2), (4, 1, 6, 5), (5, 0, 7, 9)] {
            let x = random(&[2, 3, h, w], &mut rng);
            let wt = random(&[2, 3, k, k], &mut rng);
            let g = ConvGeom::new(1, pad);
            let direct = conv2d_budget(&x, &wt, None, g, MAX_COLS_ELEMENTS, Path::Direct);
            let gemm = conv2d_budget(&x, &wt, None, g, MAX_COLS_ELEMENTS, Path::Gemm);
            let dy = random(direct.shape(), &mut rng);
            let a = conv2d_backward_path(&x, &wt, &dy, g, true, true, false, Path::Direct);
            let b = conv2d_backward_path(&x, &wt, &dy, g, true, true, false, Path::Gemm);
            let close = |p: &Tensor<f64>, q: &Tensor<f64>| {
                assert_eq!(p.shape(), q.shape());
                p.data().iter().zip(q.data()).all(|(u, v)| (u - v).abs() < 1e-12)
            };
            assert!(close(&direct, &gemm), "forward k{k} {h}x{w}");
            assert!(close(a.dx.as_ref().unwrap(), b.dx.as_ref().unwrap()), "dx k{k} {h}x{w}");
            assert!(close(a.dweight.as_ref().unwrap(), b.dweight.as_ref().unwrap()), "dw k{k} {h}x{w}");
        }
    }

    #[test]
    fn output_size_arithmetic() {
        assert_eq!(conv_output_size(512, 7, ConvGeom::new(1, 3)), 512);
        assert_eq!(conv_output_size(512, 3, ConvGeom::new(2, 1)), 256);
        assert_eq!(conv_output_size(512, 4, ConvGeom::new(2, 1)), 256);
        assert_eq!(conv_output_size(32, 4, ConvGeom::new(1, 1)), 31);
    }
}
