//! Matting and LS-GAN losses with their gradients.
//!
//! Every L1 term is the mean absolute value over all elements of its
//! tensor. Tensors are `[n, c, h, w]`; alpha has one channel, colours three.

use crate::nn::{Scalar, Tensor};
use crate::raster::AlphaMatte;

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Forward differences of an alpha matte as signed values:
/// `gx[i][j] = α[i][j+1] − α[i][j]` (0 in the last column) and likewise `gy`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaGradient {
    pub height: usize,
    pub width: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

pub fn image_gradient(alpha: &AlphaMatte) -> AlphaGradient {
    let (h, w) = alpha.size();
    let t = Tensor::from_vec(&[1, 1, h, w], alpha.data().iter().map(|&v| v as f64).collect())
        .expect("sizes agree");
    let (gx, gy) = gradient_tensor(&t);
    AlphaGradient {
        height: h,
        width: w,
        gx: gx.into_data(),
        gy: gy.into_data(),
    }
}

/// Forward differences along width and height of every plane.
pub fn gradient_tensor<T: Scalar>(a: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let (_, _, h, w) = a.dims4();
    let mut gx = Tensor::zeros(a.shape());
    let mut gy = Tensor::zeros(a.shape());
    let ad = a.data();
    for (p, (gxp, gyp)) in gx
        .data_mut()
        .chunks_exact_mut(h * w)
        .zip(gy.data_mut().chunks_exact_mut(h * w))
        .enumerate()
    {
        let src = &ad[p * h * w..(p + 1) * h * w];
        for i in 0..h {
            for j in 0..w {
                let k = i * w + j;
                if j + 1 < w {
                    gxp[k] = src[k + 1] - src[k];
                }
                if i + 1 < h {
                    gyp[k] = src[k + w] - src[k];
                }
            }
        }
    }
    (gx, gy)
}

/// Adjoint of [`gradient_tensor`]: accumulates into `da`.
fn gradient_backward<T: Scalar>(dgx: &Tensor<T>, dgy: &Tensor<T>, da: &mut Tensor<T>) {
    let (_, _, h, w) = dgx.dims4();
    let hw = h * w;
    for (p, dap) in da.data_mut().chunks_exact_mut(hw).enumerate() {
        let gx = &dgx.data()[p * hw..(p + 1) * hw];
        let gy = &dgy.data()[p * hw..(p + 1) * hw];
        for i in 0..h {
            for j in 0..w {
                let k = i * w + j;
                if j + 1 < w {
                    dap[k + 1] = dap[k + 1] + gx[k];
                    dap[k] = dap[k] - gx[k];
                }
                if i + 1 < h {
                    dap[k + w] = dap[k + w] + gy[k];
                    dap[k] = dap[k] - gy[k];
                }
            }
        }
    }
}

/// `mean|x − y|` and its gradient with respect to `x`, scaled by `weight`.
fn l1<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, weight: f64) -> (f64, Tensor<T>) {
    assert_eq!(x.shape(), y.shape(), "L1 operands differ in shape");
    let n = x.len() as f64;
    let loss = x.data().iter().zip(y.data()).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum::<f64>() / n;
    let k = T::lit(weight / n);
    (loss, x.zip_map(y, |a, b| sign(a - b) * k))
}

/// `mean(|∇x − ∇y|)` over the stacked horizontal and vertical differences.
fn gradient_l1<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, weight: f64) -> (f64, Tensor<T>) {
    let (xgx, xgy) = gradient_tensor(x);
    let (ygx, ygy) = gradient_tensor(y);
    let n = 2.0 * x.len() as f64;
    let sum = |a: &Tensor<T>, b: &Tensor<T>| -> f64 {
        a.data().iter().zip(b.data()).map(|(u, v)| (u.as_f64() - v.as_f64()).abs()).sum()
    };
    let loss = (sum(&xgx, &ygx) + sum(&xgy, &ygy)) / n;
    let k = T::lit(weight / n);
    let dgx = xgx.zip_map(&ygx, |a, b| sign(a - b) * k);
    let dgy = xgy.zip_map(&ygy, |a, b| sign(a - b) * k);
    let mut dx = Tensor::zeros(x.shape());
    gradient_backward(&dgx, &dgy, &mut dx);
    (loss, dx)
}

/// `αF + (1 − α)B` on tensors.
pub fn composite_tensor<T: Scalar>(fg: &Tensor<T>, alpha: &Tensor<T>, bg: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = fg.dims4();
    assert_eq!(alpha.shape(), &[n, 1, h, w], "alpha shape");
    assert_eq!(bg.shape(), fg.shape(), "background shape");
    let hw = h * w;
    let mut out = Tensor::zeros(fg.shape());
    let (f, a, b) = (fg.data(), alpha.data(), bg.data());
    for (k, o) in out.data_mut().iter_mut().enumerate() {
        let s = k / (c * hw);
        let p = k % hw;
        // Evaluated in f64 so that f32 results round exactly like
        // `compose::composite`.
        let av = a[s * hw + p].as_f64();
        *o = T::lit(av * f[k].as_f64() + (1.0 - av) * b[k].as_f64());
    }
    out
}

/// Gradients of a loss through [`composite_tensor`]: accumulates into
/// `dfg` and `dalpha`.
pub fn composite_backward<T: Scalar>(
    dout: &Tensor<T>,
    fg: &Tensor<T>,
    alpha: &Tensor<T>,
    bg: &Tensor<T>,
    dfg: &mut Tensor<T>,
    dalpha: &mut Tensor<T>,
) {
    let (_, c, h, w) = fg.dims4();
    let hw = h * w;
    let (f, a, b, d) = (fg.data(), alpha.data(), bg.data(), dout.data());
    for k in 0..f.len() {
        let s = k / (c * hw);
        let p = k % hw;
        let ai = s * hw + p;
        dfg.data_mut()[k] = dfg.data()[k] + d[k] * a[ai];
        dalpha.data_mut()[ai] = dalpha.data()[ai] + d[k] * (f[k] - b[k]);
    }
}

/// `mean|I − αF − (1 − α)B|` with gradients for `F` and `α`.
fn composition_l1<T: Scalar>(
    img: &Tensor<T>,
    fg: &Tensor<T>,
    alpha: &Tensor<T>,
    bg: &Tensor<T>,
    weight: f64,
) -> (f64, Tensor<T>, Tensor<T>) {
    let comp = composite_tensor(fg, alpha, bg);
    // d|I − C|/dC = −sign(I − C)
    let (loss, dimg) = l1(img, &comp, weight);
    let dcomp = dimg.map(|v| -v);
    let mut dfg = Tensor::zeros(fg.shape());
    let mut dalpha = Tensor::zeros(alpha.shape());
    composite_backward(&dcomp, fg, alpha, bg, &mut dfg, &mut dalpha);
    (loss, dfg, dalpha)
}

/// Values of the four matting terms (unweighted) and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct MattingTerms {
    pub alpha: f64,
    pub gradient: f64,
    pub fg: f64,
    pub composition: f64,
    pub total: f64,
}

/// Per-term weights of a matting loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermWeights {
    pub alpha: f64,
    pub gradient: f64,
    pub fg: f64,
    pub composition: f64,
}

/// Weights of the supervised loss on synthetic composites.
pub const SUPERVISED_WEIGHTS: TermWeights = TermWeights {
    alpha: 1.0,
    gradient: 1.0,
    fg: 2.0,
    composition: 1.0,
};

/// Weights of the pseudo-label part of the adversarial generator loss
/// (before multiplying by λ).
pub const PSEUDO_WEIGHTS: TermWeights = TermWeights {
    alpha: 2.0,
    gradient: 4.0,
    fg: 1.0,
    composition: 1.0,
};

/// Targets of a matting loss; the composition term re-composites the
/// prediction over `bg` and compares with `img`.
pub struct MattingTargets<'a, T> {
    pub fg: &'a Tensor<T>,
    pub alpha: &'a Tensor<T>,
    pub img: &'a Tensor<T>,
    pub bg: &'a Tensor<T>,
}

/// Weighted matting loss and its gradients `(dF, dα)`, all scaled by
/// `scale`.
pub fn matting_loss<T: Scalar>(
    fg: &Tensor<T>,
    alpha: &Tensor<T>,
    target: &MattingTargets<'_, T>,
    w: TermWeights,
    scale: f64,
) -> (MattingTerms, Tensor<T>, Tensor<T>) {
    let (la, mut dalpha) = l1(alpha, target.alpha, scale * w.alpha);
    let (lg, dg) = gradient_l1(alpha, target.alpha, scale * w.gradient);
    let (lf, mut dfg) = l1(fg, target.fg, scale * w.fg);
    let (lc, dfc, dac) = composition_l1(target.img, fg, alpha, target.bg, scale * w.composition);
    dalpha.add_assign(&dg);
    dalpha.add_assign(&dac);
    dfg.add_assign(&dfc);
    let total = w.alpha * la + w.gradient * lg + w.fg * lf + w.composition * lc;
    (
        MattingTerms {
            alpha: la,
            gradient: lg,
            fg: lf,
            composition: lc,
            total: scale * total,
        },
        dfg,
        dalpha,
    )
}

/// `mean((d − target)²)` and its gradient.
pub fn least_squares<T: Scalar>(d: &Tensor<T>, target: f64) -> (f64, Tensor<T>) {
    let n = d.len() as f64;
    let loss = d.data().iter().map(|v| (v.as_f64() - target).powi(2)).sum::<f64>() / n;
    let k = T::lit(2.0 / n);
    let t = T::lit(target);
    (loss, d.map(|v| (v - t) * k))
}

/// Discriminator objective `mean(d_fake²) + mean((d_real − 1)²)` with
/// gradients for both score maps.
pub fn discriminator_loss_grad<T: Scalar>(d_fake: &Tensor<T>, d_real: &Tensor<T>) -> (f64, Tensor<T>, Tensor<T>) {
    let (lf, gf) = least_squares(d_fake, 0.0);
    let (lr, gr) = least_squares(d_real, 1.0);
    (lf + lr, gf, gr)
}
