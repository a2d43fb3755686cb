use crate::nn::tensor::{Scalar, Tensor};
use crate::par;

/// Source taps for one output index of a ×2 bilinear upsample with
/// half-pixel centres: `(i0, i1, w0, w1)`.
fn taps(n_in: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n_in)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let w1 = src - i0 as f64;
            (i0, i1, 1.0 - w1, w1)
        })
        .collect()
}

/// Bilinear ×2 upsampling of each `[h, w]` plane.
pub fn upsample2x<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let (ty, tx) = (taps(h), taps(w));
    let (ho, wo) = (2 * h, 2 * w);
    let mut y = Tensor::zeros(&[n, c, ho, wo]);
    let xd = x.data();
    par::for_each_chunk_mut(y.data_mut(), ho * wo, |plane, out| {
        let src = &xd[plane * h * w..(plane + 1) * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::lit(wy0), T::lit(wy1));
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let (wx0, wx1) = (T::lit(wx0), T::lit(wx1));
                let top = src[y0 * w + x0] * wx0 + src[y0 * w + x1] * wx1;
                let bot = src[y1 * w + x0] * wx0 + src[y1 * w + x1] * wx1;
                out[oy * wo + ox] = top * wy0 + bot * wy1;
            }
        }
    });
    y
}

/// Adjoint of [`upsample2x`].
pub fn upsample2x_backward<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let (n, c, ho, wo) = dy.dims4();
    let (h, w) = (ho / 2, wo / 2);
    let (ty, tx) = (taps(h), taps(w));
    let mut dx = Tensor::zeros(&[n, c, h, w]);
    let dyd = dy.data();
    par::for_each_chunk_mut(dx.data_mut(), h * w, |plane, out| {
        let g = &dyd[plane * ho * wo..(plane + 1) * ho * wo];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let d = g[oy * wo + ox];
                let add = |o: &mut [T], i: usize, wgt: f64| o[i] = o[i] + d * T::lit(wgt);
                add(out, y0 * w + x0, wy0 * wx0);
                add(out, y0 * w + x1, wy0 * wx1);
                add(out, y1 * w + x0, wy1 * wx0);
                add(out, y1 * w + x1, wy1 * wx1);
            }
        }
    });
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::<f64>::full(&[1, 2, 3, 5], 0.7);
        let y = upsample2x(&x);
        assert_eq!(y.shape(), &[1, 2, 6, 10]);
        assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn interior_weights_are_quarter_three_quarter() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = upsample2x(&x);
        assert_eq!(y.data()[..4], [0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn backward_is_adjoint() {
        let x = Tensor::<f64>::from_vec(&[1, 2, 3, 4], (0..24).map(|v| (v as f64 * 0.3).sin()).collect()).unwrap();
        let r = Tensor::<f64>::from_vec(&[1, 2, 6, 8], (0..96).map(|v| (v as f64 * 0.7).cos()).collect()).unwrap();
        let lhs: f64 = upsample2x(&x).data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(upsample2x_backward(&r).data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
