use crate::nn::tensor::{Scalar, Tensor};
use crate::par;

pub const NORM_EPS: f64 = 1e-5;

/// Normalised activations and inverse standard deviations kept for the
/// backward pass of batch or instance normalisation.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
}

/// Per-channel batch statistics measured during a training forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance, as used for running averages.
    pub var_unbiased: Vec<T>,
}

/// Iterates the `(sample, channel)` planes of a `[n, c, h, w]` tensor that
/// belong to channel `ch`.
fn channel_planes<T: Copy>(data: &[T], n: usize, c: usize, hw: usize, ch: usize) -> impl Iterator<Item = &[T]> {
    (0..n).map(move |s| &data[(s * c + ch) * hw..(s * c + ch + 1) * hw])
}

/// Batch normalisation using statistics of the current batch.
pub fn batch_norm_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> (Tensor<T>, NormCache<T>, BatchNormStats<T>) {
    let (n, c, h, w) = x.dims4();
    let hw = h * w;
    let m = (n * hw) as f64;
    let stats: Vec<(T, T)> = par::map_range(c, |ch| {
        let mut sum = 0.0;
        for p in channel_planes(x.data(), n, c, hw, ch) {
            sum += p.iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let mean = sum / m;
        let mut ss = 0.0;
        for p in channel_planes(x.data(), n, c, hw, ch) {
            ss += p.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
        }
        (T::lit(mean), T::lit(ss / m))
    });
    let inv_std: Vec<T> = stats
        .iter()
        .map(|&(_, var)| T::one() / (var + T::lit(NORM_EPS)).sqrt())
        .collect();
    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    let xd = x.data();
    par::for_each_chunk_mut(xhat.data_mut(), hw, |plane, out| {
        let ch = plane % c;
        let src = &xd[plane * hw..(plane + 1) * hw];
        let (mean, is) = (stats[ch].0, inv_std[ch]);
        out.iter_mut().zip(src).for_each(|(o, &v)| *o = (v - mean) * is);
    });
    let xh = xhat.data();
    par::for_each_chunk_mut(y.data_mut(), hw, |plane, out| {
        let ch = plane % c;
        let (g, b) = (gamma.data()[ch], beta.data()[ch]);
        out.iter_mut()
            .zip(&xh[plane * hw..(plane + 1) * hw])
            .for_each(|(o, &v)| *o = g * v + b);
    });
    let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
    let batch_stats = BatchNormStats {
        mean: stats.iter().map(|s| s.0).collect(),
        var_unbiased: stats.iter().map(|s| s.1 * T::lit(unbias)).collect(),
    };
    (y, NormCache { xhat, inv_std }, batch_stats)
}

/// Batch normalisation with fixed (running) statistics.
pub fn batch_norm_eval<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
) -> Tensor<T> {
    let (_, c, h, w) = x.dims4();
    let hw = h * w;
    let mut y = x.clone();
    par::for_each_chunk_mut(y.data_mut(), hw, |plane, out| {
        let ch = plane % c;
        let is = T::one() / (running_var.data()[ch] + T::lit(NORM_EPS)).sqrt();
        let scale = gamma.data()[ch] * is;
        let shift = beta.data()[ch] - running_mean.data()[ch] * scale;
        out.iter_mut().for_each(|v| *v = *v * scale + shift);
    });
    y
}

/// Backward pass of [`batch_norm_train`]. Returns `dx` and accumulates into
/// `dgamma` / `dbeta`.
pub fn batch_norm_backward<T: Scalar>(
    dy: &Tensor<T>,
    cache: &NormCache<T>,
    gamma: &Tensor<T>,
    dgamma: &mut Tensor<T>,
    dbeta: &mut Tensor<T>,
) -> Tensor<T> {
    let (n, c, h, w) = dy.dims4();
    let hw = h * w;
    let m = T::lit((n * hw) as f64);
    let sums: Vec<(T, T)> = par::map_range(c, |ch| {
        let mut s_dy = T::zero();
        let mut s_dyx = T::zero();
        for (d, xh) in channel_planes(dy.data(), n, c, hw, ch).zip(channel_planes(cache.xhat.data(), n, c, hw, ch)) {
            for (&a, &b) in d.iter().zip(xh) {
                s_dy = s_dy + a;
                s_dyx = s_dyx + a * b;
            }
        }
        (s_dy, s_dyx)
    });
    for ch in 0..c {
        dbeta.data_mut()[ch] = dbeta.data()[ch] + sums[ch].0;
        dgamma.data_mut()[ch] = dgamma.data()[ch] + sums[ch].1;
    }
    let mut dx = Tensor::zeros(dy.shape());
    let (dyd, xhd) = (dy.data(), cache.xhat.data());
    par::for_each_chunk_mut(dx.data_mut(), hw, |plane, out| {
        let ch = plane % c;
        let k = gamma.data()[ch] * cache.inv_std[ch] / m;
        let (s_dy, s_dyx) = sums[ch];
        let range = plane * hw..(plane + 1) * hw;
        for ((o, &d), &xh) in out.iter_mut().zip(&dyd[range.clone()]).zip(&xhd[range]) {
            *o = k * (m * d - s_dy - xh * s_dyx);
        }
    });
    dx
}

/// Instance normalisation without affine parameters.
pub fn instance_norm<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, NormCache<T>) {
    let (_, _, h, w) = x.dims4();
    let hw = h * w;
    let xd = x.data();
    let inv_std: Vec<T> = par::map_range(x.len() / hw, |plane| {
        let p = &xd[plane * hw..(plane + 1) * hw];
        let mean = p.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64;
        let var = p.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / hw as f64;
        T::lit(1.0 / (var + NORM_EPS).sqrt())
    });
    let mut xhat = Tensor::zeros(x.shape());
    par::for_each_chunk_mut(xhat.data_mut(), hw, |plane, out| {
        let p = &xd[plane * hw..(plane + 1) * hw];
        let mean = T::lit(p.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64);
        out.iter_mut().zip(p).for_each(|(o, &v)| *o = (v - mean) * inv_std[plane]);
    });
    (xhat.clone(), NormCache { xhat, inv_std })
}

/// Backward pass of [`instance_norm`].
pub fn instance_norm_backward<T: Scalar>(dy: &Tensor<T>, cache: &NormCache<T>) -> Tensor<T> {
    let (_, _, h, w) = dy.dims4();
    let hw = h * w;
    let m = T::lit(hw as f64);
    let mut dx = Tensor::zeros(dy.shape());
    let (dyd, xhd) = (dy.data(), cache.xhat.data());
    par::for_each_chunk_mut(dx.data_mut(), hw, |plane, out| {
        let range = plane * hw..(plane + 1) * hw;
        let d = &dyd[range.clone()];
        let xh = &xhd[range];
        let s_dy: T = d.iter().copied().sum();
        let s_dyx: T = d.iter().zip(xh).map(|(&a, &b)| a * b).sum();
        let k = cache.inv_std[plane] / m;
        for ((o, &dv), &xv) in out.iter_mut().zip(d).zip(xh) {
            *o = k * (m * dv - s_dy - xv * s_dyx);
        }
    });
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn batch_norm_normalises_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[3, 2, 4, 4], &mut rng);
        let g = Tensor::full(&[2], 1.0);
        let b = Tensor::zeros(&[2]);
        let (y, _, stats) = batch_norm_train(&x, &g, &b);
        for ch in 0..2 {
            let vals: Vec<f64> = channel_planes(y.data(), 3, 2, 16, ch).flatten().copied().collect();
            let mean = vals.iter().sum::<f64>() / 48.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 48.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
        // Eval mode with the batch's own biased stats reproduces training output.
        let biased: Vec<f64> = stats.var_unbiased.iter().map(|v| v * 47.0 / 48.0).collect();
        let ye = batch_norm_eval(
            &x,
            &g,
            &b,
            &Tensor::from_vec(&[2], stats.mean.clone()).unwrap(),
            &Tensor::from_vec(&[2], biased).unwrap(),
        );
        for (a, b) in y.data().iter().zip(ye.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn batch_norm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[2, 3, 3, 2], &mut rng);
        let g = random(&[3], &mut rng);
        let b = random(&[3], &mut rng);
        let r = random(x.shape(), &mut rng);
        let loss = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            let (y, _, _) = batch_norm_train(x, g, b);
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache, _) = batch_norm_train(&x, &g, &b);
        let mut dg = Tensor::zeros(&[3]);
        let mut db = Tensor::zeros(&[3]);
        let dx = batch_norm_backward(&r, &cache, &g, &mut dg, &mut db);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&xp, &g, &b) - loss(&xm, &g, &b)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-5, "dx[{i}] {fd} vs {}", dx.data()[i]);
        }
        for i in 0..3 {
            let mut gp = g.clone();
            gp.data_mut()[i] += h;
            let mut gm = g.clone();
            gm.data_mut()[i] -= h;
            let fd = (loss(&x, &gp, &b) - loss(&x, &gm, &b)) / (2.0 * h);
            assert!((fd - dg.data()[i]).abs() < 1e-5);
            let mut bp = b.clone();
            bp.data_mut()[i] += h;
            let mut bm = b.clone();
            bm.data_mut()[i] -= h;
            let fd = (loss(&x, &g, &bp) - loss(&x, &g, &bm)) / (2.0 * h);
            assert!((fd - db.data()[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn instance_norm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[2, 2, 3, 3], &mut rng);
        let r = random(x.shape(), &mut rng);
        let loss = |x: &Tensor<f64>| -> f64 {
            instance_norm(x).0.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = instance_norm(&x);
        let dx = instance_norm_backward(&r, &cache);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-5);
        }
    }
}
