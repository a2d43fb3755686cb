//! Building blocks shared by the generator: conv + batch norm (+ ReLU)
//! units, plain convolutions, and the tape that records what backward needs.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::ops::{
    batch_norm_backward, batch_norm_eval, batch_norm_train, conv2d, conv2d_backward, relu, relu_backward,
    BatchNormStats, ConvGeom, NormCache,
};
use crate::nn::{ParamId, ParamStore, Scalar, Tensor};

/// Running-statistics momentum.
pub(crate) const BN_MOMENTUM: f64 = 0.1;

pub(crate) fn normal_tensor<T: Scalar>(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::from_vec(shape, (0..n).map(|_| T::lit(dist.sample(rng))).collect()).expect("length matches")
}

/// One recorded step of a training forward pass.
#[derive(Debug)]
pub(crate) enum Entry<T> {
    Unit {
        x: Tensor<T>,
        cache: NormCache<T>,
        /// Post-ReLU output, kept only for units with an activation.
        y: Option<Tensor<T>>,
    },
    Conv {
        x: Tensor<T>,
    },
    /// Output of a tanh.
    Tanh {
        y: Tensor<T>,
    },
    /// Input of a [0, 1] clamp.
    Clamp {
        z: Tensor<T>,
    },
}

/// Forward-pass context: inference, or training with a tape.
pub(crate) struct Ctx<'a, T> {
    pub train: bool,
    pub tape: Vec<Entry<T>>,
    pub stats: Vec<(ParamId, ParamId, BatchNormStats<T>)>,
    pub log: Option<&'a mut Vec<(String, Vec<usize>)>>,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    pub fn eval(log: Option<&'a mut Vec<(String, Vec<usize>)>>) -> Self {
        Ctx {
            train: false,
            tape: Vec::new(),
            stats: Vec::new(),
            log,
        }
    }

    pub fn train() -> Self {
        Ctx {
            train: true,
            tape: Vec::new(),
            stats: Vec::new(),
            log: None,
        }
    }

    pub fn record(&mut self, name: &str, t: &Tensor<T>) {
        if let Some(log) = self.log.as_deref_mut() {
            log.push((name.to_string(), t.shape()[1..].to_vec()));
        }
    }

    pub fn pop(&mut self) -> Entry<T> {
        self.tape.pop().expect("tape exhausted: backward does not mirror forward")
    }
}

/// Applies batch statistics collected during a training pass to the
/// running-average buffers.
pub(crate) fn apply_running_stats<T: Scalar>(
    buffers: &mut ParamStore<T>,
    stats: Vec<(ParamId, ParamId, BatchNormStats<T>)>,
) {
    let m = T::lit(BN_MOMENTUM);
    let keep = T::one() - m;
    for (mean_id, var_id, s) in stats {
        for (r, &b) in buffers.get_mut(mean_id).data_mut().iter_mut().zip(&s.mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in buffers.get_mut(var_id).data_mut().iter_mut().zip(&s.var_unbiased) {
            *r = keep * *r + m * b;
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut ParamStore<T>, id: ParamId, g: &Tensor<T>) {
    grads.get_mut(id).add_assign(g);
}

/// Convolution without bias, batch normalisation, optional ReLU.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvBn {
    pub weight: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: ParamId,
    pub var: ParamId,
    pub geom: ConvGeom,
    pub relu: bool,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Scalar>(
        params: &mut ParamStore<T>,
        buffers: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        geom: ConvGeom,
        relu: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (c_in * k * k) as f64;
        let weight = params.add(
            format!("{name}.conv.weight"),
            normal_tensor(&[c_out, c_in, k, k], (2.0 / fan_in).sqrt(), rng),
        );
        let gamma = params.add(format!("{name}.bn.weight"), Tensor::full(&[c_out], T::one()));
        let beta = params.add(format!("{name}.bn.bias"), Tensor::zeros(&[c_out]));
        let mean = buffers.add(format!("{name}.bn.running_mean"), Tensor::zeros(&[c_out]));
        let var = buffers.add(format!("{name}.bn.running_var"), Tensor::full(&[c_out], T::one()));
        ConvBn {
            weight,
            gamma,
            beta,
            mean,
            var,
            geom,
            relu,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        buffers: &ParamStore<T>,
        x: &Tensor<T>,
        ctx: &mut Ctx<'_, T>,
    ) -> Tensor<T> {
        let z = conv2d(x, params.get(self.weight), None, self.geom);
        let (gamma, beta) = (params.get(self.gamma), params.get(self.beta));
        if ctx.train {
            let (y, cache, stats) = batch_norm_train(&z, gamma, beta);
            ctx.stats.push((self.mean, self.var, stats));
            let y = if self.relu { relu(&y) } else { y };
            ctx.tape.push(Entry::Unit {
                x: x.clone(),
                cache,
                y: self.relu.then(|| y.clone()),
            });
            y
        } else {
            let y = batch_norm_eval(&z, gamma, beta, buffers.get(self.mean), buffers.get(self.var));
            if self.relu {
                relu(&y)
            } else {
                y
            }
        }
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        entry: Entry<T>,
        dy: &Tensor<T>,
        grads: &mut ParamStore<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let Entry::Unit { x, cache, y } = entry else {
            panic!("tape mismatch: expected a conv-bn unit");
        };
        let dz = match &y {
            Some(y) => relu_backward(y, dy),
            None => dy.clone(),
        };
        let gamma = params.get(self.gamma);
        let mut dgamma = Tensor::zeros(gamma.shape());
        let mut dbeta = Tensor::zeros(gamma.shape());
        let dconv = batch_norm_backward(&dz, &cache, gamma, &mut dgamma, &mut dbeta);
        accumulate(grads, self.gamma, &dgamma);
        accumulate(grads, self.beta, &dbeta);
        let g = conv2d_backward(&x, params.get(self.weight), &dconv, self.geom, need_dx, true, false);
        accumulate(grads, self.weight, g.dweight.as_ref().expect("requested"));
        g.dx
    }
}

/// Plain convolution with bias (output layers).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geom: ConvGeom,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Scalar>(
        params: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        geom: ConvGeom,
        std: f64,
        bias_init: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), normal_tensor(&[c_out, c_in, k, k], std, rng));
        let bias = params.add(format!("{name}.bias"), Tensor::full(&[c_out], T::lit(bias_init)));
        Conv { weight, bias, geom }
    }

    pub fn forward<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor<T>, ctx: &mut Ctx<'_, T>) -> Tensor<T> {
        let y = conv2d(x, params.get(self.weight), Some(params.get(self.bias)), self.geom);
        if ctx.train {
            ctx.tape.push(Entry::Conv { x: x.clone() });
        }
        y
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        entry: Entry<T>,
        dy: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Tensor<T> {
        let Entry::Conv { x } = entry else {
            panic!("tape mismatch: expected a convolution");
        };
        let g = conv2d_backward(&x, params.get(self.weight), dy, self.geom, true, true, true);
        accumulate(grads, self.weight, g.dweight.as_ref().expect("requested"));
        accumulate(grads, self.bias, g.dbias.as_ref().expect("requested"));
        g.dx.expect("requested")
    }
}

/// Residual block: ConvBnReLU then ConvBn, plus the identity.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ResBlock {
    pub a: ConvBn,
    pub b: ConvBn,
}

impl ResBlock {
    pub fn register<T: Scalar>(
        params: &mut ParamStore<T>,
        buffers: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let g = ConvGeom::new(1, 1);
        ResBlock {
            a: ConvBn::register(params, buffers, &format!("{name}.a"), channels, channels, 3, g, true, rng),
            b: ConvBn::register(params, buffers, &format!("{name}.b"), channels, channels, 3, g, false, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        buffers: &ParamStore<T>,
        x: &Tensor<T>,
        ctx: &mut Ctx<'_, T>,
    ) -> Tensor<T> {
        let h = self.a.forward(params, buffers, x, ctx);
        let mut h = self.b.forward(params, buffers, &h, ctx);
        h.add_assign(x);
        h
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        ctx: &mut Ctx<'_, T>,
        dy: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Tensor<T> {
        let dh = self.b.backward(params, ctx.pop(), dy, grads, true).expect("requested");
        let mut dx = self.a.backward(params, ctx.pop(), &dh, grads, true).expect("requested");
        dx.add_assign(dy);
        dx
    }
}
