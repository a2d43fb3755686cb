use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::normal_tensor;
use super::NetConfig;
use crate::error::{MattingError, Result};
use crate::nn::ops::{
    conv2d, conv2d_backward, conv_output_size, instance_norm, instance_norm_backward, leaky_relu,
    leaky_relu_backward, ConvGeom, NormCache,
};
use crate::nn::{ParamId, ParamStore, Scalar, Tensor};

const SLOPE: f64 = 0.2;
const KERNEL: usize = 4;
const DOWN: ConvGeom = ConvGeom::new(2, 1);
const HEAD: ConvGeom = ConvGeom::new(1, 1);

#[derive(Clone, Copy, Debug)]
struct Layer {
    weight: ParamId,
    /// First block and the scoring head carry a bias; instance-normalised
    /// blocks would cancel it.
    bias: Option<ParamId>,
    norm: bool,
    geom: ConvGeom,
}

/// Recorded values of a discriminator forward pass.
#[derive(Debug)]
pub struct DiscTape<T> {
    inputs: Vec<Tensor<T>>,
    norms: Vec<Option<NormCache<T>>>,
    /// Leaky-ReLU inputs of the four down-sampling blocks.
    pre_act: Vec<Tensor<T>>,
}

/// LS-GAN patch discriminator: four stride-2 4×4 blocks (instance norm on
/// all but the first, leaky ReLU 0.2) and a 4×4 head producing a
/// one-channel score map with no output nonlinearity.
#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    base: usize,
    params: ParamStore<T>,
    layers: Vec<Layer>,
}

impl<T: Scalar> Discriminator<T> {
    /// Smallest accepted input side.
    pub const MIN_INPUT: usize = 70;

    pub fn init(base_channels: usize, seed: u64) -> Result<Self> {
        if base_channels == 0 {
            return Err(MattingError::contract("discriminator width must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut layers = Vec::new();
        let widths = [3, base_channels, 2 * base_channels, 4 * base_channels, 8 * base_channels];
        for i in 0..4 {
            let weight = params.add(
                format!("d.{i}.weight"),
                normal_tensor(&[widths[i + 1], widths[i], KERNEL, KERNEL], 0.02, &mut rng),
            );
            let bias = (i == 0).then(|| params.add(format!("d.{i}.bias"), Tensor::zeros(&[widths[1]])));
            layers.push(Layer {
                weight,
                bias,
                norm: i > 0,
                geom: DOWN,
            });
        }
        let weight = params.add("d.out.weight", normal_tensor(&[1, widths[4], KERNEL, KERNEL], 0.02, &mut rng));
        let bias = Some(params.add("d.out.bias", Tensor::zeros(&[1])));
        layers.push(Layer {
            weight,
            bias,
            norm: false,
            geom: HEAD,
        });
        Ok(Discriminator {
            base: base_channels,
            params,
            layers,
        })
    }

    /// Width taken from the generator's `base_channels`.
    pub fn from_config(cfg: &NetConfig, seed: u64) -> Result<Self> {
        Self::init(cfg.base_channels, seed)
    }

    pub fn base_channels(&self) -> usize {
        self.base
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn zero_grads(&self) -> ParamStore<T> {
        self.params.zeros_like()
    }

    /// Side of the score map for an input side `n`.
    pub fn output_size(n: usize) -> usize {
        let mut s = n;
        for _ in 0..4 {
            s = conv_output_size(s, KERNEL, DOWN);
        }
        conv_output_size(s, KERNEL, HEAD)
    }

    /// Input pixels (per side) that influence one score.
    pub fn receptive_field() -> usize {
        let mut r = 1;
        for stride in [1, 2, 2, 2, 2] {
            r = r * stride + (KERNEL - stride);
        }
        r
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4();
        if c != 3 {
            return Err(MattingError::contract(format!("discriminator expects RGB, got {c} channels")));
        }
        if h < Self::MIN_INPUT || w < Self::MIN_INPUT {
            return Err(MattingError::contract(format!(
                "discriminator input {h}x{w} is smaller than {0}x{0}",
                Self::MIN_INPUT
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor<T>, mut tape: Option<&mut DiscTape<T>>) -> Tensor<T> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let z = conv2d(&h, self.params.get(l.weight), l.bias.map(|b| self.params.get(b)), l.geom);
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(std::mem::replace(&mut h, Tensor::zeros(&[0])));
            }
            if i == last {
                return z;
            }
            let (z, cache) = if l.norm {
                let (y, c) = instance_norm(&z);
                (y, Some(c))
            } else {
                (z, None)
            };
            h = leaky_relu(&z, SLOPE);
            if let Some(t) = tape.as_deref_mut() {
                t.norms.push(cache);
                t.pre_act.push(z);
            }
        }
        unreachable!("the head returns")
    }

    /// Score map `[n, 1, h', w']`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        Ok(self.run(x, None))
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, DiscTape<T>)> {
        self.check(x)?;
        let mut tape = DiscTape {
            inputs: Vec::new(),
            norms: Vec::new(),
            pre_act: Vec::new(),
        };
        let y = self.run(x, Some(&mut tape));
        Ok((y, tape))
    }

    /// Returns `dL/dx`. Parameter gradients are accumulated when `grads` is
    /// given.
    pub fn backward(&self, mut tape: DiscTape<T>, dscore: &Tensor<T>, mut grads: Option<&mut ParamStore<T>>) -> Tensor<T> {
        let mut d = dscore.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            if i < self.layers.len() - 1 {
                let z = tape.pre_act.pop().expect("tape holds every block");
                d = leaky_relu_backward(&z, &d, SLOPE);
                if let Some(cache) = tape.norms.pop().expect("tape holds every block") {
                    d = instance_norm_backward(&d, &cache);
                }
            }
            let x = tape.inputs.pop().expect("tape holds every layer");
            let g = conv2d_backward(&x, self.params.get(l.weight), &d, l.geom, true, grads.is_some(), l.bias.is_some());
            if let Some(gs) = grads.as_deref_mut() {
                gs.get_mut(l.weight).add_assign(g.dweight.as_ref().expect("requested"));
                if let Some(b) = l.bias {
                    gs.get_mut(b).add_assign(g.dbias.as_ref().expect("requested"));
                }
            }
            d = g.dx.expect("requested");
        }
        d
    }
}
