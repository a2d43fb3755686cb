//! Losses, the λ schedule, supervised training on synthetic composites and
//! teacher–student adversarial adaptation on real captures.

mod adobe;
mod loss;
mod metrics;
mod real;

pub use adobe::{train_adobe, AdobeTrainer};
pub use loss::{
    composite_tensor, discriminator_loss_grad, gradient_tensor, image_gradient, least_squares, matting_loss,
    AlphaGradient, MattingTargets, MattingTerms, TermWeights, PSEUDO_WEIGHTS, SUPERVISED_WEIGHTS,
};
pub use metrics::{EpochRecord, MetricsLog, Phase, StepRecord};
pub use real::{pseudo_gt, train_real, PseudoGT, RealExample, RealTrainer};

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::SynExample;
use crate::error::{check_same_size, MattingError, Result};
use crate::model::{images_to_tensor, planes_to_tensor, Discriminator, Generator, MattingInput};
use crate::nn::{AdamConfig, Scalar, Tensor};
use crate::raster::{AlphaMatte, Image};

/// Optimisation settings for both training phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub lambda0: f64,
    pub lambda_halve_every: usize,
    pub d_update_every: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fixed number of steps per epoch; by default one pass over the data.
    pub steps_per_epoch: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            lr_g: 1e-4,
            lr_d: 1e-5,
            lambda0: 0.05,
            lambda_halve_every: 2,
            d_update_every: 5,
            epochs: 10,
            seed: 0,
            steps_per_epoch: None,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("lambda_halve_every", self.lambda_halve_every),
            ("d_update_every", self.d_update_every),
            ("epochs", self.epochs),
            ("steps_per_epoch", self.steps_per_epoch.unwrap_or(1)),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(MattingError::contract(format!("train config: {name} must be positive")));
            }
        }
        let reals = [("lr_g", self.lr_g), ("lr_d", self.lr_d), ("lambda0", self.lambda0)];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MattingError::contract(format!("train config: {name} must be positive")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(MattingError::contract(format!("train config: {name} must lie in [0, 1)")));
            }
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::with_lr(lr)
        }
    }

    fn steps_for(&self, examples: usize) -> usize {
        self.steps_per_epoch
            .unwrap_or_else(|| examples.div_ceil(self.batch_size))
    }
}

/// Pseudo-label weight for an epoch: `λ0 · 0.5^⌊epoch / halve_every⌋`.
pub fn lambda_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let halvings = (epoch / cfg.lambda_halve_every.max(1)) as i32;
    cfg.lambda0 * 0.5f64.powi(halvings)
}

/// Receives progress from the trainers. Returning `Break` stops training
/// after the current step or epoch.
pub trait TrainObserver {
    fn on_step(&mut self, _rec: &StepRecord) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }

    fn on_epoch(
        &mut self,
        _rec: &EpochRecord,
        _generator: &Generator<f32>,
        _discriminator: Option<&Discriminator<f32>>,
    ) -> Result<ControlFlow<()>> {
        Ok(ControlFlow::Continue(()))
    }
}

impl TrainObserver for () {}

/// Shuffled visiting order for one epoch, reproducible from the seed.
fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

/// Indices of step `step` within an epoch, cycling through `order`.
fn batch_indices(order: &[usize], step: usize, batch: usize) -> Vec<usize> {
    (0..batch).map(|k| order[(step * batch + k) % order.len()]).collect()
}

fn to_f64_tensor<T: Scalar>(t: &Tensor<T>) -> Tensor<f64> {
    t.cast()
}

// Losses on rasters run in f32 like the rasters themselves, so a
// self-consistent example scores exactly zero.
fn image_tensor(img: &Image) -> Tensor<f32> {
    images_to_tensor(&[img])
}

fn alpha_tensor(a: &AlphaMatte) -> Tensor<f32> {
    planes_to_tensor(&[a], 1)
}

/// Supervised loss of a prediction `(F, α)` against a synthetic example.
/// The composition term uses the true background `B`.
pub fn supervised_loss(fg: &Image, alpha: &AlphaMatte, ex: &SynExample) -> Result<MattingTerms> {
    check_same_size("predicted alpha", ex.size(), alpha.size())?;
    check_same_size("predicted foreground", ex.size(), fg.size())?;
    let (fg_gt, a_gt, img, bg) = (
        image_tensor(&ex.fg_gt),
        alpha_tensor(&ex.alpha_gt),
        image_tensor(&ex.img),
        image_tensor(&ex.bg_true),
    );
    let target = MattingTargets {
        fg: &fg_gt,
        alpha: &a_gt,
        img: &img,
        bg: &bg,
    };
    let (terms, _, _) = matting_loss(&image_tensor(fg), &alpha_tensor(alpha), &target, SUPERVISED_WEIGHTS, 1.0);
    Ok(terms)
}

/// Terms of the adversarial-phase generator loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GeneratorTerms {
    /// `mean((D(composite) − 1)²)`.
    pub adversarial: f64,
    /// Pseudo-label terms; `pseudo.total` already includes λ.
    pub pseudo: MattingTerms,
    pub lambda: f64,
    pub total: f64,
}

/// Generator loss on real data. `d_scores` are the discriminator scores of
/// the prediction composited over `novel_bg`; the composition term uses the
/// captured plate `x.background`.
pub fn generator_loss<T: Scalar>(
    fg: &Image,
    alpha: &AlphaMatte,
    pseudo: &PseudoGT,
    d_scores: &Tensor<T>,
    x: &MattingInput,
    novel_bg: &Image,
    lambda: f64,
) -> Result<GeneratorTerms> {
    check_same_size("novel background", x.size(), novel_bg.size())?;
    check_same_size("predicted alpha", x.size(), alpha.size())?;
    check_same_size("pseudo alpha", x.size(), pseudo.alpha.size())?;
    let (adversarial, _) = least_squares(&to_f64_tensor(d_scores), 1.0);
    let (pf, pa, img, bg) = (
        image_tensor(&pseudo.fg),
        alpha_tensor(&pseudo.alpha),
        image_tensor(&x.image),
        image_tensor(&x.background),
    );
    let target = MattingTargets {
        fg: &pf,
        alpha: &pa,
        img: &img,
        bg: &bg,
    };
    let (terms, _, _) = matting_loss(&image_tensor(fg), &alpha_tensor(alpha), &target, PSEUDO_WEIGHTS, lambda);
    Ok(GeneratorTerms {
        adversarial,
        pseudo: terms,
        lambda,
        total: adversarial + terms.total,
    })
}

/// `mean(d_fake²) + mean((d_real − 1)²)`.
pub fn discriminator_loss<T: Scalar>(d_fake: &Tensor<T>, d_real: &Tensor<T>) -> f64 {
    discriminator_loss_grad(d_fake, d_real).0
}
