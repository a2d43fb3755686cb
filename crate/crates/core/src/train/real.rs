use std::ops::ControlFlow;

use super::loss::{composite_backward, composite_tensor, discriminator_loss_grad, least_squares};
use super::{
    batch_indices, epoch_order, lambda_schedule, matting_loss, EpochRecord, MattingTargets, Phase, StepRecord,
    TrainConfig, TrainObserver, PSEUDO_WEIGHTS,
};
use crate::error::{check_same_size, MattingError, Result};
use crate::model::{images_to_tensor, Discriminator, Generator, InputBatch, MattingInput, NetConfig};
use crate::nn::{Adam, Tensor};
use crate::raster::{AlphaMatte, Image};

/// Teacher outputs `(F̃, α̃)` used as soft labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoGT {
    pub fg: Image,
    pub alpha: AlphaMatte,
}

/// One inference pass of the frozen teacher.
pub fn pseudo_gt(teacher: &Generator<f32>, x: &MattingInput) -> Result<PseudoGT> {
    let (fg, alpha) = teacher.predict(x)?;
    Ok(PseudoGT { fg, alpha })
}

/// A real capture and a novel background for the fake composite.
#[derive(Clone, Debug, PartialEq)]
pub struct RealExample {
    pub key: String,
    pub x: MattingInput,
    pub novel_bg: Image,
}

impl RealExample {
    pub fn new(key: impl Into<String>, x: MattingInput, novel_bg: Image) -> Result<Self> {
        check_same_size("novel background", x.size(), novel_bg.size())?;
        Ok(RealExample {
            key: key.into(),
            x,
            novel_bg,
        })
    }
}

/// Mean |score| above which the discriminator is considered diverged.
const SATURATION: f64 = 100.0;

fn mean_abs(t: &Tensor<f32>) -> f64 {
    t.data().iter().map(|v| v.abs() as f64).sum::<f64>() / t.len().max(1) as f64
}

/// Adversarial teacher–student training of a fresh student and a patch
/// discriminator.
pub struct RealTrainer {
    cfg: TrainConfig,
    student: Generator<f32>,
    disc: Discriminator<f32>,
    adam_g: Adam<f32>,
    adam_d: Adam<f32>,
    step: u64,
    epoch: usize,
    d_updates: u64,
}

impl RealTrainer {
    /// Student and discriminator are randomly initialised from `cfg.seed`.
    pub fn new(netcfg: &NetConfig, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let student = Generator::init(netcfg, cfg.seed.wrapping_add(1))?;
        let disc = Discriminator::from_config(netcfg, cfg.seed.wrapping_add(2))?;
        Ok(RealTrainer {
            adam_g: Adam::new(cfg.adam(cfg.lr_g), student.params()),
            adam_d: Adam::new(cfg.adam(cfg.lr_d), disc.params()),
            cfg: cfg.clone(),
            student,
            disc,
            step: 0,
            epoch: 0,
            d_updates: 0,
        })
    }

    pub fn student(&self) -> &Generator<f32> {
        &self.student
    }

    pub fn discriminator(&self) -> &Discriminator<f32> {
        &self.disc
    }

    pub fn into_parts(self) -> (Generator<f32>, Discriminator<f32>) {
        (self.student, self.disc)
    }

    /// Generator steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn d_updates(&self) -> u64 {
        self.d_updates
    }

    /// One generator step, followed by a discriminator step when the step
    /// counter is a multiple of `d_update_every`.
    pub fn train_step(&mut self, teacher: &Generator<f32>, batch: &[&RealExample]) -> Result<StepRecord> {
        if batch.is_empty() {
            return Err(MattingError::contract("empty training batch"));
        }
        let lambda = lambda_schedule(self.epoch, &self.cfg);
        let inputs: Vec<&MattingInput> = batch.iter().map(|e| &e.x).collect();
        let keys: Vec<String> = batch.iter().map(|e| e.key.clone()).collect();
        let x = InputBatch::<f32>::from_inputs(&inputs)?;
        let novel: Vec<&Image> = batch.iter().map(|e| &e.novel_bg).collect();
        let novel = images_to_tensor::<f32>(&novel);

        let pseudo = teacher.forward(&x)?;
        let (out, tape) = self.student.train_pass(&x)?;
        let fake = composite_tensor(&out.fg, &out.alpha, &novel);
        let (scores, dtape) = self.disc.forward_train(&fake)?;
        let (adversarial, dscores) = least_squares(&scores, 1.0);
        let target = MattingTargets {
            fg: &pseudo.fg,
            alpha: &pseudo.alpha,
            img: &x.image,
            bg: &x.background,
        };
        let (terms, mut dfg, mut dalpha) = matting_loss(&out.fg, &out.alpha, &target, PSEUDO_WEIGHTS, lambda);
        let loss = adversarial + terms.total;
        self.step += 1;
        if !loss.is_finite() {
            return Err(MattingError::NonFiniteLoss {
                step: self.step,
                batch: keys.join(","),
            });
        }
        let s = mean_abs(&scores);
        if s > SATURATION {
            return Err(MattingError::DiscriminatorSaturated {
                step: self.step,
                mean_abs_score: s,
            });
        }
        let dfake = self.disc.backward(dtape, &dscores, None);
        composite_backward(&dfake, &out.fg, &out.alpha, &novel, &mut dfg, &mut dalpha);
        let mut tape = tape;
        self.student.update_running_stats(&mut tape);
        let mut grads = self.student.zero_grads();
        self.student.backward(tape, &dfg, &dalpha, &mut grads);
        self.adam_g.step(self.student.params_mut(), &grads);

        let d_loss = if self.step.is_multiple_of(self.cfg.d_update_every as u64) {
            Some(self.discriminator_step(&fake, &x.image)?)
        } else {
            None
        };
        Ok(StepRecord {
            phase: Phase::Real,
            step: self.step,
            epoch: self.epoch,
            loss,
            terms,
            lambda: Some(lambda),
            adversarial: Some(adversarial),
            d_loss,
            batch: keys,
        })
    }

    fn discriminator_step(&mut self, fake: &Tensor<f32>, real: &Tensor<f32>) -> Result<f64> {
        let (d_fake, tape_f) = self.disc.forward_train(fake)?;
        let (d_real, tape_r) = self.disc.forward_train(real)?;
        let s = mean_abs(&d_fake).max(mean_abs(&d_real));
        if s > SATURATION {
            return Err(MattingError::DiscriminatorSaturated {
                step: self.step,
                mean_abs_score: s,
            });
        }
        let (loss, g_fake, g_real) = discriminator_loss_grad(&d_fake, &d_real);
        if !loss.is_finite() {
            return Err(MattingError::NonFiniteLoss {
                step: self.step,
                batch: "discriminator".into(),
            });
        }
        let mut grads = self.disc.zero_grads();
        self.disc.backward(tape_f, &g_fake, Some(&mut grads));
        self.disc.backward(tape_r, &g_real, Some(&mut grads));
        self.adam_d.step(self.disc.params_mut(), &grads);
        self.d_updates += 1;
        Ok(loss)
    }

    /// Runs the remaining epochs against a frozen teacher.
    pub fn run(&mut self, data: &[RealExample], teacher: &Generator<f32>, observer: &mut dyn TrainObserver) -> Result<()> {
        if data.is_empty() {
            return Err(MattingError::contract("real training set is empty"));
        }
        let steps = self.cfg.steps_for(data.len());
        while self.epoch < self.cfg.epochs {
            let order = epoch_order(data.len(), self.cfg.seed, self.epoch);
            let mut total = 0.0;
            for s in 0..steps {
                let idx = batch_indices(&order, s, self.cfg.batch_size.min(data.len()));
                let batch: Vec<&RealExample> = idx.iter().map(|&i| &data[i]).collect();
                let rec = self.train_step(teacher, &batch)?;
                total += rec.loss;
                if observer.on_step(&rec).is_break() {
                    return Ok(());
                }
            }
            let rec = EpochRecord {
                phase: Phase::Real,
                epoch: self.epoch,
                steps: self.step,
                mean_loss: total / steps as f64,
                lambda: Some(lambda_schedule(self.epoch, &self.cfg)),
                val_sad: None,
            };
            self.epoch += 1;
            if observer.on_epoch(&rec, &self.student, Some(&self.disc))? == ControlFlow::Break(()) {
                return Ok(());
            }
        }
        Ok(())
    }
}

/// Trains a fresh student and discriminator against `teacher`.
pub fn train_real(
    dataset: &[RealExample],
    teacher: &Generator<f32>,
    cfg: &TrainConfig,
    netcfg: &NetConfig,
) -> Result<(Generator<f32>, Discriminator<f32>)> {
    let mut t = RealTrainer::new(netcfg, cfg)?;
    t.run(dataset, teacher, &mut ())?;
    Ok(t.into_parts())
}
