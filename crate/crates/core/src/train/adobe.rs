use std::ops::ControlFlow;

use super::{batch_indices, epoch_order, matting_loss, EpochRecord, MattingTargets, Phase, StepRecord, TrainConfig, TrainObserver, SUPERVISED_WEIGHTS};
use crate::augment::SynExample;
use crate::error::{MattingError, Result};
use crate::evalpost::sad;
use crate::model::{images_to_tensor, planes_to_tensor, Archive, Generator, InputBatch, NetConfig};
use crate::nn::{Adam, ParamStore, Tensor};

pub(crate) struct SynBatch {
    pub input: InputBatch<f32>,
    pub fg: Tensor<f32>,
    pub alpha: Tensor<f32>,
    pub img: Tensor<f32>,
    pub bg: Tensor<f32>,
    pub keys: Vec<String>,
}

pub(crate) fn syn_batch(examples: &[&SynExample]) -> SynBatch {
    let imgs: Vec<_> = examples.iter().map(|e| &e.img).collect();
    let bg_in: Vec<_> = examples.iter().map(|e| &e.bg_input).collect();
    let bg_true: Vec<_> = examples.iter().map(|e| &e.bg_true).collect();
    let fgs: Vec<_> = examples.iter().map(|e| &e.fg_gt).collect();
    let alphas: Vec<_> = examples.iter().map(|e| &e.alpha_gt).collect();
    let segs: Vec<_> = examples.iter().map(|e| &e.seg).collect();
    let mots: Vec<_> = examples.iter().flat_map(|e| e.motion.frames.iter()).collect();
    let img = images_to_tensor(&imgs);
    SynBatch {
        input: InputBatch {
            image: img.clone(),
            background: images_to_tensor(&bg_in),
            segmentation: planes_to_tensor(&segs, 1),
            motion: planes_to_tensor(&mots, 4),
        },
        fg: images_to_tensor(&fgs),
        alpha: planes_to_tensor(&alphas, 1),
        img,
        bg: images_to_tensor(&bg_true),
        keys: examples.iter().map(|e| e.key.clone()).collect(),
    }
}

/// Supervised training on synthetic composites with Adam.
pub struct AdobeTrainer {
    cfg: TrainConfig,
    generator: Generator<f32>,
    adam: Adam<f32>,
    step: u64,
    epoch: usize,
}

impl AdobeTrainer {
    /// Fresh generator initialised from `cfg.seed`.
    pub fn new(netcfg: &NetConfig, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let generator = Generator::init(netcfg, cfg.seed)?;
        let adam = Adam::new(cfg.adam(cfg.lr_g), generator.params());
        Ok(AdobeTrainer {
            cfg: cfg.clone(),
            generator,
            adam,
            step: 0,
            epoch: 0,
        })
    }

    pub fn generator(&self) -> &Generator<f32> {
        &self.generator
    }

    pub fn into_generator(self) -> Generator<f32> {
        self.generator
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Next epoch to run.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One Adam step on a batch; returns the step record.
    pub fn train_step(&mut self, batch: &[&SynExample]) -> Result<StepRecord> {
        if batch.is_empty() {
            return Err(MattingError::contract("empty training batch"));
        }
        let b = syn_batch(batch);
        let (out, tape) = self.generator.train_pass(&b.input)?;
        let target = MattingTargets {
            fg: &b.fg,
            alpha: &b.alpha,
            img: &b.img,
            bg: &b.bg,
        };
        let (terms, dfg, dalpha) = matting_loss(&out.fg, &out.alpha, &target, SUPERVISED_WEIGHTS, 1.0);
        self.step += 1;
        if !terms.total.is_finite() {
            return Err(MattingError::NonFiniteLoss {
                step: self.step,
                batch: b.keys.join(","),
            });
        }
        let mut tape = tape;
        self.generator.update_running_stats(&mut tape);
        let mut grads = self.generator.zero_grads();
        self.generator.backward(tape, &dfg, &dalpha, &mut grads);
        if !grads.all_finite() {
            return Err(MattingError::NonFiniteLoss {
                step: self.step,
                batch: b.keys.join(","),
            });
        }
        self.adam.step(self.generator.params_mut(), &grads);
        Ok(StepRecord {
            phase: Phase::Adobe,
            step: self.step,
            epoch: self.epoch,
            loss: terms.total,
            terms,
            lambda: None,
            adversarial: None,
            d_loss: None,
            batch: b.keys,
        })
    }

    /// Runs the remaining epochs. Stops early when the observer asks.
    pub fn run(&mut self, data: &[SynExample], val: &[SynExample], observer: &mut dyn TrainObserver) -> Result<()> {
        if data.is_empty() {
            return Err(MattingError::contract("training set is empty"));
        }
        let steps = self.cfg.steps_for(data.len());
        while self.epoch < self.cfg.epochs {
            let order = epoch_order(data.len(), self.cfg.seed, self.epoch);
            let mut total = 0.0;
            for s in 0..steps {
                let idx = batch_indices(&order, s, self.cfg.batch_size.min(data.len()));
                let batch: Vec<&SynExample> = idx.iter().map(|&i| &data[i]).collect();
                let rec = self.train_step(&batch)?;
                total += rec.loss;
                if observer.on_step(&rec).is_break() {
                    return Ok(());
                }
            }
            let rec = EpochRecord {
                phase: Phase::Adobe,
                epoch: self.epoch,
                steps: self.step,
                mean_loss: total / steps as f64,
                lambda: None,
                val_sad: if val.is_empty() { None } else { Some(mean_sad(&self.generator, val)?) },
            };
            self.epoch += 1;
            if observer.on_epoch(&rec, &self.generator, None)? == ControlFlow::Break(()) {
                return Ok(());
            }
        }
        Ok(())
    }

    /// Full training state (weights, optimiser moments, counters).
    pub fn to_archive(&self) -> Archive {
        let mut a = self.generator.to_archive();
        a.kind = "adobe-state".into();
        let (m, v) = self.adam.moments();
        a.push_store("adam_m", m);
        a.push_store("adam_v", v);
        a.meta = serde_json::json!({
            "step": self.step,
            "epoch": self.epoch,
            "train": self.cfg,
        });
        a
    }

    /// Resumes from [`Self::to_archive`] output. `cfg` replaces the stored
    /// training config (e.g. to extend the epoch count).
    pub fn from_archive(a: &Archive, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if a.kind != "adobe-state" {
            return Err(MattingError::Checkpoint(format!("expected a training state, found {}", a.kind)));
        }
        let mut g = a.clone();
        g.kind = "generator".into();
        let generator = Generator::from_archive(&g, None)?;
        let mut m: ParamStore<f32> = generator.zero_grads();
        let mut v: ParamStore<f32> = generator.zero_grads();
        a.fill_store("adam_m", &mut m)?;
        a.fill_store("adam_v", &mut v)?;
        let counter = |k: &str| {
            a.meta
                .get(k)
                .and_then(|x| x.as_u64())
                .ok_or_else(|| MattingError::Checkpoint(format!("training state lacks {k}")))
        };
        let step = counter("step")?;
        let epoch = counter("epoch")? as usize;
        Ok(AdobeTrainer {
            cfg: cfg.clone(),
            adam: Adam::restore(cfg.adam(cfg.lr_g), m, v, step),
            generator,
            step,
            epoch,
        })
    }
}

/// Mean SAD of inference-mode predictions over `examples`.
pub(crate) fn mean_sad(g: &Generator<f32>, examples: &[SynExample]) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let out = g.forward(&syn_batch(&[ex]).input)?;
        total += sad(&out.alpha_matte(0), &ex.alpha_gt)?;
    }
    Ok(total / examples.len() as f64)
}

/// Trains a generator from scratch on `dataset`.
pub fn train_adobe(dataset: &[SynExample], cfg: &TrainConfig, netcfg: &NetConfig) -> Result<Generator<f32>> {
    let mut t = AdobeTrainer::new(netcfg, cfg)?;
    t.run(dataset, &[], &mut ())?;
    Ok(t.into_generator())
}
