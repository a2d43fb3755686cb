use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bgmatte_core::augment::derive_seed;
use bgmatte_core::model::{Archive, Discriminator, Generator};
use bgmatte_core::train::{AdobeTrainer, EpochRecord, MetricsLog, RealExample, RealTrainer, StepRecord, TrainObserver};
use clap::ValueEnum;
use log::{info, warn};

use super::fit_background;
use crate::capture::{prepare_frame, CaptureSession, Prepared};
use crate::config::{require_dir, require_file, RunConfig};
use crate::dataset::load_dataset;
use crate::error::{CliError, CliResult};
use crate::io::{list_dirs, list_pngs, read_image};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrainPhase {
    /// Supervised training on a synthetic dataset.
    Adobe,
    /// Adversarial teacher-student training on real captures.
    Real,
}

pub const STATE_FILE: &str = "state.ckpt";
pub const METRICS_FILE: &str = "metrics.jsonl";

/// Writes metrics and per-epoch checkpoints; always stops after an epoch
/// so the caller can save optimiser state between epochs.
struct EpochWriter {
    log: MetricsLog,
    dir: PathBuf,
    error: Option<anyhow::Error>,
}

impl EpochWriter {
    fn new(dir: &Path) -> Result<Self> {
        Ok(EpochWriter {
            log: MetricsLog::append(dir.join(METRICS_FILE))?,
            dir: dir.to_path_buf(),
            error: None,
        })
    }
}

impl TrainObserver for EpochWriter {
    fn on_step(&mut self, rec: &StepRecord) -> ControlFlow<()> {
        if let Err(e) = self.log.write("step", rec) {
            self.error = Some(e.into());
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    }

    fn on_epoch(
        &mut self,
        rec: &EpochRecord,
        g: &Generator<f32>,
        d: Option<&Discriminator<f32>>,
    ) -> bgmatte_core::Result<ControlFlow<()>> {
        self.log.write("epoch", rec)?;
        info!(
            "epoch {} done: {} steps, mean loss {:.5}{}",
            rec.epoch,
            rec.steps,
            rec.mean_loss,
            rec.val_sad.map(|s| format!(", validation SAD {s:.4}")).unwrap_or_default()
        );
        g.save(self.dir.join(format!("epoch_{:03}.ckpt", rec.epoch)))?;
        if let Some(d) = d {
            d.to_archive(g.config())
                .save(self.dir.join(format!("discriminator_{:03}.ckpt", rec.epoch)))?;
        }
        Ok(ControlFlow::Break(()))
    }
}

/// Drops log lines written after step `max_step`, so a resumed run does
/// not log the replayed steps twice.
fn trim_metrics(path: &Path, max_step: u64) -> Result<()> {
    let Ok(text) = std::fs::read_to_string(path) else {
        return Ok(());
    };
    let mut kept = String::new();
    for line in text.lines() {
        let v: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let step = v.get("step").or_else(|| v.get("steps")).and_then(|s| s.as_u64());
        if step.is_some_and(|s| s <= max_step) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept).with_context(|| format!("cannot rewrite {}", path.display()))
}

pub fn cmd_train(cfg: &RunConfig, phase: TrainPhase, out: Option<&Path>) -> CliResult<PathBuf> {
    match phase {
        TrainPhase::Adobe => train_adobe(cfg, out),
        TrainPhase::Real => train_real(cfg, out),
    }
}

fn train_adobe(cfg: &RunConfig, out: Option<&Path>) -> CliResult<PathBuf> {
    let data_dir = require_dir(&cfg.paths.dataset, "dataset")?;
    let val_dir = match &cfg.paths.validation {
        Some(_) => Some(require_dir(&cfg.paths.validation, "validation")?),
        None => None,
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir().join("adobe"));
    let state_path = dir.join(STATE_FILE);
    let resume = if state_path.is_file() {
        let a = Archive::load(&state_path)?;
        if a.config != cfg.net {
            return Err(CliError::config(format!(
                "{} was trained with a different [net] configuration",
                state_path.display()
            )));
        }
        Some(a)
    } else {
        None
    };

    let data = load_dataset(&data_dir)?;
    let val = match &val_dir {
        Some(v) => load_dataset(v)?,
        None => Vec::new(),
    };
    info!("training on {} examples from {}", data.len(), data_dir.display());
    std::fs::create_dir_all(&dir)?;
    let mut trainer = match resume {
        Some(a) => {
            let t = AdobeTrainer::from_archive(&a, &cfg.train)?;
            info!("resuming at epoch {} (step {})", t.epoch(), t.steps());
            trim_metrics(&dir.join(METRICS_FILE), t.steps())?;
            t
        }
        None => AdobeTrainer::new(&cfg.net, &cfg.train)?,
    };
    let mut writer = EpochWriter::new(&dir)?;
    while trainer.epoch() < cfg.train.epochs {
        trainer.run(&data, &val, &mut writer)?;
        if let Some(e) = writer.error.take() {
            return Err(e.into());
        }
        trainer.to_archive().save(&state_path)?;
    }
    let final_path = dir.join("generator.ckpt");
    trainer.generator().save(&final_path)?;
    info!("wrote {}", final_path.display());
    Ok(final_path)
}

/// Real examples from every frame of every capture under `captures`, each
/// paired with a novel background chosen by seed.
pub(crate) fn real_examples(cfg: &RunConfig, captures: &Path, backgrounds: &[PathBuf]) -> Result<Vec<RealExample>> {
    let mut out = Vec::new();
    for dir in list_dirs(captures)? {
        let session = CaptureSession::open(&dir).map_err(|e| anyhow::anyhow!("{e}"))?;
        let plate = read_image(&session.plate)?;
        for i in 0..session.len() {
            let frame_seed = derive_seed(cfg.seed, &session.name(), &session.frame_name(i)?);
            match prepare_frame(&session, &plate, i, &cfg.preprocess, frame_seed)? {
                Prepared::NoSubject { name, .. } => {
                    warn!("{}/{name}: no subject in the probability map, skipped", session.name())
                }
                Prepared::Ready(f) => {
                    let key = format!("{}/{}", session.name(), f.name);
                    let pick = derive_seed(cfg.seed, &key, "novel-background") % backgrounds.len() as u64;
                    let novel = read_image(&backgrounds[pick as usize])?;
                    let (h, w) = f.input.size();
                    let (novel, _) = fit_background(&novel, h, w);
                    out.push(RealExample::new(key, f.input, novel)?);
                }
            }
        }
    }
    Ok(out)
}

fn train_real(cfg: &RunConfig, out: Option<&Path>) -> CliResult<PathBuf> {
    let teacher_path = cfg.teacher_path();
    require_file(&teacher_path, "teacher checkpoint")?;
    let captures = require_dir(&cfg.paths.captures, "captures")?;
    let bg_dir = require_dir(&cfg.paths.backgrounds, "backgrounds")?;
    let backgrounds = list_pngs(&bg_dir)?;
    if backgrounds.is_empty() {
        return Err(CliError::config(format!("no backgrounds in {}", bg_dir.display())));
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir().join("real"));

    let teacher = Generator::load(&teacher_path, None)?;
    let data = real_examples(cfg, &captures, &backgrounds)?;
    if data.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "no usable frames under {}",
            captures.display()
        )));
    }
    info!("adversarial training on {} frames", data.len());
    std::fs::create_dir_all(&dir)?;
    // The adversarial phase always starts over; drop any earlier log.
    let _ = std::fs::remove_file(dir.join(METRICS_FILE));
    let mut trainer = RealTrainer::new(&cfg.net, &cfg.train)?;
    let mut writer = EpochWriter::new(&dir)?;
    for _ in 0..cfg.train.epochs {
        trainer.run(&data, &teacher, &mut writer)?;
        if let Some(e) = writer.error.take() {
            return Err(e.into());
        }
    }
    let (student, disc) = trainer.into_parts();
    let student_path = dir.join("student.ckpt");
    student.save(&student_path)?;
    disc.to_archive(&cfg.net).save(dir.join("discriminator.ckpt"))?;
    info!("wrote {}", student_path.display());
    Ok(student_path)
}
