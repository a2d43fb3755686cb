//! TOML run configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use bgmatte_core::model::NetConfig;
use bgmatte_core::preprocess::DEFAULT_MOTION_INTERVAL;
use bgmatte_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Matte assets, one subdirectory per asset with `foreground.png` and
    /// `alpha.png`.
    pub assets: Option<PathBuf>,
    /// Background images (`*.png`) for synthesis and novel composites.
    pub backgrounds: Option<PathBuf>,
    /// Synthetic dataset written by `synth-dataset`, read by supervised
    /// training.
    pub dataset: Option<PathBuf>,
    /// Optional held-out synthetic dataset for per-epoch validation.
    pub validation: Option<PathBuf>,
    /// Capture sessions for adversarial training, one subdirectory each.
    pub captures: Option<PathBuf>,
    /// Teacher checkpoint; defaults to `<output>/adobe/generator.ckpt`.
    pub teacher: Option<PathBuf>,
    /// Generator used by `matte`; defaults to the student if present, else
    /// the teacher.
    pub model: Option<PathBuf>,
    /// Root for everything the tool writes.
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Align the plate to each frame with a homography.
    pub align: bool,
    /// Use neighbouring frames as the motion cue (videos only).
    pub motion: bool,
    pub crop_size: usize,
    pub motion_interval: usize,
    /// Subjects to keep after post-processing; counted from the
    /// probability map when unset.
    pub n_subjects: Option<usize>,
    /// Treat probability maps as binary masks and soften them.
    pub prob_from_threshold: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            align: true,
            motion: true,
            crop_size: 512,
            motion_interval: DEFAULT_MOTION_INTERVAL,
            n_subjects: None,
            prob_from_threshold: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Side of the square training examples.
    pub out_size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { out_size: 512 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for synthesis, alignment and novel-background choice.
    pub seed: u64,
    /// Worker threads for per-frame work; 0 uses every core.
    pub workers: usize,
    pub paths: PathsConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    /// Checks values that do not depend on the command.
    pub fn validate(&self) -> CliResult<()> {
        self.net.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::config(e.to_string()))?;
        let p = &self.preprocess;
        if p.crop_size == 0 || !p.crop_size.is_multiple_of(4) {
            return Err(CliError::config(format!(
                "preprocess.crop_size must be a positive multiple of 4, got {}",
                p.crop_size
            )));
        }
        if p.motion_interval == 0 {
            return Err(CliError::config("preprocess.motion_interval must be >= 1"));
        }
        if p.n_subjects == Some(0) {
            return Err(CliError::config("preprocess.n_subjects must be >= 1"));
        }
        if self.synth.out_size == 0 || !self.synth.out_size.is_multiple_of(4) {
            return Err(CliError::config(format!(
                "synth.out_size must be a positive multiple of 4, got {}",
                self.synth.out_size
            )));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn teacher_path(&self) -> PathBuf {
        self.paths
            .teacher
            .clone()
            .unwrap_or_else(|| self.output_dir().join("adobe").join("generator.ckpt"))
    }

    pub fn student_path(&self) -> PathBuf {
        self.output_dir().join("real").join("student.ckpt")
    }

    /// Generator for inference: explicit model, else the student, else the
    /// teacher.
    pub fn model_path(&self) -> PathBuf {
        if let Some(m) = &self.paths.model {
            return m.clone();
        }
        let student = self.student_path();
        if student.exists() {
            student
        } else {
            self.teacher_path()
        }
    }
}

impl PathsConfig {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.assets,
            &mut self.backgrounds,
            &mut self.dataset,
            &mut self.validation,
            &mut self.captures,
            &mut self.teacher,
            &mut self.model,
            &mut self.output,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Returns the configured directory, failing if it is unset or missing.
pub fn require_dir(value: &Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
    let p = value
        .as_ref()
        .ok_or_else(|| CliError::config(format!("paths.{key} is not set")))?;
    if !p.is_dir() {
        return Err(CliError::config(format!("paths.{key}: directory {} does not exist", p.display())));
    }
    Ok(p.clone())
}

/// Fails unless `path` is an existing file.
pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if !path.is_file() {
        return Err(CliError::config(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}
