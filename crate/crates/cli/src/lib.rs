//! Command-line front end for background matting: synthetic dataset
//! generation, both training phases, batch matting of captures,
//! compositing and evaluation.

pub mod capture;
pub mod cmd;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;

use std::path::PathBuf;

use bgmatte_core::evalpost::Backdrop;
use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "bgmatte", version, about = "Background matting with a captured background plate")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides both the top-level and the training seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Composite every matte asset over every background.
    SynthDataset,
    /// Train the generator.
    Train {
        #[arg(long, value_enum)]
        phase: cmd::TrainPhase,
        #[command(flatten)]
        pre: PreprocessArgs,
    },
    /// Matte every frame of a capture directory.
    Matte {
        capture: PathBuf,
        #[command(flatten)]
        pre: PreprocessArgs,
    },
    /// Render mattes over a new background.
    Composite {
        mattes: PathBuf,
        /// Background image; cropped and resized to each frame.
        #[arg(long, conflicts_with = "color")]
        background: Option<PathBuf>,
        /// Solid colour as R,G,B in 0..=255. Defaults to green 0,177,64.
        #[arg(long, value_parser = cmd::parse_color)]
        color: Option<[f32; 3]>,
    },
    /// Score predicted alpha mattes against ground truth.
    Evaluate { pred: PathBuf, gt: PathBuf },
    /// Write a small synthetic workspace for trying the pipeline.
    ToyData {
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 16)]
        assets: usize,
        #[arg(long, default_value_t = 4)]
        backgrounds: usize,
        #[arg(long, default_value_t = 16)]
        captures: usize,
    },
}

/// Flags overriding the `[preprocess]` table.
#[derive(Debug, Default, Args)]
pub struct PreprocessArgs {
    /// Skip plate alignment.
    #[arg(long)]
    pub no_align: bool,
    /// Use neighbouring frames as the motion cue.
    #[arg(long, overrides_with = "no_motion")]
    pub motion: bool,
    /// Use the frame itself as the motion cue.
    #[arg(long, overrides_with = "motion")]
    pub no_motion: bool,
    /// Subjects to keep after post-processing.
    #[arg(long)]
    pub n_subjects: Option<usize>,
    #[arg(long)]
    pub crop_size: Option<usize>,
    /// Frame offset T of the motion cue.
    #[arg(long)]
    pub motion_interval: Option<usize>,
    /// Treat probability maps as binary masks and soften them.
    #[arg(long)]
    pub prob_from_threshold: bool,
}

impl PreprocessArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let p = &mut cfg.preprocess;
        if self.no_align {
            p.align = false;
        }
        if self.no_motion {
            p.motion = false;
        } else if self.motion {
            p.motion = true;
        }
        if self.n_subjects.is_some() {
            p.n_subjects = self.n_subjects;
        }
        if let Some(c) = self.crop_size {
            p.crop_size = c;
        }
        if let Some(t) = self.motion_interval {
            p.motion_interval = t;
        }
        if self.prob_from_threshold {
            p.prob_from_threshold = true;
        }
    }
}

/// Config file plus flag overrides, validated.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    match &cli.command {
        Command::Train { pre, .. } | Command::Matte { pre, .. } => pre.apply(&mut cfg),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command line inside a worker pool sized by the config.
#[cfg(feature = "parallel")]
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Runtime(e.into()))?;
    pool.install(|| dispatch(cli, &cfg))
}

/// Runs a parsed command line; `workers` is ignored in sequential builds.
#[cfg(not(feature = "parallel"))]
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    dispatch(cli, &cfg)
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> CliResult<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::SynthDataset => cmd::cmd_synth_dataset(cfg, out).map(|_| ()),
        Command::Train { phase, .. } => cmd::cmd_train(cfg, *phase, out).map(|_| ()),
        Command::Matte { capture, .. } => cmd::cmd_matte(cfg, capture, out).map(|_| ()),
        Command::Composite {
            mattes,
            background,
            color,
        } => {
            let backdrop = match (background, color) {
                (Some(p), _) => Backdrop::Image(io::read_image(p).map_err(|e| CliError::config(format!("{e:#}")))?),
                (None, Some(c)) => Backdrop::Solid(*c),
                (None, None) => Backdrop::default(),
            };
            cmd::cmd_composite(cfg, mattes, backdrop, out).map(|_| ())
        }
        Command::Evaluate { pred, gt } => cmd::cmd_evaluate(cfg, pred, gt, out).map(|_| ()),
        Command::ToyData {
            size,
            assets,
            backgrounds,
            captures,
        } => {
            let dir = out.ok_or_else(|| CliError::config("toy-data needs --out"))?;
            let opts = cmd::ToyDataOptions {
                size: *size,
                assets: *assets,
                backgrounds: *backgrounds,
                captures: *captures,
                seed: cli.seed.unwrap_or(0),
            };
            cmd::cmd_toy_data(dir, &opts)
        }
    }
}
