use std::path::{Path, PathBuf};

use anyhow::Result;
use bgmatte_core::augment::derive_seed;
use bgmatte_core::evalpost::{count_subjects, postprocess_alpha_report};
use bgmatte_core::model::Generator;
use bgmatte_core::{par, Image, Plane};
use log::{info, warn};

use crate::capture::{prepare_frame, CaptureSession, Prepared};
use crate::config::{require_file, RunConfig};
use crate::error::CliResult;
use crate::io::{read_image, write_image_u8, write_plane_u16};

/// Output paths `(alpha, foreground)` for a frame.
pub fn matte_paths(out: &Path, name: &str) -> (PathBuf, PathBuf) {
    (out.join(format!("{name}_alpha.png")), out.join(format!("{name}_fg.png")))
}

fn matte_frame(
    cfg: &RunConfig,
    g: &Generator<f32>,
    session: &CaptureSession,
    plate: &Image,
    i: usize,
    out: &Path,
) -> Result<()> {
    let seed = derive_seed(cfg.seed, &session.name(), &session.frame_name(i)?);
    let (name, alpha, fg) = match prepare_frame(session, plate, i, &cfg.preprocess, seed)? {
        Prepared::NoSubject { name, frame_size: (h, w) } => {
            warn!("{name}: no subject found, writing an empty matte");
            (name, Plane::zeros(h, w), Image::zeros(h, w))
        }
        Prepared::Ready(f) => {
            let (fg, alpha) = g.predict(&f.input)?;
            let n = cfg.preprocess.n_subjects.unwrap_or_else(|| count_subjects(&f.prob).max(1));
            let (alpha, report) = postprocess_alpha_report(&alpha, n)?;
            if let Some(w) = report.warning {
                warn!("{}: {w}", f.name);
            }
            let (h, w) = f.frame_size;
            let full_alpha = f.window.paste_plane(&alpha, (h, w));
            let full_fg = f.window.paste_image(&fg, &Image::zeros(h, w));
            (f.name, full_alpha, full_fg)
        }
    };
    let (pa, pf) = matte_paths(out, &name);
    write_plane_u16(&pa, &alpha)?;
    write_image_u8(&pf, &fg)?;
    Ok(())
}

/// Mattes every frame of a capture session. Returns the output directory.
pub fn cmd_matte(cfg: &RunConfig, capture: &Path, out: Option<&Path>) -> CliResult<PathBuf> {
    let session = CaptureSession::open(capture)?;
    let model = cfg.model_path();
    require_file(&model, "generator checkpoint")?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir().join("mattes").join(session.name()));
    let g = Generator::load(&model, None)?;
    let plate = read_image(&session.plate)?;
    std::fs::create_dir_all(&out)?;
    info!("matting {} frames from {} with {}", session.len(), capture.display(), model.display());
    par::map_range(session.len(), |i| matte_frame(cfg, &g, &session, &plate, i, &out))
        .into_iter()
        .collect::<Result<Vec<()>>>()?;
    info!("wrote mattes to {}", out.display());
    Ok(out)
}
