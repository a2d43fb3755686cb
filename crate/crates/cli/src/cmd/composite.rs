use std::path::{Path, PathBuf};

use anyhow::Result;
use bgmatte_core::evalpost::{render_composite, Backdrop};
use bgmatte_core::par;
use log::info;

use super::fit_background;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{file_stem, list_pngs, read_image, read_plane, write_image_u8};

/// Parses `R,G,B` with components in 0..=255.
pub fn parse_color(s: &str) -> std::result::Result<[f32; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected R,G,B, got {s:?}"));
    }
    let mut rgb = [0.0f32; 3];
    for (c, p) in rgb.iter_mut().zip(parts) {
        let v: u8 = p.parse().map_err(|_| format!("colour component {p:?} is not in 0..=255"))?;
        *c = v as f32 / 255.0;
    }
    Ok(rgb)
}

/// Frame names with both `<name>_alpha.png` and `<name>_fg.png`.
fn matte_pairs(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for p in list_pngs(dir)? {
        if let Some(name) = file_stem(&p)?.strip_suffix("_alpha") {
            if dir.join(format!("{name}_fg.png")).is_file() {
                names.push(name.to_string());
            }
        }
    }
    Ok(names)
}

/// Renders every matte pair in `mattes` over `backdrop`.
pub fn cmd_composite(cfg: &RunConfig, mattes: &Path, backdrop: Backdrop, out: Option<&Path>) -> CliResult<PathBuf> {
    if !mattes.is_dir() {
        return Err(CliError::config(format!("matte directory {} does not exist", mattes.display())));
    }
    let names = matte_pairs(mattes)?;
    if names.is_empty() {
        return Err(CliError::config(format!("no <name>_alpha.png / <name>_fg.png pairs in {}", mattes.display())));
    }
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir().join("composites"));
    std::fs::create_dir_all(&out)?;
    par::map_slice(&names, |name| -> Result<()> {
        let fg = read_image(&mattes.join(format!("{name}_fg.png")))?;
        let alpha = read_plane(&mattes.join(format!("{name}_alpha.png")))?;
        let target = match &backdrop {
            Backdrop::Image(bg) => {
                let (bg, changed) = fit_background(bg, fg.height(), fg.width());
                if changed {
                    info!("{name}: background cropped and resized to {}x{}", fg.height(), fg.width());
                }
                Backdrop::Image(bg)
            }
            solid => solid.clone(),
        };
        let comp = render_composite(&fg, &alpha, &target)?;
        write_image_u8(&out.join(format!("{name}_composite.png")), &comp)
    })
    .into_iter()
    .collect::<Result<Vec<()>>>()?;
    info!("wrote {} composites to {}", names.len(), out.display());
    Ok(out)
}
