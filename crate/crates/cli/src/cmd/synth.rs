use std::path::{Path, PathBuf};

use anyhow::Result;
use bgmatte_core::augment::{plan_dataset, realize, ExamplePlan, MatteAsset};
use bgmatte_core::{par, Image};
use log::{info, warn};

use crate::config::{require_dir, RunConfig};
use crate::dataset::{write_example, Manifest, ManifestEntry, SkippedAsset, MANIFEST_FILE};
use crate::error::{CliError, CliResult};
use crate::io::{file_stem, list_dirs, list_pngs, read_image, read_plane, write_if_changed};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSummary {
    pub written: usize,
    pub existing: usize,
    pub failed: usize,
    pub skipped_assets: usize,
}

fn load_asset(dir: &Path) -> Result<MatteAsset> {
    let id = file_stem(dir)?;
    let fg = read_image(&dir.join("foreground.png"))?;
    let alpha = read_plane(&dir.join("alpha.png"))?;
    Ok(MatteAsset::new(id, fg, alpha)?)
}

/// Composites every asset over every background into `out`.
pub fn cmd_synth_dataset(cfg: &RunConfig, out: Option<&Path>) -> CliResult<SynthSummary> {
    let assets_dir = require_dir(&cfg.paths.assets, "assets")?;
    let bg_dir = require_dir(&cfg.paths.backgrounds, "backgrounds")?;
    let out: PathBuf = match out {
        Some(p) => p.to_path_buf(),
        None => {
            cfg.paths.dataset.clone().ok_or_else(|| CliError::config("paths.dataset is not set and no --out given"))?
        }
    };
    let asset_dirs = list_dirs(&assets_dir)?;
    let bg_files = list_pngs(&bg_dir)?;
    if asset_dirs.is_empty() || bg_files.is_empty() {
        return Err(CliError::config(format!(
            "need at least one asset in {} and one background in {}",
            assets_dir.display(),
            bg_dir.display()
        )));
    }
    std::fs::create_dir_all(&out)?;

    let mut assets = Vec::new();
    let mut skipped = Vec::new();
    for dir in &asset_dirs {
        match load_asset(dir) {
            Ok(a) => assets.push(a),
            Err(e) => {
                let id = file_stem(dir).unwrap_or_else(|_| dir.display().to_string());
                warn!("skipping asset {id}: {e:#}");
                skipped.push(SkippedAsset { id, reason: format!("{e:#}") });
            }
        }
    }
    let asset_ids: Vec<String> = assets.iter().map(|a| a.id.clone()).collect();
    let bg_ids: Vec<String> = bg_files.iter().map(|p| file_stem(p)).collect::<Result<_>>()?;
    let plans = plan_dataset(&asset_ids, &bg_ids, cfg.seed);

    // Asset-major so each asset is held once; backgrounds are decoded per
    // example to bound memory on large background sets.
    let mut written = 0;
    let mut existing = 0;
    let mut failed = 0;
    let mut done: Vec<&ExamplePlan> = Vec::new();
    for (ai, asset) in assets.iter().enumerate() {
        let row = &plans[ai * bg_files.len()..(ai + 1) * bg_files.len()];
        let results: Vec<(usize, Result<bool>)> = par::map_range(row.len(), |bi| {
            let plan = &row[bi];
            if out.join(&plan.key).is_dir() {
                return (bi, Ok(false));
            }
            let res = read_image(&bg_files[bi]).and_then(|bg: Image| {
                let ex = realize(plan, asset, &bg, cfg.synth.out_size)?;
                write_example(&out, &ex)?;
                Ok(true)
            });
            (bi, res)
        });
        for (bi, res) in results {
            match res {
                Ok(true) => {
                    written += 1;
                    done.push(&row[bi]);
                }
                Ok(false) => {
                    existing += 1;
                    done.push(&row[bi]);
                }
                Err(e) => {
                    failed += 1;
                    warn!("skipping example {}: {e:#}", row[bi].key);
                }
            }
        }
    }
    if done.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!("no examples were produced")));
    }
    let manifest = Manifest {
        seed: cfg.seed,
        out_size: cfg.synth.out_size,
        examples: done
            .iter()
            .map(|p| ManifestEntry {
                key: p.key.clone(),
                asset: p.asset_id.clone(),
                background: p.bg_id.clone(),
                seed: p.seed,
            })
            .collect(),
        skipped,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(anyhow::Error::from)? + "\n";
    write_if_changed(&out.join(MANIFEST_FILE), &text)?;
    let summary = SynthSummary { written, existing, failed, skipped_assets: manifest.skipped.len() };
    info!(
        "{} examples in {} ({written} new, {existing} already present, {failed} failed, {} assets skipped)",
        manifest.examples.len(),
        out.display(),
        summary.skipped_assets
    );
    Ok(summary)
}
