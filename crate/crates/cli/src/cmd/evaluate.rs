use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use bgmatte_core::evalpost::{mse, sad};
use bgmatte_core::par;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{file_stem, list_pngs, read_plane};

/// Side both mattes are rescaled to before scoring.
pub const EVAL_SIZE: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub key: String,
    pub sad: f64,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: Vec<FrameScore>,
    pub mean_sad: f64,
    pub mean_mse: f64,
    pub unmatched_pred: Vec<String>,
    pub unmatched_gt: Vec<String>,
}

/// Alpha files keyed by frame name; a trailing `_alpha` is ignored.
fn alpha_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for p in list_pngs(dir)? {
        let stem = file_stem(&p)?;
        if stem.ends_with("_fg") || stem.ends_with("_composite") {
            continue;
        }
        let key = stem.strip_suffix("_alpha").unwrap_or(&stem).to_string();
        out.insert(key, p);
    }
    Ok(out)
}

fn score(key: &str, pred: &Path, gt: &Path) -> Result<FrameScore> {
    let p = read_plane(pred)?.resize(EVAL_SIZE, EVAL_SIZE);
    let g = read_plane(gt)?.resize(EVAL_SIZE, EVAL_SIZE);
    Ok(FrameScore { key: key.to_string(), sad: sad(&p, &g)?, mse: mse(&p, &g)? })
}

/// Scores predicted mattes against ground truth and writes
/// `evaluation.json`.
pub fn cmd_evaluate(cfg: &RunConfig, pred: &Path, gt: &Path, out: Option<&Path>) -> CliResult<EvalReport> {
    for (d, what) in [(pred, "prediction"), (gt, "ground-truth")] {
        if !d.is_dir() {
            return Err(CliError::config(format!("{what} directory {} does not exist", d.display())));
        }
    }
    let preds = alpha_files(pred)?;
    let gts = alpha_files(gt)?;
    let unmatched_pred: Vec<String> = preds.keys().filter(|k| !gts.contains_key(*k)).cloned().collect();
    let unmatched_gt: Vec<String> = gts.keys().filter(|k| !preds.contains_key(*k)).cloned().collect();
    for k in &unmatched_pred {
        warn!("prediction {k} has no ground truth");
    }
    for k in &unmatched_gt {
        warn!("ground truth {k} has no prediction");
    }
    let keys: Vec<&String> = preds.keys().filter(|k| gts.contains_key(*k)).collect();
    if keys.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "no frame appears in both {} and {}",
            pred.display(),
            gt.display()
        )));
    }
    let frames = par::map_slice(&keys, |k| score(k, &preds[*k], &gts[*k])).into_iter().collect::<Result<Vec<_>>>()?;
    let n = frames.len() as f64;
    let report = EvalReport {
        mean_sad: frames.iter().map(|f| f.sad).sum::<f64>() / n,
        mean_mse: frames.iter().map(|f| f.mse).sum::<f64>() / n,
        frames,
        unmatched_pred,
        unmatched_gt,
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir());
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("evaluation.json");
    let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    std::fs::write(&path, text + "\n")?;
    info!("wrote {}", path.display());
    println!("frames {}  mean SAD {:.5}  mean MSE {:.5}", report.frames.len(), report.mean_sad, report.mean_mse);
    Ok(report)
}
