use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::MattingTerms;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Adobe,
    Real,
}

/// One optimisation step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub phase: Phase,
    /// 1-based generator step counter across epochs.
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub terms: MattingTerms,
    /// Pseudo-label weight (adversarial phase only).
    pub lambda: Option<f64>,
    pub adversarial: Option<f64>,
    /// Set on steps after which the discriminator was updated.
    pub d_loss: Option<f64>,
    pub batch: Vec<String>,
}

impl StepRecord {
    pub fn d_updated(&self) -> bool {
        self.d_loss.is_some()
    }
}

/// End-of-epoch summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub steps: u64,
    pub mean_loss: f64,
    pub lambda: Option<f64>,
    /// Mean SAD on the validation set, when one is given.
    pub val_sad: Option<f64>,
}

/// Append-only JSON-lines log.
pub struct MetricsLog {
    out: BufWriter<File>,
}

impl MetricsLog {
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(MetricsLog {
            out: BufWriter::new(file),
        })
    }

    /// Writes one record tagged with `kind`.
    pub fn write<R: Serialize>(&mut self, kind: &str, record: &R) -> Result<()> {
        let mut value = serde_json::to_value(record).map_err(std::io::Error::other)?;
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("kind".into(), kind.into());
        }
        serde_json::to_writer(&mut self.out, &value).map_err(std::io::Error::other)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}
