//! Binary named-tensor archive.
//!
//! Layout: 8-byte magic, `u32` version, `u64` header length, a JSON header
//! (kind, network config, free-form metadata, tensor names and shapes), then
//! every tensor's data as little-endian `f32` in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Discriminator, Generator, NetConfig};
use crate::error::{MattingError, Result};
use crate::nn::{ParamStore, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"BGMCKPT\0";

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    config: NetConfig,
    meta: serde_json::Value,
    tensors: Vec<(String, Vec<usize>)>,
}

fn bad(msg: impl Into<String>) -> MattingError {
    MattingError::Checkpoint(msg.into())
}

/// In-memory form of a checkpoint file.
#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub kind: String,
    pub config: NetConfig,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Archive {
    pub fn new(kind: impl Into<String>, config: NetConfig) -> Self {
        Archive {
            kind: kind.into(),
            config,
            meta: serde_json::Value::Null,
            tensors: Vec::new(),
        }
    }

    /// Adds every tensor of `store` under `prefix/name`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore<f32>) {
        for (name, t) in store.iter() {
            self.tensors.push((format!("{prefix}/{name}"), t.clone()));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Overwrites every tensor of `store` from `prefix/name` entries.
    /// Missing entries and shape mismatches are errors.
    pub fn fill_store(&self, prefix: &str, store: &mut ParamStore<f32>) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let key = format!("{prefix}/{}", store.name(id));
            let t = self.get(&key).ok_or_else(|| bad(format!("missing tensor {key}")))?;
            if t.shape() != store.get(id).shape() {
                return Err(bad(format!(
                    "tensor {key} has shape {:?}, expected {:?}",
                    t.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in &self.tensors {
            let mut buf = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(bad("header too large"));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("bad header: {e}")))?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for (name, shape) in header.tensors {
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes).map_err(|_| bad(format!("truncated data for {name}")))?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        Ok(Archive {
            kind: header.kind,
            config: header.config,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(bad(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }
}

impl Generator<f32> {
    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new("generator", self.config().clone());
        a.push_store("param", self.params());
        a.push_store("buffer", self.buffers());
        a
    }

    /// Rebuilds a generator. When `expected` is given, a different stored
    /// config is rejected.
    pub fn from_archive(a: &Archive, expected: Option<&NetConfig>) -> Result<Self> {
        a.expect_kind("generator")?;
        if let Some(cfg) = expected {
            if *cfg != a.config {
                return Err(bad(format!(
                    "checkpoint network config {:?} does not match expected {:?}",
                    a.config, cfg
                )));
            }
        }
        let mut g = Generator::init(&a.config, 0)?;
        a.fill_store("param", g.params_mut())?;
        a.fill_store("buffer", g.buffers_mut())?;
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: impl AsRef<Path>, expected: Option<&NetConfig>) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?, expected)
    }
}

impl Discriminator<f32> {
    /// `config` is recorded for provenance; only its base width must agree.
    pub fn to_archive(&self, config: &NetConfig) -> Archive {
        let mut a = Archive::new("discriminator", config.clone());
        a.push_store("param", self.params());
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_kind("discriminator")?;
        let mut d = Discriminator::from_config(&a.config, 0)?;
        a.fill_store("param", d.params_mut())?;
        Ok(d)
    }
}
