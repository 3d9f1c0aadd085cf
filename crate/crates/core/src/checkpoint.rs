//! Checkpoint container.
//!
//! Layout:
//!
//! ```text
//! b"STYL1"                      magic, 5 bytes
//! u64 little-endian             header length in bytes
//! header                        UTF-8 JSON (configs, parameter table, metrics)
//! f64 little-endian * N         parameter blocks in header order, row-major
//! ```
//!
//! The header's `params` array lists every tensor by name and shape; loading
//! rebuilds the model from its configuration and then checks that names and
//! shapes agree before copying values in.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::QuantizerConfig;
use crate::error::{Error, Result};
use crate::model::{BaselineModel, Model, ModelConfig, SequenceModel, StyleAutoencoder};
use crate::neural::{Param, Tensor2};
use crate::trainer::{EpochLog, TrainConfig};

pub const MAGIC: &[u8; 5] = b"STYL1";
pub const VERSION: u32 = 1;

/// Enough to resume the run's random streams: every stream is derived from
/// the seed and the epoch counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub epoch: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub quantizer: QuantizerConfig,
    pub train_config: TrainConfig,
    /// Epoch whose parameters are stored (the best validation epoch).
    pub epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub rng: RngState,
    pub history: Vec<EpochLog>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: String,
    model_config: ModelConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    writers: Vec<String>,
    quantizer: QuantizerConfig,
    train_config: TrainConfig,
    epoch: usize,
    epochs_run: usize,
    best_val_loss: f64,
    rng: RngState,
    history: Vec<EpochLog>,
    params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let store = self.model.store();
        let header = Header {
            version: VERSION,
            kind: self.model.kind().to_string(),
            model_config: self.model.config().clone(),
            writers: self.model.as_baseline().map(|b| b.writers.clone()).unwrap_or_default(),
            quantizer: self.quantizer,
            train_config: self.train_config.clone(),
            epoch: self.epoch,
            epochs_run: self.epochs_run,
            best_val_loss: self.best_val_loss,
            rng: self.rng,
            history: self.history.clone(),
            params: store
                .params()
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    rows: p.value.rows,
                    cols: p.value.cols,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(13 + json.len() + 8 * store.scalar_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in store.params() {
            for v in &p.value.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("file too short for magic".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)
            .map_err(|_| Error::Checkpoint("truncated header length".into()))?;
        let len = u64::from_le_bytes(len) as usize;
        if r.len() < len {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&r[..len])?;
        r = &r[len..];
        if header.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", header.version)));
        }
        let needed: usize = header.params.iter().map(|p| p.rows * p.cols).sum();
        if r.len() != 8 * needed {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter bytes, found {}",
                8 * needed,
                r.len()
            )));
        }
        let mut params = Vec::with_capacity(header.params.len());
        for entry in &header.params {
            let n = entry.rows * entry.cols;
            let data = r[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            r = &r[8 * n..];
            params.push(Param {
                name: entry.name.clone(),
                value: Tensor2::from_vec(entry.rows, entry.cols, data)?,
            });
        }
        let mut model = match header.kind.as_str() {
            "autoencoder" => Model::Autoencoder(StyleAutoencoder::new(header.model_config.clone(), 0)?),
            "baseline" => Model::Baseline(BaselineModel::new(header.model_config.clone(), header.writers.clone(), 0)?),
            other => return Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        };
        model.store_mut().load_values(params)?;
        if !model.store().is_finite() {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        header.quantizer.validate()?;
        Ok(Checkpoint {
            model,
            quantizer: header.quantizer,
            train_config: header.train_config,
            epoch: header.epoch,
            epochs_run: header.epochs_run,
            best_val_loss: header.best_val_loss,
            rng: header.rng,
            history: header.history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// A freshly initialised model wrapped as a checkpoint (epoch 0).
    pub fn untrained(model: Model, quantizer: QuantizerConfig, train_config: TrainConfig) -> Self {
        let seed = train_config.seed;
        Checkpoint {
            model,
            quantizer,
            train_config,
            epoch: 0,
            epochs_run: 0,
            best_val_loss: f64::INFINITY,
            rng: RngState { seed, epoch: 0 },
            history: Vec::new(),
        }
    }
}
