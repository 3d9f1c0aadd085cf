//! Autoregressive generation with temperature sampling.
//!
//! Each step draws the direction code and the speed code from two
//! independent categoricals, `softmax(logits / T)`. The direction head's
//! extra class ends the sequence; it is masked on the first step so every
//! generated sequence has at least one frame. The speed drawn on the stop
//! step is discarded.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{Frame, FrameSequence};
use crate::error::{Error, Result};
use crate::mix_seed;
use crate::model::{SequenceModel, StyleVector};
use crate::neural::softmax;
use crate::trace_io::Letter;

pub const DEFAULT_TEMPERATURE: f64 = 0.5;
pub const DEFAULT_N_MAX: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub n_max: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            temperature: DEFAULT_TEMPERATURE,
            n_max: DEFAULT_N_MAX,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.n_max == 0 || self.n_max > crate::codec::MAX_FRAMES {
            return Err(Error::InvalidArgument(format!(
                "n_max must be in [1, {}], got {}",
                crate::codec::MAX_FRAMES,
                self.n_max
            )));
        }
        Ok(())
    }
}

/// Draws one index from `softmax(logits / temperature)` by inverting the
/// CDF with a single uniform draw.
pub fn sample_categorical(logits: &[f64], temperature: f64, rng: &mut impl Rng) -> usize {
    let p = softmax(logits, temperature);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave the total a hair under 1.
    p.iter()
        .rposition(|&pi| pi > 0.0)
        .unwrap_or(p.len() - 1)
}

/// Generates a frame sequence from an explicit bias frame.
pub fn generate_from_bias<M: SequenceModel + ?Sized>(
    model: &M,
    bias: &[f64],
    letter: Letter,
    cfg: &SamplerConfig,
) -> Result<FrameSequence> {
    cfg.validate()?;
    let n = model.config().n_levels;
    let stop = model.config().stop_class();
    let store = model.store();
    let decoder = model.decoder();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x5A4D));
    let (mut state, mut dir_logits, mut speed_logits) = decoder.start(store, bias)?;
    let mut frames = Vec::with_capacity(cfg.n_max);
    while frames.len() < cfg.n_max {
        if !dir_logits.iter().chain(&speed_logits).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("decoder logits".into()));
        }
        if frames.is_empty() {
            dir_logits[stop] = f64::NEG_INFINITY;
        }
        let d = sample_categorical(&dir_logits, cfg.temperature, &mut rng);
        let s = sample_categorical(&speed_logits, cfg.temperature, &mut rng);
        if d == stop {
            break;
        }
        let frame = Frame::new(d as u8, s as u8);
        frames.push(frame);
        if frames.len() < cfg.n_max {
            (dir_logits, speed_logits) = decoder.feed(store, &mut state, frame.dir, frame.speed)?;
        }
    }
    FrameSequence::new(letter, frames, n)
}

/// Generates a letter from a style vector. The vector is used directly as the
/// decoder's bias frame; its dimension must match the model's.
pub fn generate<M: SequenceModel + ?Sized>(
    model: &M,
    style: &StyleVector,
    letter: Letter,
    cfg: &SamplerConfig,
) -> Result<FrameSequence> {
    generate_from_bias(model, style.as_slice(), letter, cfg)
}

/// Regenerates `fs` as written by `writer_id`: the autoencoder encodes `fs`
/// itself, the baseline looks up (writer, letter). The result carries the
/// reference's drawing anchor so it decodes at the same place.
pub fn regenerate<M: SequenceModel + ?Sized>(
    model: &M,
    writer_id: &str,
    fs: &FrameSequence,
    cfg: &SamplerConfig,
) -> Result<FrameSequence> {
    let bias = model.bias_frame(writer_id, fs)?;
    Ok(generate_from_bias(model, &bias, fs.letter, cfg)?.with_anchor_of(fs))
}

/// Encode a ground-truth sequence and generate it back.
pub fn reconstruct_letter<M: SequenceModel + ?Sized>(
    model: &M,
    fs: &FrameSequence,
    cfg: &SamplerConfig,
) -> Result<FrameSequence> {
    regenerate(model, "", fs, cfg)
}

/// One generation request in a batch.
#[derive(Clone, Debug)]
pub struct Request<'a> {
    pub writer_id: &'a str,
    pub reference: &'a FrameSequence,
}

/// Regenerates every request in parallel. Request `i` samples with seed
/// `mix_seed(cfg.seed, i)`, so results do not depend on thread scheduling.
pub fn regenerate_all<M: SequenceModel + ?Sized>(
    model: &M,
    requests: &[Request<'_>],
    cfg: &SamplerConfig,
) -> Result<Vec<FrameSequence>> {
    requests
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let c = SamplerConfig {
                seed: mix_seed(cfg.seed, i as u64),
                ..*cfg
            };
            regenerate(model, r.writer_id, r.reference, &c)
        })
        .collect()
}

/// Code sequences of one generated (or reference) letter, for metrics.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRecord {
    pub writer_id: String,
    pub letter: Letter,
    pub dir: Vec<u8>,
    pub speed: Vec<u8>,
}

impl CodeRecord {
    pub fn new(writer_id: impl Into<String>, fs: &FrameSequence) -> Self {
        CodeRecord {
            writer_id: writer_id.into(),
            letter: fs.letter,
            dir: fs.dir_codes(),
            speed: fs.speed_codes(),
        }
    }

    pub fn len(&self) -> usize {
        self.dir.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dir.is_empty()
    }
}

/// Sidecar written next to a generated trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeSidecar {
    pub n_levels: usize,
    pub sampler: SamplerConfig,
    pub sequences: Vec<CodeRecord>,
}

impl CodeSidecar {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sc: CodeSidecar = serde_json::from_str(&text)?;
        for r in &sc.sequences {
            if r.dir.len() != r.speed.len() {
                return Err(Error::InvalidArgument(format!(
                    "{}/{}: dir and speed lengths differ",
                    r.writer_id,
                    r.letter.as_char()
                )));
            }
        }
        Ok(sc)
    }
}
