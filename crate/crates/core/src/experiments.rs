//! Scaled-down synthetic experiments: fixed recipes (corpus, split, training
//! and sampling settings) plus the evaluation steps shared by the examples
//! and the acceptance suite.

use serde::{Deserialize, Serialize};

use crate::codec::encode;
use crate::eval::{evaluate, pair_records, EvalOptions, EvalReport};
use crate::latent::{extract_latents, pca_project, separation_score};
use crate::sampler::{regenerate_all, CodeRecord, Request, SamplerConfig};
use crate::trace_io::{split_writers, Corpus, Letter, Split, SynthCorpusConfig};
use crate::trainer::TrainConfig;
use crate::{Checkpoint, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub synth: SynthCorpusConfig,
    /// Writers moved to the transfer split, never seen in training.
    pub held_out: usize,
    pub split_seed: u64,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
}

fn letters(s: &str) -> Vec<Letter> {
    s.chars().map(|c| Letter::from_char(c).unwrap()).collect()
}

impl Recipe {
    /// 40 writers of letter X, alternating clockwise and anticlockwise.
    pub fn tiny_rotation() -> Self {
        Recipe {
            synth: SynthCorpusConfig {
                n_writers: 40,
                seed: 1,
                ..SynthCorpusConfig::default()
            },
            held_out: 0,
            split_seed: 1,
            train: TrainConfig {
                hidden: 16,
                bias_dim: 4,
                lr: 0.01,
                batch_size: 8,
                max_epochs: 200,
                seed: 5,
                ..TrainConfig::default()
            },
            sampler: SamplerConfig::default(),
        }
    }

    /// Rotation-only X corpus with 20 held-out writers whose style vectors
    /// are projected and clustered. For X the two rotations differ in the
    /// relative codes only by the sign of the turns between strokes, a weak
    /// signal next to per-writer warp, so warp is kept small.
    pub fn rotation_latent() -> Self {
        Recipe {
            synth: SynthCorpusConfig {
                n_writers: 80,
                jitter: 0.005,
                seed: 2,
                ..SynthCorpusConfig::default()
            },
            held_out: 20,
            split_seed: 2,
            train: TrainConfig {
                hidden: 32,
                bias_dim: 8,
                lr: 0.01,
                batch_size: 8,
                early_stop_patience: 50,
                max_epochs: 400,
                seed: 2,
                ..TrainConfig::default()
            },
            sampler: SamplerConfig::default(),
        }
    }

    /// Six letters, writers varying in rotation and tempo, 10 held out.
    /// Low jitter keeps each writer's letter lengths stable enough for the
    /// end-of-sequence comparison to be about style, not noise.
    pub fn transfer() -> Self {
        let mut synth = SynthCorpusConfig {
            letters: letters("ACHOSX"),
            n_writers: 100,
            jitter: 0.01,
            seed: 3,
            ..SynthCorpusConfig::default()
        };
        synth.vary_tempo = true;
        Recipe {
            synth,
            held_out: 10,
            split_seed: 3,
            train: TrainConfig {
                hidden: 32,
                bias_dim: 8,
                lr: 0.003,
                decoder_dropout: 0.0,
                early_stop_patience: 50,
                batch_size: 8,
                max_epochs: 600,
                seed: 3,
                ..TrainConfig::default()
            },
            sampler: SamplerConfig {
                seed: 3,
                ..SamplerConfig::default()
            },
        }
    }

    pub fn corpus(&self) -> Result<Corpus> {
        let all = Corpus::from_traces(self.synth.generate()?)?;
        split_writers(&all, self.held_out, self.split_seed)
    }
}

/// Regenerates every trace of `split` from its own codes; returns generated
/// and reference code records in corpus order.
pub fn regenerate_split(
    ck: &Checkpoint,
    corpus: &Corpus,
    split: Split,
    sampler: &SamplerConfig,
) -> Result<(Vec<CodeRecord>, Vec<CodeRecord>)> {
    let traces: Vec<_> = corpus.split(split).collect();
    let refs = traces.iter().map(|t| encode(t, &ck.quantizer)).collect::<Result<Vec<_>>>()?;
    let requests: Vec<Request<'_>> = traces
        .iter()
        .zip(&refs)
        .map(|(t, fs)| Request {
            writer_id: &t.writer_id,
            reference: fs,
        })
        .collect();
    let generated = regenerate_all(&ck.model, &requests, sampler)?;
    let gen = traces.iter().zip(&generated).map(|(t, g)| CodeRecord::new(&t.writer_id, g)).collect();
    let refs = traces.iter().zip(&refs).map(|(t, fs)| CodeRecord::new(&t.writer_id, fs)).collect();
    Ok((gen, refs))
}

/// BLEU and EoS of the held-out writers' regenerated letters.
pub fn evaluate_transfer(ck: &Checkpoint, corpus: &Corpus, sampler: &SamplerConfig) -> Result<EvalReport> {
    let (gen, refs) = regenerate_split(ck, corpus, Split::Transfer, sampler)?;
    evaluate(&pair_records(&gen, &refs)?, EvalOptions::default())
}

/// k-means separation of the labelled style vectors of `split` after PCA.
pub fn style_separation(ck: &Checkpoint, corpus: &Corpus, split: Split) -> Result<f64> {
    let table = extract_latents(ck, corpus.split(split), &[])?;
    let proj = pca_project(&table)?;
    separation_score(&proj, &table.labels())
}
