//! Handwriting style extraction and transfer with a letter-conditioned GRU
//! sequence autoencoder.
//!
//! Pen traces are quantized into per-step pairs of relative Freeman
//! direction-change codes and speed levels ([`codec`]). An encoder GRU reads
//! a letter, its final state is joined with the letter identity and
//! projected to a small style vector, and a decoder GRU regenerates the
//! letter from that vector ([`model`]). The crate also carries a
//! "letter + writer bias" baseline, teacher-forced training with early
//! stopping ([`trainer`]), temperature sampling ([`sampler`]), BLEU and
//! end-of-sequence metrics ([`eval`]) and PCA-based style-space analysis
//! ([`latent`]). [`trace_io::synth`] renders synthetic writers with known
//! style factors for experiments.

pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod latent;
pub mod model;
pub mod neural;
pub mod sampler;
pub mod trace_io;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};

/// SplitMix64 finalizer over two words; used to derive independent RNG
/// streams from one run seed.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
