//! Temperature sampling: train the tiny X model, then regenerate one writer's
//! letter at several temperatures and compare lengths and codes with the
//! original.
//!
//! cargo run --release --example sampling_temperature

use handstyle::codec::encode;
use handstyle::experiments::Recipe;
use handstyle::sampler::{regenerate, SamplerConfig};
use handstyle::trace_io::Split;
use handstyle::trainer::train;

fn main() -> handstyle::Result<()> {
    let recipe = Recipe::tiny_rotation();
    let corpus = recipe.corpus()?;
    let ck = train(&corpus, &recipe.train)?;
    let trace = corpus.split(Split::Val).next().unwrap();
    let fs = encode(trace, &ck.quantizer)?;
    println!("{} {} ({}), {} frames", trace.writer_id, trace.letter, trace.label.as_deref().unwrap_or("-"), fs.len());
    println!("original  {:?}", fs.dir_codes());
    for temperature in [1e-6, 0.5, 1.0, 2.0] {
        for seed in 0..2 {
            let cfg = SamplerConfig { temperature, seed, ..SamplerConfig::default() };
            let g = regenerate(&ck.model, &trace.writer_id, &fs, &cfg)?;
            let same = g.frames.iter().zip(&fs.frames).filter(|(a, b)| a.dir == b.dir).count();
            println!("T={temperature:<5} seed {seed}: {:>3} frames, {same:>3} direction codes in place", g.len());
        }
    }
    Ok(())
}
