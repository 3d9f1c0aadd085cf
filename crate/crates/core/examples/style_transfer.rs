//! Style transfer to unseen writers: train the autoencoder and the
//! "letter + writer bias" baseline on synthetic writers, regenerate the
//! letters of held-out writers with both, and compare BLEU and EoS.
//! Takes several minutes in release mode.
//!
//! cargo run --release --example style_transfer -- [seed]

use std::time::Instant;

use handstyle::eval::render_table;
use handstyle::experiments::{evaluate_transfer, Recipe};
use handstyle::trainer::{train, train_baseline};

fn main() -> handstyle::Result<()> {
    let mut recipe = Recipe::transfer();
    if let Some(seed) = std::env::args().nth(1).and_then(|a| a.parse().ok()) {
        recipe.synth.seed = seed;
        recipe.split_seed = seed;
        recipe.train.seed = seed;
        recipe.sampler.seed = seed;
    }
    let corpus = recipe.corpus()?;

    let t0 = Instant::now();
    let ae = train(&corpus, &recipe.train)?;
    println!("autoencoder: {} epochs, best val {:.4} ({:.0}s)", ae.epochs_run, ae.best_val_loss, t0.elapsed().as_secs_f64());
    let t1 = Instant::now();
    let base = train_baseline(&corpus, &recipe.train)?;
    println!("baseline:    {} epochs, best val {:.4} ({:.0}s)", base.epochs_run, base.best_val_loss, t1.elapsed().as_secs_f64());

    for (name, ck) in [("autoencoder", &ae), ("letter + writer bias", &base)] {
        let report = evaluate_transfer(ck, &corpus, &recipe.sampler)?;
        println!("\n{name}\n{}", render_table(&report));
    }
    Ok(())
}
