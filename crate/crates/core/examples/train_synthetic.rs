//! Train a small style autoencoder on a synthetic two-rotation X corpus and
//! print the learning curve.
//!
//! cargo run --release --example train_synthetic -- [hidden] [bias_dim] [epochs]

use std::time::Instant;

use handstyle::trace_io::{split_writers, Corpus, SynthCorpusConfig};
use handstyle::trainer::{train_with, TrainConfig};

fn main() -> handstyle::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let hidden = args.first().copied().unwrap_or(32);
    let bias_dim = args.get(1).copied().unwrap_or(8);
    let epochs = args.get(2).copied().unwrap_or(200);

    let synth = SynthCorpusConfig {
        n_writers: 40,
        ..SynthCorpusConfig::default()
    };
    let corpus = split_writers(&Corpus::from_traces(synth.generate()?)?, 0, 7)?;
    let cfg = TrainConfig {
        hidden,
        bias_dim,
        max_epochs: epochs,
        batch_size: 8,
        lr: 0.01,
        seed: 7,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let ck = train_with(&corpus, &cfg, |e| {
        if e.epoch % 10 == 0 || e.epoch == 1 {
            println!(
                "epoch {:>4}  train {:.4}  val {:.4}  ({:.1}s)",
                e.epoch,
                e.train_loss,
                e.val_loss,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    println!(
        "best val {:.4} at epoch {} of {}; ln 16 = {:.4}",
        ck.best_val_loss,
        ck.epoch,
        ck.epochs_run,
        16f64.ln()
    );
    Ok(())
}
