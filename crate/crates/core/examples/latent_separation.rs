//! Train on clockwise and anticlockwise X writers, project the style vectors
//! of held-out writers with PCA and report how well k-means recovers the
//! rotation. Writes latent.csv and latent.svg to the given directory.
//!
//! cargo run --release --example latent_separation -- [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use handstyle::experiments::Recipe;
use handstyle::latent::{extract_latents, pca_project, separation_score, write_csv, write_svg};
use handstyle::trace_io::Split;
use handstyle::trainer::train;

fn main() -> handstyle::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let recipe = Recipe::rotation_latent();
    let corpus = recipe.corpus()?;
    let t0 = Instant::now();
    let ck = train(&corpus, &recipe.train)?;
    println!("trained {} epochs, best val {:.4} ({:.0}s)", ck.epochs_run, ck.best_val_loss, t0.elapsed().as_secs_f64());

    for split in [Split::Train, Split::Transfer] {
        let table = extract_latents(&ck, corpus.split(split), &[])?;
        let proj = pca_project(&table)?;
        let score = separation_score(&proj, &table.labels())?;
        println!(
            "{split:?}: {} writers, explained {:.3}/{:.3}, separation {score:.3}",
            table.len(),
            proj.explained[0],
            proj.explained[1]
        );
        if split == Split::Transfer {
            write_csv(out.join("latent.csv"), &table, &proj)?;
            write_svg(out.join("latent.svg"), &proj, &table.labels(), "held-out X writers")?;
        }
    }
    Ok(())
}
