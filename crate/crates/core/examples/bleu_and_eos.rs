//! Corpus BLEU on code sequences and the end-of-sequence length correlation,
//! on a small hand-made corpus.
//!
//! cargo run --example bleu_and_eos

use handstyle::eval::{bleu, bleu_score, eos_pearson, BleuCombine};

fn main() -> handstyle::Result<()> {
    let refs: Vec<Vec<u8>> = vec![vec![0, 1, 2, 3], vec![0, 0, 15, 15, 0, 1], vec![4, 4, 4]];
    let cands: Vec<Vec<u8>> = vec![vec![0, 1, 7, 3], vec![0, 0, 15, 0, 1], vec![4, 4, 4, 4, 4]];

    for n in 1..=3 {
        let p = bleu(&refs, &cands, n)?;
        let s = bleu_score(&refs, &cands, n, BleuCombine::GeometricMean)?;
        println!(
            "n={n}: clipped {}/{}  brevity penalty {:.3}  BLEU-{n} {:.1}",
            p.clipped,
            p.total,
            s.brevity_penalty,
            s.percent()
        );
    }
    let product = bleu_score(&refs, &cands, 3, BleuCombine::Product)?;
    println!("BLEU-3 as a plain product of precisions: {:.1}", product.percent());

    let r: Vec<usize> = refs.iter().map(Vec::len).collect();
    let c: Vec<usize> = cands.iter().map(Vec::len).collect();
    println!("EoS Pearson, lengths {c:?} vs {r:?}: {:.3}", eos_pearson(&c, &r)?.pearson);
    Ok(())
}
