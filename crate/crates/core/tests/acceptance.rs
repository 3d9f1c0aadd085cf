//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Pass criterion numbers to run a subset:
//!
//! cargo test --test acceptance -- 1 3 7

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use handstyle::codec::{decode, encode, turning_angle, QuantizerConfig};
use handstyle::eval::{bleu, bleu_score, BleuCombine};
use handstyle::experiments::{evaluate_transfer, style_separation, Recipe};
use handstyle::model::{ModelConfig, StyleAutoencoder};
use handstyle::neural::softmax;
use handstyle::sampler::{generate_from_bias, sample_categorical, SamplerConfig};
use handstyle::trace_io::{synth_trace, Letter, Rotation, Split, SynthStyleSpec};
use handstyle::trainer::{encode_examples, mean_loss, train, train_baseline};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

mod support;

use support::bleu::{all_sequences, brute_precision};
use support::gradcheck::{tiny_autoencoder, tiny_baseline, worst_case, INSTANCES, OPS, TOL};

const LN16: f64 = 2.772588722239781;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_name = "";
    for &(name, f) in OPS {
        let e = worst_case(name, f);
        if e > worst {
            worst = e;
            worst_name = name;
        }
    }
    let mut model_worst = 0.0f64;
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model_worst = model_worst.max(tiny_autoencoder(&mut rng)).max(tiny_baseline(&mut rng));
    }
    check(
        worst < TOL && model_worst < TOL,
        format!(
            "{} checks x {INSTANCES} instances, worst {worst:.1e} ({worst_name}); tiny models {model_worst:.1e}",
            OPS.len()
        ),
    )
}

fn distinct_xy(points: &[handstyle::trace_io::Point]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    v.dedup();
    v
}

fn codec_round_trip() -> Outcome {
    let letters: Vec<Letter> = "ACHOSX".chars().map(|c| Letter::from_char(c).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut mismatched, mut worst) = (0, 0.0f64);
    for _ in 0..1000 {
        let rotation = if rng.random_bool(0.5) { Rotation::Clockwise } else { Rotation::Anticlockwise };
        let spec = SynthStyleSpec {
            tempo: rng.random_range(0.7..2.0),
            jitter: rng.random_range(0.0..0.08),
            seed: rng.random(),
            ..SynthStyleSpec::new(letters[rng.random_range(0..letters.len())], rotation)
        };
        let trace = synth_trace(&spec).map_err(|e| e.to_string())?;
        let q = QuantizerConfig::new(16, rng.random_range(2.0..30.0)).unwrap();
        let fs = encode(&trace, &q).map_err(|e| e.to_string())?;
        let back = decode(&fs, &q).map_err(|e| e.to_string())?;
        if encode(&back, &q).map_err(|e| e.to_string())?.frames != fs.frames {
            mismatched += 1;
        }
        let (a, b) = (distinct_xy(&trace.points), distinct_xy(&back.points));
        for k in 0..a.len().min(b.len()).saturating_sub(2) {
            let x = turning_angle(a[k], a[k + 1], a[k + 2]).unwrap();
            let y = turning_angle(b[k], b[k + 1], b[k + 2]).unwrap();
            let d = (x - y).rem_euclid(TAU);
            worst = worst.max(d.min(TAU - d));
        }
    }
    check(
        mismatched == 0 && worst <= PI / 16.0 + 1e-9,
        format!("1000 traces, {mismatched} re-encoding mismatches, worst turning error {:.4} rad (bound {:.4})", worst, PI / 16.0),
    )
}

fn bleu_oracle() -> Outcome {
    let mut compared = 0u64;
    let mut disagree = Vec::new();
    let mut compare = |refs: &[Vec<u8>], cands: &[Vec<u8>]| {
        for n in 1..=3 {
            let p = bleu(refs, cands, n).unwrap();
            compared += 1;
            if (p.clipped, p.total) != brute_precision(refs, cands, n) {
                disagree.push(format!("{refs:?} / {cands:?} n={n}"));
            }
        }
    };
    // Every pair of sequences up to length 3, then random corpora up to the
    // full size.
    let short = all_sequences(4, 3);
    for r in &short {
        for c in &short {
            compare(std::slice::from_ref(r), std::slice::from_ref(c));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5000 {
        let k = rng.random_range(1..=10);
        let seq = |rng: &mut ChaCha8Rng| -> Vec<u8> {
            let len = rng.random_range(0..=8);
            (0..len).map(|_| rng.random_range(0..4)).collect()
        };
        let refs: Vec<Vec<u8>> = (0..k).map(|_| seq(&mut rng)).collect();
        let cands: Vec<Vec<u8>> = (0..k).map(|_| seq(&mut rng)).collect();
        compare(&refs, &cands);
    }
    let identity: Vec<Vec<u8>> = (0..10).map(|i| (0..8).map(|j| ((i * j + j) % 4) as u8).collect()).collect();
    let id_scores: Vec<f64> = (1..=3)
        .map(|n| (bleu_score(&identity, &identity, n, BleuCombine::GeometricMean).unwrap().percent() * 10.0).round() / 10.0)
        .collect();
    let r = vec![vec![0u8, 1, 2, 3]];
    let c = vec![vec![0u8, 1, 7, 3]];
    let (p1, p2) = (bleu(&r, &c, 1).unwrap(), bleu(&r, &c, 2).unwrap());
    let hand = (p1.clipped, p1.total, p2.clipped, p2.total) == (3, 4, 1, 3);
    check(
        disagree.is_empty() && id_scores.iter().all(|&s| s == 100.0) && hand,
        format!(
            "{compared} precisions vs brute force, {} disagreements{}; identity {id_scores:?}; hand case {}/{} and {}/{}",
            disagree.len(),
            disagree.first().map(|d| format!(" (first {d})")).unwrap_or_default(),
            p1.clipped,
            p1.total,
            p2.clipped,
            p2.total
        ),
    )
}

fn uniform_and_tiny_training() -> Outcome {
    let recipe = Recipe::tiny_rotation();
    let corpus = recipe.corpus().map_err(|e| e.to_string())?;
    let mut model = StyleAutoencoder::new(recipe.train.model_config(), 0).unwrap();
    model.decoder.zero_heads(&mut model.store);
    let q = QuantizerConfig::calibrate(corpus.split(Split::Train), 16).map_err(|e| e.to_string())?;
    let (val, _) = encode_examples(corpus.split(Split::Val), &q);
    let uniform = mean_loss(&model, &val).map_err(|e| e.to_string())?;

    let ck = train(&corpus, &recipe.train).map_err(|e| e.to_string())?;
    let target = 0.6 * LN16;
    check(
        (uniform - LN16).abs() < 0.05 && ck.best_val_loss < target && ck.epochs_run <= 200,
        format!(
            "uniform heads {uniform:.4} (ln 16 = {LN16:.4}); trained val {:.4} < {target:.4} at epoch {} of {}",
            ck.best_val_loss, ck.epoch, ck.epochs_run
        ),
    )
}

fn style_separation_held_out() -> Outcome {
    let recipe = Recipe::rotation_latent();
    let corpus = recipe.corpus().map_err(|e| e.to_string())?;
    let ck = train(&corpus, &recipe.train).map_err(|e| e.to_string())?;
    let held = style_separation(&ck, &corpus, Split::Transfer).map_err(|e| e.to_string())?;
    check(
        held >= 0.95,
        format!(
            "{} held-out writers, separation {held:.3} (val loss {:.4}, {} epochs)",
            recipe.held_out, ck.best_val_loss, ck.epochs_run
        ),
    )
}

fn transfer_beats_baseline() -> Outcome {
    let recipe = Recipe::transfer();
    let corpus = recipe.corpus().map_err(|e| e.to_string())?;
    let ae = train(&corpus, &recipe.train).map_err(|e| e.to_string())?;
    let base = train_baseline(&corpus, &recipe.train).map_err(|e| e.to_string())?;
    let a = evaluate_transfer(&ae, &corpus, &recipe.sampler).map_err(|e| e.to_string())?;
    let b = evaluate_transfer(&base, &corpus, &recipe.sampler).map_err(|e| e.to_string())?;
    let cells = |r: &handstyle::eval::EvalReport| [r.bleu.dir.cells(), r.bleu.speed.cells()].concat();
    let bleu_wins = cells(&a).iter().zip(cells(&b)).all(|(x, y)| *x > y);
    check(
        bleu_wins && a.eos_pearson >= 0.9 && a.eos_pearson > b.eos_pearson,
        format!(
            "autoencoder dir {:?} speed {:?} EoS {:.3}; baseline dir {:?} speed {:?} EoS {:.3}",
            a.bleu.dir.cells(),
            a.bleu.speed.cells(),
            a.eos_pearson,
            b.bleu.dir.cells(),
            b.bleu.speed.cells(),
            b.eos_pearson
        ),
    )
}

fn sampler_statistics() -> Outcome {
    let logits = [1.2, -0.3, 0.0, 2.1, 0.7, -1.5];
    let (t, draws) = (0.5, 10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = vec![0u64; logits.len()];
    for _ in 0..draws {
        counts[sample_categorical(&logits, t, &mut rng)] += 1;
    }
    let p = softmax(&logits, t);
    let (mut stat, mut cells, mut pool_o, mut pool_e) = (0.0, 0usize, 0.0, 0.0);
    for (o, q) in counts.iter().zip(&p) {
        let e = q * draws as f64;
        if e < 5.0 {
            pool_o += *o as f64;
            pool_e += e;
        } else {
            stat += (*o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    }
    let p_value = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);

    // An untrained model stops rarely, so most samples run into the cap.
    let model = StyleAutoencoder::new(ModelConfig { hidden: 8, bias_dim: 4, ..ModelConfig::default() }, 1).unwrap();
    let letter = Letter::from_char('O').unwrap();
    let (mut over, mut at_cap, mut total) = (0, 0, 0);
    for n_max in [1, 2, 5, 20, 100] {
        for seed in 0..40 {
            let bias: Vec<f64> = (0..4).map(|i| ((seed * 4 + i) as f64 * 0.7).sin()).collect();
            let cfg = SamplerConfig { n_max, seed, ..SamplerConfig::default() };
            let fs = generate_from_bias(&model, &bias, letter, &cfg).map_err(|e| e.to_string())?;
            over += (fs.len() > n_max) as usize;
            at_cap += (fs.len() == n_max) as usize;
            total += 1;
        }
    }
    check(
        p_value > 0.01 && over == 0,
        format!("chi-square {stat:.2} on {} df, p = {p_value:.3}; {total} samples, {over} over n_max, {at_cap} at the cap", cells - 1),
    )
}

fn handstyle(out: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_handstyle"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr).trim()))
    }
}

/// synth, ingest, train, generate and eval through the binary, twice.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<std::path::PathBuf, String> {
        let root = dir.path().join(name);
        let p = |n: &str| root.join(n);
        let s = |p: &Path| p.to_str().unwrap().to_string();
        handstyle(&p("synth"), &["synth", "--letters", "XO", "--writers", "16", "--seed", "7"])?;
        handstyle(&p("splits"), &["ingest", "--input", &s(&p("synth").join("traces.jsonl")), "--transfer", "4", "--seed", "7"])?;
        handstyle(
            &p("train"),
            &["train", "--corpus", &s(&p("splits")), "--hidden", "8", "--bias-dim", "4", "--max-epochs", "6", "--seed", "7"],
        )?;
        let ckpt = s(&p("train").join("model.ckpt"));
        handstyle(&p("gen"), &["generate", "--checkpoint", &ckpt, "--corpus", &s(&p("splits")), "--seed", "7"])?;
        let g = |n: &str| s(&p("gen").join(n));
        handstyle(&p("eval"), &["eval", "--generated", &g("generated.codes.json"), "--reference", &g("reference.codes.json")])?;
        Ok(root)
    };
    let (a, b) = (run("a")?, run("b")?);
    let files = [
        "synth/traces.jsonl",
        "splits/train.jsonl",
        "train/model.ckpt",
        "train/epochs.jsonl",
        "gen/generated.jsonl",
        "gen/generated.codes.json",
        "eval/report.json",
    ];
    let mut differing = Vec::new();
    for f in files {
        let (x, y) = (std::fs::read(a.join(f)), std::fs::read(b.join(f)));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => differing.push(f),
        }
    }
    check(
        differing.is_empty(),
        format!("{} artifacts compared across two runs, differing: {differing:?}", files.len()),
    )
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, name: "gradient correctness", limit: Some(secs(120)), run: gradients },
        Criterion { id: 2, name: "codec round trip", limit: Some(secs(30)), run: codec_round_trip },
        Criterion { id: 3, name: "BLEU oracle equivalence", limit: Some(secs(10)), run: bleu_oracle },
        Criterion { id: 4, name: "uniform-head loss and tiny training", limit: Some(secs(600)), run: uniform_and_tiny_training },
        Criterion { id: 5, name: "style separation on held-out writers", limit: Some(secs(900)), run: style_separation_held_out },
        Criterion { id: 6, name: "transfer: autoencoder beats baseline", limit: Some(secs(1800)), run: transfer_beats_baseline },
        Criterion { id: 7, name: "sampler statistics", limit: Some(secs(10)), run: sampler_statistics },
        Criterion { id: 8, name: "determinism", limit: None, run: determinism },
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let t0 = Instant::now();
        let outcome = (c.run)();
        let took = t0.elapsed();
        let slow = c.limit.is_some_and(|l| took > l);
        let (status, detail) = match &outcome {
            Ok(d) if !slow => ("PASS", d.clone()),
            Ok(d) => ("FAIL", format!("{d}; over the {}s limit", c.limit.unwrap().as_secs())),
            Err(d) => ("FAIL", d.clone()),
        };
        failed += (status == "FAIL") as usize;
        println!("{status} {} {}: {detail} [{:.1}s]", c.id, c.name, took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
