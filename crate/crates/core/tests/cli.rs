use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn handstyle(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handstyle"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = handstyle(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(out.join("manifest.json").is_file(), "{args:?} wrote no manifest");
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_is_reproducible_and_labelled() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(out, &["synth", "--letters", "X", "--writers", "40", "--styles", "rotation", "--seed", "1"]);
    }
    let text = std::fs::read_to_string(a.join("traces.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 40);
    assert_eq!(std::fs::read(a.join("traces.jsonl")).unwrap(), std::fs::read(b.join("traces.jsonl")).unwrap());
    let m = json(a.join("manifest.json"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["results"]["label_classes"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(handstyle(dir.path(), &["synth", "--writers", "0"]).status.code(), Some(2));
    assert_eq!(handstyle(dir.path(), &["synth", "--letters", "X1"]).status.code(), Some(2));
    assert_eq!(handstyle(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_corpus_exits_1_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.jsonl");
    let o = handstyle(dir.path(), &["train", "--corpus", s(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.jsonl"));
}

/// synth → ingest → train (tiny) → generate → eval → latent → plot.
#[test]
fn full_pipeline_on_a_tiny_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| -> PathBuf { dir.path().join(n) };
    ok(&d("synth"), &["synth", "--letters", "X", "--writers", "40", "--styles", "rotation", "--seed", "1"]);
    let traces = d("synth").join("traces.jsonl");
    ok(&d("splits"), &["ingest", "--input", s(&traces), "--transfer", "6", "--seed", "2"]);
    for f in ["train.jsonl", "val.jsonl", "transfer.jsonl"] {
        assert!(d("splits").join(f).is_file());
    }

    let t0 = Instant::now();
    let splits = d("splits");
    let args = [
        "train", "--corpus", s(&splits), "--hidden", "8", "--bias-dim", "4", "--max-epochs", "30", "--seed", "3",
    ];
    ok(&d("train"), &args);
    assert!(t0.elapsed().as_secs() < 60, "tiny run took {:?}", t0.elapsed());
    let log = std::fs::read_to_string(d("train").join("epochs.jsonl")).unwrap();
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["epoch"], 1);
    assert!(first["train_loss"].is_f64() && first["val_loss"].is_f64());
    let ckpt = d("train").join("model.ckpt");

    ok(&d("gen"), &["generate", "--checkpoint", s(&ckpt), "--corpus", s(&d("splits")), "--seed", "4"]);
    let generated = d("gen").join("generated.codes.json");
    let reference = d("gen").join("reference.codes.json");
    assert!(d("gen").join("generated.jsonl").is_file());

    ok(&d("eval_self"), &["eval", "--generated", s(&reference), "--reference", s(&reference)]);
    let r = json(d("eval_self").join("report.json"));
    for feat in ["dir", "speed"] {
        for b in ["b1", "b2", "b3"] {
            assert_eq!(r["bleu"][feat][b], 100.0);
        }
    }
    assert_eq!(r["eos_pearson"], 1.0);
    assert_eq!(r["n_pairs"], 6);

    let table = ok(&d("eval"), &["eval", "--generated", s(&generated), "--reference", s(&reference)]);
    assert!(table.contains("B-1"));

    // Same pairing, but the reference read as a trace file and encoded here.
    let transfer = d("splits").join("transfer.jsonl");
    ok(&d("eval_traces"), &["eval", "--generated", s(&reference), "--reference", s(&transfer), "--checkpoint", s(&ckpt)]);
    assert_eq!(json(d("eval_traces").join("report.json"))["bleu"]["dir"]["b3"], 100.0);

    let mut empty = json(&generated);
    empty["sequences"] = Value::Array(Vec::new());
    let empty_path = d("empty.codes.json");
    std::fs::write(&empty_path, empty.to_string()).unwrap();
    let o = handstyle(&d("eval_empty"), &["eval", "--generated", s(&empty_path), "--reference", s(&reference)]);
    assert_eq!(o.status.code(), Some(4));

    let o = handstyle(&d("eval_orphans"), &["eval", "--generated", s(&generated), "--reference", s(&generated.with_file_name("missing.json"))]);
    assert_eq!(o.status.code(), Some(1));

    let printed = ok(&d("latent"), &["latent", "--checkpoint", s(&ckpt), "--corpus", s(&traces), "--letters", "X"]);
    assert!(printed.contains("separation_score"));
    let csv = std::fs::read_to_string(d("latent").join("latent.csv")).unwrap();
    assert!(csv.starts_with("writer_id,letter,label,u,v"));
    assert_eq!(csv.lines().count(), 41);
    roxmltree::Document::parse(&std::fs::read_to_string(d("latent").join("latent.svg")).unwrap()).unwrap();

    let o = handstyle(&d("latent_none"), &["latent", "--checkpoint", s(&ckpt), "--corpus", s(&traces), "--letters", "O"]);
    assert_eq!(o.status.code(), Some(4));

    ok(&d("plot"), &["plot", "--traces", s(&traces), "--limit", "5"]);
    roxmltree::Document::parse(&std::fs::read_to_string(d("plot").join("traces.svg")).unwrap()).unwrap();
    ok(&d("plot_latent"), &["plot", "--latent", s(&d("latent").join("latent.csv"))]);
}

#[test]
fn eval_reports_orphans_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| -> PathBuf { dir.path().join(n) };
    ok(&d("a"), &["synth", "--letters", "C", "--writers", "3", "--seed", "1"]);
    ok(&d("b"), &["synth", "--letters", "C", "--writers", "4", "--seed", "1"]);
    let ck_dir = d("q");
    std::fs::create_dir_all(&ck_dir).unwrap();
    let q = ck_dir.join("q.json");
    std::fs::write(&q, r#"{"n_levels":16,"v_max":10.0}"#).unwrap();
    let o = handstyle(
        &d("eval"),
        &["eval", "--generated", s(&d("a").join("traces.jsonl")), "--reference", s(&d("b").join("traces.jsonl")), "--quantizer", s(&q)],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("reference w003/C"));
}
