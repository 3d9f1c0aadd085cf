//! Command-line front end: `synth`, `ingest`, `train`, `generate`, `eval`,
//! `latent`, `plot`.
//!
//! Every run writes its outputs plus a `manifest.json` into `--out`. Exit
//! codes: 0 success, 1 I/O, 2 usage, 3 numeric failure, 4 data mismatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint::Checkpoint;
use crate::codec::{decode, encode, QuantizerConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, pair_records, render_table, BleuCombine, EvalOptions};
use crate::latent::{extract_latents, pca_project, separation_score_k, write_csv, write_svg, Projection2D};
use crate::model::Model;
use crate::sampler::{regenerate, CodeRecord, CodeSidecar, SamplerConfig};
use crate::trace_io::{
    clean, load_corpus, load_splits, render_traces_svg, save_splits, split_writers_with, write_traces, Corpus,
    Letter, LoadedCorpus, Split, SynthCorpusConfig, Trace, DEFAULT_VAL_FRACTION,
};
use crate::trainer::{train_baseline_with, train_with, TrainConfig};
use crate::mix_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_DATA: i32 = 4;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "handstyle", version, about = "Handwriting style extraction and transfer")]
pub struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with the subcommand's configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic corpus with known style factors.
    Synth(SynthArgs),
    /// Clean a raw trace file and split it by writer.
    Ingest(IngestArgs),
    /// Train the style autoencoder (or the baseline).
    Train(TrainArgs),
    /// Regenerate letters from a trained checkpoint.
    Generate(GenerateArgs),
    /// BLEU and EoS metrics of generated against reference sequences.
    Eval(EvalArgs),
    /// Style-space PCA, CSV/SVG export and cluster separation.
    Latent(LatentArgs),
    /// Draw traces, or a latent CSV, as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Letters to render, e.g. `X` or `X,O`.
    #[arg(long)]
    pub letters: Option<String>,
    #[arg(long)]
    pub writers: Option<usize>,
    /// Comma-separated style factors: rotation, tempo, corner, flourish.
    #[arg(long)]
    pub styles: Option<String>,
    #[arg(long)]
    pub jitter: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Writers held out for transfer experiments.
    #[arg(long, default_value_t = 0)]
    pub transfer: usize,
    #[arg(long, default_value_t = DEFAULT_VAL_FRACTION)]
    pub val_fraction: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Split directory written by `ingest`, or a single trace file (cleaned
    /// and split on the fly).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Train the "letter + writer bias" baseline instead.
    #[arg(long)]
    pub baseline: bool,
    /// Print one line per epoch to stderr.
    #[arg(long)]
    pub progress: bool,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub encoder_layers: Option<usize>,
    #[arg(long)]
    pub decoder_layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub bias_dim: Option<usize>,
    #[arg(long)]
    pub encoder_dropout: Option<f64>,
    #[arg(long)]
    pub decoder_dropout: Option<f64>,
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub n_levels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CorpusSelect {
    /// Trace file or split directory.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Split to use when `--corpus` is a directory.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// References to regenerate (default split: transfer).
    #[command(flatten)]
    pub select: CorpusSelect,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Code sidecar (`.json`) or trace file.
    #[arg(long)]
    pub generated: PathBuf,
    /// Code sidecar (`.json`) or trace file.
    #[arg(long)]
    pub reference: PathBuf,
    /// Checkpoint whose quantizer encodes trace-file inputs.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Quantizer JSON, as an alternative to `--checkpoint`.
    #[arg(long)]
    pub quantizer: Option<PathBuf>,
    #[arg(long)]
    pub per_letter: bool,
    /// Multiply the n-gram precisions instead of taking their geometric mean.
    #[arg(long)]
    pub product: bool,
}

#[derive(Debug, Args)]
pub struct LatentArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Traces to embed (default: every split).
    #[command(flatten)]
    pub select: CorpusSelect,
    #[arg(long)]
    pub letters: Option<String>,
    /// Number of clusters for the separation score.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Trace file to draw.
    #[arg(long, conflicts_with = "latent", required_unless_present = "latent")]
    pub traces: Option<PathBuf>,
    /// Latent CSV (`writer_id,letter,label,u,v`) to draw as a scatter.
    #[arg(long)]
    pub latent: Option<PathBuf>,
    #[arg(long)]
    pub letters: Option<String>,
    #[arg(long, default_value_t = 40)]
    pub limit: usize,
    #[arg(long, default_value_t = 8)]
    pub columns: usize,
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "transfer" => Ok(Split::Transfer),
        _ => Err(format!("unknown split {s:?} (train, val, transfer)")),
    }
}

/// Letters from `X`, `XO`, `X,O` or `X O`.
pub fn parse_letters(s: &str) -> Result<Vec<Letter>> {
    let mut out = Vec::new();
    for c in s.chars().filter(|c| !(c.is_whitespace() || *c == ',')) {
        let l = Letter::from_char(c)?;
        if !out.contains(&l) {
            out.push(l);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty letter list".into()));
    }
    Ok(out)
}

/// Record of one invocation, written next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    #[serde(default)]
    pub results: Value,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Csv(_) => EXIT_IO,
        Error::InvalidArgument(_) | Error::InvalidLetter(_) | Error::UnknownTemplate(_) | Error::Split(_) => EXIT_USAGE,
        Error::NonFinite(_) | Error::Degenerate(_) | Error::EmptyGraph => EXIT_NUMERIC,
        Error::InvalidTrace(_)
        | Error::Shape { .. }
        | Error::Empty(_)
        | Error::UnknownWriter(_)
        | Error::Unpaired(_)
        | Error::Checkpoint(_)
        | Error::Json(_) => EXIT_DATA,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Messages go to stdout/stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(m) => {
            if let Some(s) = m.results.get("summary").and_then(Value::as_str) {
                print!("{s}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn out(&mut self, name: &str) -> PathBuf {
        let p = self.cli.out.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn finish(self, command: &str, seed: u64, config: Value, results: Value) -> Result<RunManifest> {
        let m = RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs: self.inputs,
            outputs: self.outputs,
            results,
            duration_s: self.started.elapsed().as_secs_f64(),
        };
        let path = self.cli.out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&m)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(m)
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))
        }
    }
}

/// Runs the parsed command and returns its manifest.
pub fn execute(cli: &Cli) -> Result<RunManifest> {
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let mut ctx = Ctx {
        cli,
        started: Instant::now(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    if let Some(c) = &cli.config {
        ctx.input(c);
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(ctx, a),
        Command::Ingest(a) => cmd_ingest(ctx, a),
        Command::Train(a) => cmd_train(ctx, a),
        Command::Generate(a) => cmd_generate(ctx, a),
        Command::Eval(a) => cmd_eval(ctx, a),
        Command::Latent(a) => cmd_latent(ctx, a),
        Command::Plot(a) => cmd_plot(ctx, a),
    }
}

fn cmd_synth(mut ctx: Ctx<'_>, a: &SynthArgs) -> Result<RunManifest> {
    let mut cfg: SynthCorpusConfig = load_config(ctx.cli.config.as_ref())?;
    if let Some(l) = &a.letters {
        cfg.letters = parse_letters(l)?;
    }
    if let Some(n) = a.writers {
        cfg.n_writers = n;
    }
    if let Some(s) = &a.styles {
        cfg.set_styles(s.split(','))?;
    }
    if let Some(j) = a.jitter {
        cfg.jitter = j;
    }
    if let Some(s) = ctx.cli.seed {
        cfg.seed = s;
    }
    if cfg.n_writers == 0 {
        return Err(Error::InvalidArgument("--writers must be at least 1".into()));
    }
    let traces = cfg.generate()?;
    let path = ctx.out("traces.jsonl");
    write_traces(&path, &traces)?;
    let classes: std::collections::BTreeSet<&str> = traces.iter().filter_map(|t| t.label.as_deref()).collect();
    let summary = format!(
        "wrote {} traces from {} writers to {}\n",
        traces.len(),
        cfg.n_writers,
        path.display()
    );
    ctx.finish(
        "synth",
        cfg.seed,
        serde_json::to_value(&cfg)?,
        json!({"n_traces": traces.len(), "label_classes": classes, "summary": summary}),
    )
}

fn cmd_ingest(mut ctx: Ctx<'_>, a: &IngestArgs) -> Result<RunManifest> {
    let seed = ctx.cli.seed.unwrap_or(0);
    ctx.input(&a.input);
    let loaded = load_corpus(&a.input)?;
    let n_raw = loaded.corpus.len();
    let cleaned = clean(&loaded.corpus);
    let split = split_writers_with(&cleaned, a.transfer, a.val_fraction, seed)?;
    save_splits(&ctx.cli.out, &split)?;
    for s in Split::ALL {
        ctx.outputs.push(ctx.cli.out.join(s.file_name()));
    }
    let counts: Vec<usize> = Split::ALL.iter().map(|&s| split.split(s).count()).collect();
    let mut summary = format!(
        "{} lines accepted, {} rejected, {} kept after cleaning; train {} / val {} / transfer {}\n",
        n_raw,
        loaded.rejected.len(),
        cleaned.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    for d in loaded.rejected.iter().take(20) {
        summary.push_str(&format!("  rejected {d}\n"));
    }
    ctx.finish(
        "ingest",
        seed,
        json!({"transfer": a.transfer, "val_fraction": a.val_fraction}),
        json!({
            "accepted": n_raw,
            "rejected": loaded.rejected.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
            "kept": cleaned.len(),
            "train": counts[0], "val": counts[1], "transfer": counts[2],
            "summary": summary,
        }),
    )
}

/// A split directory as written by `ingest`, or a trace file that is cleaned
/// and split here (no transfer writers).
fn load_training_corpus(path: &Path, seed: u64) -> Result<LoadedCorpus> {
    if path.is_dir() {
        load_splits(path)
    } else {
        let loaded = load_corpus(path)?;
        let corpus = split_writers_with(&clean(&loaded.corpus), 0, DEFAULT_VAL_FRACTION, seed)?;
        Ok(LoadedCorpus {
            corpus,
            rejected: loaded.rejected,
        })
    }
}

fn cmd_train(mut ctx: Ctx<'_>, a: &TrainArgs) -> Result<RunManifest> {
    let mut cfg: TrainConfig = load_config(ctx.cli.config.as_ref())?;
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { cfg.$f = v; } )* };
    }
    set!(
        lr,
        encoder_layers,
        decoder_layers,
        hidden,
        bias_dim,
        encoder_dropout,
        decoder_dropout,
        early_stop_patience,
        batch_size,
        max_epochs,
        n_levels
    );
    if let Some(s) = ctx.cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    ctx.input(&a.corpus);
    let loaded = load_training_corpus(&a.corpus, cfg.seed)?;
    let progress = a.progress;
    let log = |e: &crate::trainer::EpochLog| {
        if progress {
            eprintln!("epoch {:>4}  train {:.5}  val {:.5}", e.epoch, e.train_loss, e.val_loss);
        }
    };
    let ck = if a.baseline {
        train_baseline_with(&loaded.corpus, &cfg, log)?
    } else {
        train_with(&loaded.corpus, &cfg, log)?
    };
    let ck_path = ctx.out("model.ckpt");
    ck.save(&ck_path)?;
    let log_path = ctx.out("epochs.jsonl");
    let mut log_text = String::new();
    for e in &ck.history {
        log_text.push_str(&serde_json::to_string(e)?);
        log_text.push('\n');
    }
    std::fs::write(&log_path, log_text).map_err(|e| Error::io(&log_path, e))?;
    let summary = format!(
        "{} trained for {} epochs; best validation loss {:.5} at epoch {}; checkpoint {}\n",
        ck.model.kind(),
        ck.epochs_run,
        ck.best_val_loss,
        ck.epoch,
        ck_path.display()
    );
    ctx.finish(
        "train",
        cfg.seed,
        json!({"train": cfg, "baseline": a.baseline, "quantizer": ck.quantizer}),
        json!({
            "epochs_run": ck.epochs_run,
            "best_epoch": ck.epoch,
            "best_val_loss": ck.best_val_loss,
            "summary": summary,
        }),
    )
}

fn select_traces(sel: &CorpusSelect, default_split: Option<Split>) -> Result<Vec<Trace>> {
    if sel.corpus.is_dir() {
        let c = load_splits(&sel.corpus)?.corpus;
        Ok(match sel.split.or(default_split) {
            Some(s) => c.split(s).cloned().collect(),
            None => c.traces().cloned().collect(),
        })
    } else {
        Ok(load_corpus(&sel.corpus)?.corpus.traces().cloned().collect())
    }
}

fn cmd_generate(mut ctx: Ctx<'_>, a: &GenerateArgs) -> Result<RunManifest> {
    let mut cfg: SamplerConfig = load_config(ctx.cli.config.as_ref())?;
    if let Some(t) = a.temperature {
        cfg.temperature = t;
    }
    if let Some(n) = a.n_max {
        cfg.n_max = n;
    }
    if let Some(s) = ctx.cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    ctx.input(&a.checkpoint);
    ctx.input(&a.select.corpus);
    let ck = Checkpoint::load(&a.checkpoint)?;
    let refs = select_traces(&a.select, Some(Split::Transfer))?;
    if refs.is_empty() {
        return Err(Error::Empty("no reference traces selected".into()));
    }
    let mut generated = Vec::new();
    let mut gen_codes = Vec::new();
    let mut ref_codes = Vec::new();
    let mut skipped = 0usize;
    let mut mean_writer = 0usize;
    for (i, t) in refs.iter().enumerate() {
        let Ok(fs) = encode(t, &ck.quantizer) else {
            skipped += 1;
            continue;
        };
        if let Model::Baseline(b) = &ck.model {
            mean_writer += usize::from(b.writer_index(&t.writer_id).is_none());
        }
        let c = SamplerConfig {
            seed: mix_seed(cfg.seed, i as u64),
            ..cfg
        };
        let g = regenerate(&ck.model, &t.writer_id, &fs, &c)?;
        let mut trace = decode(&g, &ck.quantizer)?;
        trace.writer_id = t.writer_id.clone();
        trace.label = t.label.clone();
        generated.push(trace);
        gen_codes.push(CodeRecord::new(&t.writer_id, &g));
        ref_codes.push(CodeRecord::new(&t.writer_id, &fs));
    }
    if generated.is_empty() {
        return Err(Error::Empty("no reference trace could be encoded".into()));
    }
    let n_levels = ck.quantizer.n_levels;
    write_traces(ctx.out("generated.jsonl"), &generated)?;
    CodeSidecar {
        n_levels,
        sampler: cfg,
        sequences: gen_codes,
    }
    .save(ctx.out("generated.codes.json"))?;
    CodeSidecar {
        n_levels,
        sampler: cfg,
        sequences: ref_codes,
    }
    .save(ctx.out("reference.codes.json"))?;
    let mut summary = format!("generated {} letters with the {}", generated.len(), ck.model.kind());
    if skipped > 0 {
        summary.push_str(&format!("; skipped {skipped} unencodable references"));
    }
    if mean_writer > 0 {
        summary.push_str(&format!("; {mean_writer} unseen writers used the mean writer embedding"));
    }
    summary.push('\n');
    ctx.finish(
        "generate",
        cfg.seed,
        json!({"sampler": cfg}),
        json!({"generated": generated.len(), "skipped": skipped, "mean_writer": mean_writer, "summary": summary}),
    )
}

fn load_codes(path: &Path, quantizer: Option<&QuantizerConfig>) -> Result<Vec<CodeRecord>> {
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(CodeSidecar::load(path)?.sequences);
    }
    let q = quantizer.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{} is a trace file; pass --checkpoint or --quantizer to encode it",
            path.display()
        ))
    })?;
    load_corpus(path)?
        .corpus
        .traces()
        .map(|t| Ok(CodeRecord::new(&t.writer_id, &encode(t, q)?)))
        .collect()
}

fn cmd_eval(mut ctx: Ctx<'_>, a: &EvalArgs) -> Result<RunManifest> {
    ctx.input(&a.generated);
    ctx.input(&a.reference);
    let quantizer = match (&a.checkpoint, &a.quantizer) {
        (Some(c), _) => {
            ctx.input(c);
            Some(Checkpoint::load(c)?.quantizer)
        }
        (None, Some(q)) => {
            ctx.input(q);
            Some(QuantizerConfig::load(q)?)
        }
        (None, None) => None,
    };
    let gen = load_codes(&a.generated, quantizer.as_ref())?;
    let refs = load_codes(&a.reference, quantizer.as_ref())?;
    let pairs = pair_records(&gen, &refs)?;
    let opts = EvalOptions {
        combine: if a.product { BleuCombine::Product } else { BleuCombine::GeometricMean },
        per_letter: a.per_letter,
    };
    let report = evaluate(&pairs, opts)?;
    let json_path = ctx.out("report.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&json_path, e))?;
    let table = render_table(&report);
    let txt_path = ctx.out("report.txt");
    std::fs::write(&txt_path, &table).map_err(|e| Error::io(&txt_path, e))?;
    let seed = ctx.cli.seed.unwrap_or(0);
    ctx.finish(
        "eval",
        seed,
        json!({"combine": opts.combine, "per_letter": opts.per_letter}),
        json!({"report": report, "summary": table}),
    )
}

fn cmd_latent(mut ctx: Ctx<'_>, a: &LatentArgs) -> Result<RunManifest> {
    ctx.input(&a.checkpoint);
    ctx.input(&a.select.corpus);
    let ck = Checkpoint::load(&a.checkpoint)?;
    let letters = match &a.letters {
        Some(s) => parse_letters(s)?,
        None => Vec::new(),
    };
    let traces = select_traces(&a.select, None)?;
    let table = extract_latents(&ck, &traces, &letters)?;
    let proj = pca_project(&table)?;
    let labels = table.labels();
    write_csv(ctx.out("latent.csv"), &table, &proj)?;
    let title = match &a.letters {
        Some(s) => format!("style space, letters {s}"),
        None => "style space".to_string(),
    };
    write_svg(ctx.out("latent.svg"), &proj, &labels, &title)?;
    let score = match separation_score_k(&proj, &labels, a.k) {
        Ok(s) => Some(s),
        Err(Error::InvalidArgument(_)) if labels.iter().all(|l| *l == labels[0]) => None,
        Err(e) => return Err(e),
    };
    let summary = match score {
        Some(s) => format!(
            "{} rows; explained variance {:.3}/{:.3}; separation_score {:.4}\n",
            table.len(),
            proj.explained[0],
            proj.explained[1],
            s
        ),
        None => format!("{} rows; single label class, no separation score\n", table.len()),
    };
    let seed = ctx.cli.seed.unwrap_or(0);
    ctx.finish(
        "latent",
        seed,
        json!({"k": a.k, "letters": a.letters}),
        json!({"rows": table.len(), "explained": proj.explained, "separation_score": score, "summary": summary}),
    )
}

#[derive(Deserialize)]
struct LatentCsvRow {
    #[allow(dead_code)]
    writer_id: String,
    #[allow(dead_code)]
    letter: String,
    label: String,
    u: f64,
    v: f64,
}

fn cmd_plot(mut ctx: Ctx<'_>, a: &PlotArgs) -> Result<RunManifest> {
    let summary;
    if let Some(p) = &a.latent {
        ctx.input(p);
        let mut r = csv::Reader::from_path(p)?;
        let rows: Vec<LatentCsvRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.is_empty() {
            return Err(Error::Empty(format!("{} has no rows", p.display())));
        }
        let proj = Projection2D {
            coords: rows.iter().map(|r| (r.u, r.v)).collect(),
            explained: [0.0, 0.0],
            components: [Vec::new(), Vec::new()],
            mean: Vec::new(),
        };
        let labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
        let out = ctx.out("latent.svg");
        write_svg(&out, &proj, &labels, "style space")?;
        summary = format!("wrote {}\n", out.display());
    } else {
        let p = a.traces.as_ref().expect("clap enforces --traces or --latent");
        ctx.input(p);
        let letters = match &a.letters {
            Some(s) => parse_letters(s)?,
            None => Vec::new(),
        };
        let corpus: Corpus = load_corpus(p)?.corpus;
        let traces: Vec<&Trace> = corpus
            .traces()
            .filter(|t| letters.is_empty() || letters.contains(&t.letter))
            .take(a.limit)
            .collect();
        if traces.is_empty() {
            return Err(Error::Empty("no traces to plot".into()));
        }
        let out = ctx.out("traces.svg");
        std::fs::write(&out, render_traces_svg(&traces, a.columns)).map_err(|e| Error::io(&out, e))?;
        summary = format!("drew {} traces to {}\n", traces.len(), out.display());
    }
    let seed = ctx.cli.seed.unwrap_or(0);
    ctx.finish(
        "plot",
        seed,
        json!({"limit": a.limit, "columns": a.columns}),
        json!({"summary": summary}),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letters_parse() {
        let l = parse_letters("X, O x").err();
        assert!(l.is_some());
        assert_eq!(parse_letters("XO,X").unwrap().len(), 2);
        assert!(parse_letters(" , ").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["handstyle", "--out", out, "synth", "--writers", "0"]), EXIT_USAGE);
        assert_eq!(run(["handstyle", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["handstyle", "--out", out, "synth", "--letters", "Q"]), EXIT_USAGE);
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(exit_code(&Error::NonFinite("x".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::Unpaired(vec![])), EXIT_DATA);
        assert_eq!(
            exit_code(&Error::io("p", std::io::Error::from(std::io::ErrorKind::NotFound))),
            EXIT_IO
        );
    }
}
