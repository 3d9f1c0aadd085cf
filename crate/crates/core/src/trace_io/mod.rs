//! Pen traces: data model, line-delimited JSON ingestion, cleaning and
//! writer-level splitting.
//!
//! A trace file holds one JSON object per line:
//!
//! ```text
//! {"writer_id": "w012", "letter": "X", "sample_rate_hz": 100, "points": [[x,y,t], ...]}
//! ```
//!
//! An optional `"label"` string carries a style annotation (the synthetic
//! generator writes the rotation class there); readers that do not know
//! about it ignore it.

pub mod plot;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use plot::render_traces_svg;
pub use synth::{synth_trace, Corner, Rotation, SynthCorpusConfig, SynthStyleSpec, WriterStyle};

/// Traces longer than this (seconds) are dropped by [`clean`].
pub const MAX_DURATION_S: f64 = 1.0;
/// Traces with more points than this are dropped by [`clean`].
pub const MAX_POINTS: usize = 99;
/// Strokes shorter than this fraction of the total inked length are pruned.
pub const MIN_STROKE_FRACTION: f64 = 0.05;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;
/// Default share of non-transfer writers that go to validation.
pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

/// Uppercase Latin letter, stored as its index `0..26`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter(u8);

impl Letter {
    pub const COUNT: usize = 26;

    pub fn from_char(c: char) -> Result<Self> {
        if c.is_ascii_uppercase() {
            Ok(Letter(c as u8 - b'A'))
        } else {
            Err(Error::InvalidLetter(c))
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index < Self::COUNT {
            Ok(Letter(index as u8))
        } else {
            Err(Error::InvalidArgument(format!("letter index {index} out of range")))
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_char(c),
            _ => Err(Error::InvalidTrace(format!("letter must be a single character, got {s:?}"))),
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_char(self) -> char {
        (b'A' + self.0) as char
    }

    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; Self::COUNT];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl Serialize for Letter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Letter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Letter::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, t: f64) -> Self {
        Point { x, y, t }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

/// A timed pen trajectory for one letter by one writer.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub writer_id: String,
    pub letter: Letter,
    pub points: Vec<Point>,
    pub sample_rate_hz: f64,
    /// Optional style annotation, e.g. `"clockwise"`.
    pub label: Option<String>,
}

impl Trace {
    /// Builds a trace and checks its invariants.
    pub fn new(
        writer_id: impl Into<String>,
        letter: Letter,
        points: Vec<Point>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        let trace = Trace {
            writer_id: writer_id.into(),
            letter,
            points,
            sample_rate_hz,
            label: None,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidTrace(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.points.len() < 3 {
            return Err(Error::InvalidTrace(format!(
                "need at least 3 points, got {}",
                self.points.len()
            )));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.t.is_finite()) {
                return Err(Error::InvalidTrace(format!("point {i} is not finite")));
            }
        }
        for (i, w) in self.points.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(Error::InvalidTrace(format!(
                    "timestamps not strictly increasing at point {}: {} then {}",
                    i + 1,
                    w[0].t,
                    w[1].t
                )));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Splits the point list into strokes at pen-up gaps, i.e. wherever two
    /// consecutive samples are more than 1.5 sample periods apart.
    pub fn strokes(&self) -> Vec<&[Point]> {
        let gap = 1.5 / self.sample_rate_hz;
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..self.points.len() {
            if self.points[i].t - self.points[i - 1].t > gap {
                out.push(&self.points[start..i]);
                start = i;
            }
        }
        if start < self.points.len() {
            out.push(&self.points[start..]);
        }
        out
    }

    fn to_record(&self) -> TraceRecord {
        TraceRecord {
            writer_id: self.writer_id.clone(),
            letter: self.letter,
            sample_rate_hz: self.sample_rate_hz,
            points: self.points.iter().map(|p| [p.x, p.y, p.t]).collect(),
            label: self.label.clone(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("trace records always serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let rec: TraceRecord = serde_json::from_str(line)?;
        let trace = Trace {
            writer_id: rec.writer_id,
            letter: rec.letter,
            points: rec.points.iter().map(|p| Point::new(p[0], p[1], p[2])).collect(),
            sample_rate_hz: rec.sample_rate_hz,
            label: rec.label,
        };
        trace.validate()?;
        Ok(trace)
    }
}

fn path_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].dist(&w[1])).sum()
}

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}

#[derive(Serialize, Deserialize)]
struct TraceRecord {
    writer_id: String,
    letter: Letter,
    #[serde(default = "default_rate")]
    sample_rate_hz: f64,
    points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Transfer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    pub trace: Trace,
    pub split: Split,
}

/// A labelled collection of traces. Each `(writer_id, letter)` pair occurs at
/// most once per split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn new(entries: Vec<CorpusEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert((e.split, e.trace.writer_id.as_str(), e.trace.letter)) {
                return Err(Error::InvalidTrace(format!(
                    "duplicate ({}, {}) in {:?} split",
                    e.trace.writer_id, e.trace.letter, e.split
                )));
            }
        }
        let transfer: BTreeSet<&str> = entries
            .iter()
            .filter(|e| e.split == Split::Transfer)
            .map(|e| e.trace.writer_id.as_str())
            .collect();
        if let Some(e) = entries
            .iter()
            .find(|e| e.split != Split::Transfer && transfer.contains(e.trace.writer_id.as_str()))
        {
            return Err(Error::Split(format!(
                "writer {} appears in both transfer and {:?}",
                e.trace.writer_id, e.split
            )));
        }
        Ok(Corpus { entries })
    }

    /// Puts every trace in the training split.
    pub fn from_traces(traces: Vec<Trace>) -> Result<Self> {
        Self::new(
            traces
                .into_iter()
                .map(|trace| CorpusEntry {
                    trace,
                    split: Split::Train,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn traces(&self) -> impl Iterator<Item = &Trace> {
        self.entries.iter().map(|e| &e.trace)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Trace> {
        self.entries
            .iter()
            .filter(move |e| e.split == split)
            .map(|e| &e.trace)
    }

    /// Distinct writer ids, sorted.
    pub fn writers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.trace.writer_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn writers_in(&self, split: Split) -> BTreeSet<String> {
        self.split(split).map(|t| t.writer_id.clone()).collect()
    }
}

/// A rejected input line.
#[derive(Clone, Debug, PartialEq)]
pub struct LineDiagnostic {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub rejected: Vec<LineDiagnostic>,
}

/// Reads a trace file. Lines that fail to parse or violate trace invariants
/// are skipped and reported; only I/O failures are errors.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut traces = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match Trace::from_json_line(&line) {
            Ok(t) => {
                if seen.insert((t.writer_id.clone(), t.letter)) {
                    traces.push(t);
                } else {
                    rejected.push(LineDiagnostic {
                        line: i + 1,
                        message: format!("duplicate ({}, {})", t.writer_id, t.letter),
                    });
                }
            }
            Err(e) => rejected.push(LineDiagnostic {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok(LoadedCorpus {
        corpus: Corpus::from_traces(traces)?,
        rejected,
    })
}

pub fn write_traces<'a>(path: impl AsRef<Path>, traces: impl IntoIterator<Item = &'a Trace>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in traces {
        writeln!(w, "{}", t.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Transfer];

    /// File name used for this split inside a corpus directory.
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Val => "val.jsonl",
            Split::Transfer => "transfer.jsonl",
        }
    }
}

/// Writes one trace file per split (`train.jsonl`, `val.jsonl`,
/// `transfer.jsonl`) into `dir`, creating it if needed. Empty splits still
/// get an empty file.
pub fn save_splits(dir: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in Split::ALL {
        write_traces(dir.join(s.file_name()), corpus.split(s))?;
    }
    Ok(())
}

/// Reads a directory written by [`save_splits`]. `train.jsonl` must exist;
/// the other two files are optional.
pub fn load_splits(dir: impl AsRef<Path>) -> Result<LoadedCorpus> {
    let dir = dir.as_ref();
    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    for s in Split::ALL {
        let path = dir.join(s.file_name());
        if s != Split::Train && !path.exists() {
            continue;
        }
        let loaded = load_corpus(&path)?;
        rejected.extend(loaded.rejected.into_iter().map(|d| LineDiagnostic {
            message: format!("{}: {}", s.file_name(), d.message),
            ..d
        }));
        entries.extend(loaded.corpus.entries.into_iter().map(|e| CorpusEntry { split: s, ..e }));
    }
    Ok(LoadedCorpus {
        corpus: Corpus::new(entries)?,
        rejected,
    })
}

/// Drops short strokes (less than 5% of the inked length) until none remain,
/// then removes traces that last more than one second or have more than 99
/// points. Bounds are inclusive.
pub fn clean(corpus: &Corpus) -> Corpus {
    let entries = corpus
        .entries
        .iter()
        .filter_map(|e| {
            let trace = prune_short_strokes(&e.trace)?;
            let keep = trace.points.len() <= MAX_POINTS && trace.duration() <= MAX_DURATION_S + 1e-9;
            keep.then_some(CorpusEntry {
                trace,
                split: e.split,
            })
        })
        .collect();
    Corpus { entries }
}

fn prune_short_strokes(trace: &Trace) -> Option<Trace> {
    let mut points = trace.points.clone();
    loop {
        let current = Trace {
            points,
            ..trace.clone()
        };
        let strokes = current.strokes();
        let lengths: Vec<f64> = strokes.iter().map(|s| path_length(s)).collect();
        let total: f64 = lengths.iter().sum();
        if strokes.len() <= 1 || total <= 0.0 {
            return (current.points.len() >= 3).then_some(current);
        }
        let threshold = MIN_STROKE_FRACTION * total;
        if lengths.iter().all(|&l| l >= threshold) {
            return (current.points.len() >= 3).then_some(current);
        }
        let kept: Vec<Point> = strokes
            .iter()
            .zip(&lengths)
            .filter(|(_, &l)| l >= threshold)
            .flat_map(|(s, _)| s.iter().copied())
            .collect();
        points = kept;
    }
}

/// Assigns `n_transfer` writers to the transfer split and divides the rest
/// between train and validation (90/10 by writer).
pub fn split_writers(corpus: &Corpus, n_transfer: usize, seed: u64) -> Result<Corpus> {
    split_writers_with(corpus, n_transfer, DEFAULT_VAL_FRACTION, seed)
}

pub fn split_writers_with(corpus: &Corpus, n_transfer: usize, val_fraction: f64, seed: u64) -> Result<Corpus> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Split(format!("val_fraction must be in [0, 1), got {val_fraction}")));
    }
    let mut writers = corpus.writers();
    if n_transfer >= writers.len() {
        return Err(Error::Split(format!(
            "n_transfer = {n_transfer} but corpus has only {} writers",
            writers.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    writers.shuffle(&mut rng);
    let rest = writers.len() - n_transfer;
    let n_val = if rest >= 2 && val_fraction > 0.0 {
        ((rest as f64 * val_fraction).round() as usize).clamp(1, rest - 1)
    } else {
        0
    };
    let mut assignment = BTreeMap::new();
    for (i, w) in writers.iter().enumerate() {
        let split = if i < n_transfer {
            Split::Transfer
        } else if i < n_transfer + n_val {
            Split::Val
        } else {
            Split::Train
        };
        assignment.insert(w.as_str(), split);
    }
    let mut seen = HashSet::new();
    let entries = corpus
        .entries
        .iter()
        .filter(|e| seen.insert((e.trace.writer_id.as_str(), e.trace.letter)))
        .map(|e| CorpusEntry {
            trace: e.trace.clone(),
            split: assignment[e.trace.writer_id.as_str()],
        })
        .collect();
    Corpus::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_trace(writer: &str, n: usize, rate: f64) -> Trace {
        let pts = (0..n)
            .map(|i| Point::new(i as f64 * 0.01, 0.0, i as f64 / rate))
            .collect();
        Trace::new(writer, Letter::from_char('X').unwrap(), pts, rate).unwrap()
    }

    #[test]
    fn letter_parsing() {
        assert_eq!(Letter::parse("X").unwrap().index(), 23);
        assert!(Letter::parse("x").is_err());
        assert!(Letter::parse("XY").is_err());
        assert!(Letter::from_char('1').is_err());
    }

    #[test]
    fn trace_invariants() {
        let l = Letter::from_char('A').unwrap();
        let two = vec![Point::new(0., 0., 0.), Point::new(1., 0., 0.01)];
        assert!(Trace::new("w", l, two, 100.0).is_err());
        let flat = vec![
            Point::new(0., 0., 0.0),
            Point::new(1., 0., 0.01),
            Point::new(2., 0., 0.01),
        ];
        assert!(Trace::new("w", l, flat, 100.0).is_err());
    }

    #[test]
    fn clean_bounds() {
        let long = line_trace("a", 120, 100.0);
        let edge = line_trace("b", 99, 100.0);
        let corpus = Corpus::from_traces(vec![long, edge]).unwrap();
        let cleaned = clean(&corpus);
        let ids: Vec<_> = cleaned.traces().map(|t| t.writer_id.as_str()).collect();
        assert_eq!(ids, ["b"]);
        assert!(clean(&Corpus::default()).is_empty());
    }

    #[test]
    fn clean_drops_tiny_strokes() {
        let l = Letter::from_char('H').unwrap();
        let mut pts: Vec<Point> = (0..30).map(|i| Point::new(i as f64 * 0.05, 0.0, i as f64 * 0.01)).collect();
        // a 3-point blip after a pen-up gap
        for i in 0..3 {
            pts.push(Point::new(5.0 + i as f64 * 0.001, 1.0, 0.4 + i as f64 * 0.01));
        }
        let t = Trace::new("w", l, pts, 100.0).unwrap();
        let cleaned = clean(&Corpus::from_traces(vec![t]).unwrap());
        assert_eq!(cleaned.traces().next().unwrap().points.len(), 30);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let traces: Vec<Trace> = (0..50).map(|i| line_trace(&format!("w{i:03}"), 10, 100.0)).collect();
        let corpus = Corpus::from_traces(traces).unwrap();
        let a = split_writers(&corpus, 7, 3).unwrap();
        let b = split_writers(&corpus, 7, 3).unwrap();
        assert_eq!(a, b);
        let transfer = a.writers_in(Split::Transfer);
        assert_eq!(transfer.len(), 7);
        assert!(a.writers_in(Split::Train).is_disjoint(&transfer));
        assert!(a.writers_in(Split::Val).is_disjoint(&transfer));
        assert_eq!(a.writers_in(Split::Val).len(), 4);

        let none = split_writers(&corpus, 0, 3).unwrap();
        assert_eq!(none.split(Split::Transfer).count(), 0);
        assert!(split_writers(&corpus, 50, 3).is_err());
    }

    #[test]
    fn json_line_roundtrip() {
        let t = line_trace("w012", 5, 100.0).with_label("clockwise");
        let back = Trace::from_json_line(&t.to_json_line()).unwrap();
        assert_eq!(t, back);
        let minimal = r#"{"writer_id":"w1","letter":"C","points":[[0,0,0],[1,0,0.01],[1,1,0.02]]}"#;
        let t = Trace::from_json_line(minimal).unwrap();
        assert_eq!(t.sample_rate_hz, 100.0);
        assert_eq!(t.label, None);
    }

    #[test]
    fn split_directory_roundtrip() {
        let traces: Vec<Trace> = (0..6).map(|i| line_trace(&format!("w{i}"), 5, 100.0)).collect();
        let corpus = split_writers(&Corpus::from_traces(traces).unwrap(), 2, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_splits(dir.path(), &corpus).unwrap();
        let back = load_splits(dir.path()).unwrap();
        assert!(back.rejected.is_empty());
        for s in Split::ALL {
            assert_eq!(back.corpus.writers_in(s), corpus.writers_in(s));
        }
        assert!(load_splits(dir.path().join("missing")).is_err());
    }
}
