//! Synthetic handwriting: stroke templates for a handful of uppercase
//! letters, rendered with a minimum-jerk velocity profile and a small set of
//! writer style factors (traversal rotation, entry corner, tempo, a cursive
//! lead-in flourish, smooth shape jitter).

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Letter, Point, Trace, DEFAULT_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::mix_seed;

/// Mean pen speed at tempo 1, in letter heights per second.
pub const BASE_SPEED: f64 = 8.0;
/// Pen-up time between strokes at tempo 1.
pub const PEN_UP_S: f64 = 0.05;
/// Jitter values up to this bound keep every generated shape recognisable.
/// Trace invariants hold for any finite jitter because timing does not
/// depend on it.
pub const MAX_JITTER: f64 = 0.1;

pub const TEMPLATE_LETTERS: [char; 6] = ['A', 'C', 'H', 'O', 'S', 'X'];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    Clockwise,
    Anticlockwise,
}

impl Rotation {
    pub fn name(self) -> &'static str {
        match self {
            Rotation::Clockwise => "clockwise",
            Rotation::Anticlockwise => "anticlockwise",
        }
    }
}

/// Where the pen enters the template.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthStyleSpec {
    pub letter: Letter,
    pub rotation: Rotation,
    /// Speed multiplier; 2.0 draws the same shape in half the time.
    pub tempo: f64,
    pub jitter: f64,
    pub start_corner: Corner,
    pub flourish: bool,
    pub seed: u64,
}

impl SynthStyleSpec {
    pub fn new(letter: Letter, rotation: Rotation) -> Self {
        SynthStyleSpec {
            letter,
            rotation,
            tempo: 1.0,
            jitter: 0.0,
            start_corner: Corner::TopLeft,
            flourish: false,
            seed: 0,
        }
    }
}

type Polyline = Vec<(f64, f64)>;

#[derive(Clone, Debug)]
struct Stroke {
    points: Polyline,
    closed: bool,
}

impl Stroke {
    fn open(points: Polyline) -> Self {
        Stroke { points, closed: false }
    }
}

fn arc(cx: f64, cy: f64, r: f64, from_deg: f64, to_deg: f64, n: usize) -> Polyline {
    (0..=n)
        .map(|i| {
            let a = (from_deg + (to_deg - from_deg) * i as f64 / n as f64).to_radians();
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn template(letter: Letter) -> Option<Vec<Stroke>> {
    let strokes = match letter.as_char() {
        'X' => vec![
            Stroke::open(vec![(0.0, 1.0), (1.0, 0.0)]),
            Stroke::open(vec![(1.0, 1.0), (0.0, 0.0)]),
        ],
        'C' => vec![Stroke::open(arc(0.5, 0.5, 0.5, 45.0, 315.0, 48))],
        'O' => {
            let mut pts = arc(0.5, 0.5, 0.5, 90.0, 450.0, 64);
            *pts.last_mut().unwrap() = pts[0];
            vec![Stroke { points: pts, closed: true }]
        }
        'A' => vec![
            Stroke::open(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)]),
            Stroke::open(vec![(0.25, 0.5), (0.75, 0.5)]),
        ],
        'S' => {
            let mut pts = arc(0.5, 0.75, 0.25, 30.0, 270.0, 32);
            pts.extend(arc(0.5, 0.25, 0.25, 90.0, -150.0, 32).into_iter().skip(1));
            vec![Stroke::open(pts)]
        }
        'H' => vec![
            Stroke::open(vec![(0.0, 1.0), (0.0, 0.0)]),
            Stroke::open(vec![(1.0, 1.0), (1.0, 0.0)]),
            Stroke::open(vec![(0.0, 0.5), (1.0, 0.5)]),
        ],
        _ => return None,
    };
    Some(strokes)
}

pub fn has_template(letter: Letter) -> bool {
    TEMPLATE_LETTERS.contains(&letter.as_char())
}

/// Entry corner: odd corners start from the next stroke, bottom corners
/// traverse each stroke backwards, closed loops start a quarter turn later
/// per corner index.
fn apply_corner(strokes: &mut [Stroke], corner: Corner) {
    let k = corner.index();
    if k & 1 == 1 {
        strokes.rotate_left(1);
    }
    for s in strokes.iter_mut() {
        if k & 2 == 2 {
            s.points.reverse();
        }
        if s.closed && k > 0 {
            s.points.pop();
            let shift = k * s.points.len() / 4;
            s.points.rotate_left(shift);
            let first = s.points[0];
            s.points.push(first);
        }
    }
}

/// Prepends a one-and-a-half turn curl that ends at the stroke's first point.
fn add_flourish(stroke: &mut Stroke) {
    let (x0, y0) = stroke.points[0];
    let (x1, y1) = stroke.points[1];
    let len = (x1 - x0).hypot(y1 - y0);
    let (dx, dy) = ((x1 - x0) / len, (y1 - y0) / len);
    let (nx, ny) = (-dy, dx);
    let r = 0.08;
    let (cx, cy) = (x0 + r * nx, y0 + r * ny);
    let n = 24;
    let mut curl: Polyline = (0..n)
        .map(|i| {
            let a = -1.5 * TAU * (1.0 - i as f64 / n as f64);
            let (c, s) = (a.cos(), a.sin());
            (cx + r * (-c * nx + s * dx), cy + r * (-c * ny + s * dy))
        })
        .collect();
    curl.extend(stroke.points.iter().copied());
    stroke.points = curl;
}

struct ArcParam {
    points: Polyline,
    cumulative: Vec<f64>,
}

impl ArcParam {
    fn new(points: Polyline) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let d = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            cumulative.push(cumulative.last().unwrap() + d);
        }
        ArcParam { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn at(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, self.length());
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => return self.points[i],
            Err(i) => i.clamp(1, self.points.len() - 1),
        };
        let (a, b) = (self.cumulative[i - 1], self.cumulative[i]);
        let f = if b > a { (s - a) / (b - a) } else { 0.0 };
        let (p, q) = (self.points[i - 1], self.points[i]);
        (p.0 + f * (q.0 - p.0), p.1 + f * (q.1 - p.1))
    }
}

fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

struct Warp {
    ax: [f64; 2],
    px: [f64; 2],
    ay: [f64; 2],
    py: [f64; 2],
    slant: f64,
    amount: f64,
}

impl Warp {
    fn draw(amount: f64, rng: &mut impl Rng) -> Self {
        let mut pair = |lo: f64, hi: f64| [rng.random_range(lo..hi), rng.random_range(lo..hi)];
        Warp {
            ax: pair(-1.0, 1.0),
            px: pair(0.0, TAU),
            ay: pair(-1.0, 1.0),
            py: pair(0.0, TAU),
            slant: rng.random_range(-1.0..1.0),
            amount,
        }
    }

    fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let j = self.amount;
        let wx = 0.5 * (self.ax[0] * (TAU * y + self.px[0]).sin() + self.ax[1] * (2.0 * TAU * y + self.px[1]).sin());
        let wy = 0.5 * (self.ay[0] * (TAU * x + self.py[0]).sin() + self.ay[1] * (2.0 * TAU * x + self.py[1]).sin());
        (x + j * (wx + self.slant * y), y + j * wy)
    }
}

/// Renders one synthetic trace. Deterministic in `spec`.
pub fn synth_trace(spec: &SynthStyleSpec) -> Result<Trace> {
    if !(spec.tempo.is_finite() && spec.tempo > 0.0) {
        return Err(Error::InvalidArgument(format!("tempo must be > 0, got {}", spec.tempo)));
    }
    if !(spec.jitter.is_finite() && spec.jitter >= 0.0) {
        return Err(Error::InvalidArgument(format!("jitter must be >= 0, got {}", spec.jitter)));
    }
    let mut strokes = template(spec.letter).ok_or(Error::UnknownTemplate(spec.letter.as_char()))?;
    apply_corner(&mut strokes, spec.start_corner);
    if spec.flourish {
        add_flourish(&mut strokes[0]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let warp = Warp::draw(spec.jitter, &mut rng);
    let rate = DEFAULT_SAMPLE_RATE_HZ;
    let dt = 1.0 / rate;
    let speed = BASE_SPEED * spec.tempo;

    let mut points = Vec::new();
    let mut clock = 0.0;
    for stroke in strokes {
        let path = ArcParam::new(stroke.points);
        let duration = path.length() / speed;
        let (t0, t1) = (clock, clock + duration);
        let mut k = (t0 / dt - 1e-9).ceil() as i64;
        while k as f64 * dt <= t1 + 1e-9 {
            let t = k as f64 * dt;
            let tau = if duration > 0.0 { (t - t0) / duration } else { 1.0 };
            let (x, y) = warp.apply(path.at(min_jerk(tau) * path.length()));
            points.push(Point::new(x, y, t));
            k += 1;
        }
        clock = t1 + PEN_UP_S / spec.tempo;
    }
    points.dedup_by(|b, a| a.x == b.x && a.y == b.y);
    if spec.rotation == Rotation::Anticlockwise {
        // mirror in time: same samples, reversed order, still on the grid
        let end = points.last().map_or(0.0, |p| p.t);
        points.reverse();
        for p in &mut points {
            p.t = ((end - p.t) * rate).round() / rate;
        }
    }

    Ok(Trace::new("synth", spec.letter, points, rate)?.with_label(spec.rotation.name()))
}

/// Style factors shared by every letter of one synthetic writer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WriterStyle {
    pub rotation: Rotation,
    pub tempo: f64,
    pub start_corner: Corner,
    pub flourish: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpusConfig {
    pub letters: Vec<Letter>,
    pub n_writers: usize,
    /// Writers alternate clockwise/anticlockwise when set.
    pub vary_rotation: bool,
    /// Each writer draws a tempo from `tempo_levels` when set.
    pub vary_tempo: bool,
    pub vary_corner: bool,
    pub vary_flourish: bool,
    pub tempo_levels: Vec<f64>,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        SynthCorpusConfig {
            letters: vec![Letter::from_char('X').unwrap()],
            n_writers: 40,
            vary_rotation: true,
            vary_tempo: false,
            vary_corner: false,
            vary_flourish: false,
            tempo_levels: vec![0.75, 1.0, 1.5],
            jitter: 0.03,
            seed: 1,
        }
    }
}

impl SynthCorpusConfig {
    /// Style factor names accepted by [`SynthCorpusConfig::set_styles`].
    pub const STYLE_NAMES: [&'static str; 4] = ["rotation", "tempo", "corner", "flourish"];

    pub fn set_styles<'a>(&mut self, names: impl IntoIterator<Item = &'a str>) -> Result<()> {
        self.vary_rotation = false;
        self.vary_tempo = false;
        self.vary_corner = false;
        self.vary_flourish = false;
        for name in names {
            match name.trim() {
                "rotation" => self.vary_rotation = true,
                "tempo" => self.vary_tempo = true,
                "corner" => self.vary_corner = true,
                "flourish" => self.vary_flourish = true,
                "" => {}
                other => return Err(Error::InvalidArgument(format!("unknown style factor {other:?}"))),
            }
        }
        Ok(())
    }

    pub fn writer_id(index: usize) -> String {
        format!("w{index:03}")
    }

    pub fn writer_style(&self, index: usize) -> WriterStyle {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, index as u64));
        let rotation = if self.vary_rotation && index % 2 == 1 {
            Rotation::Anticlockwise
        } else {
            Rotation::Clockwise
        };
        let tempo = if self.vary_tempo && !self.tempo_levels.is_empty() {
            self.tempo_levels[rng.random_range(0..self.tempo_levels.len())]
        } else {
            1.0
        };
        let start_corner = if self.vary_corner {
            Corner::ALL[rng.random_range(0..4)]
        } else {
            Corner::TopLeft
        };
        let flourish = self.vary_flourish && rng.random_bool(0.5);
        WriterStyle {
            rotation,
            tempo,
            start_corner,
            flourish,
        }
    }

    /// One trace per (writer, letter), writers in index order.
    pub fn generate(&self) -> Result<Vec<Trace>> {
        if self.n_writers == 0 {
            return Err(Error::InvalidArgument("n_writers must be at least 1".into()));
        }
        if self.letters.is_empty() {
            return Err(Error::InvalidArgument("no letters requested".into()));
        }
        if let Some(l) = self.letters.iter().find(|l| !has_template(**l)) {
            return Err(Error::UnknownTemplate(l.as_char()));
        }
        let mut out = Vec::with_capacity(self.n_writers * self.letters.len());
        for w in 0..self.n_writers {
            let style = self.writer_style(w);
            for &letter in &self.letters {
                let spec = SynthStyleSpec {
                    letter,
                    rotation: style.rotation,
                    tempo: style.tempo,
                    jitter: self.jitter,
                    start_corner: style.start_corner,
                    flourish: style.flourish,
                    seed: mix_seed(mix_seed(self.seed, w as u64), letter.index() as u64 + 1000),
                };
                let mut trace = synth_trace(&spec)?;
                trace.writer_id = Self::writer_id(w);
                out.push(trace);
            }
        }
        Ok(out)
    }
}
