//! Discrete frame representation of a pen trace.
//!
//! Every interior point of a trace becomes one frame: the quantized change
//! of heading between the incoming and outgoing displacement (a relative
//! Freeman code over `n_levels` directions) paired with the quantized speed
//! of the outgoing displacement. The absolute heading, speed and position of
//! the first displacement travel alongside the codes so that a frame
//! sequence can be turned back into a trajectory.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace_io::{Letter, Point, Trace};

pub const DEFAULT_LEVELS: usize = 16;
/// Longest frame sequence accepted; matches the generation cap.
pub const MAX_FRAMES: usize = 100;
/// Percentile of training displacement speeds used as the speed ceiling.
pub const V_MAX_PERCENTILE: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub n_levels: usize,
    pub v_max: f64,
}

impl QuantizerConfig {
    pub fn new(n_levels: usize, v_max: f64) -> Result<Self> {
        let cfg = QuantizerConfig { n_levels, v_max };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_levels < 2 || self.n_levels > 255 {
            return Err(Error::InvalidArgument(format!(
                "n_levels must be in [2, 255], got {}",
                self.n_levels
            )));
        }
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return Err(Error::InvalidArgument(format!("v_max must be > 0, got {}", self.v_max)));
        }
        Ok(())
    }

    /// Sets `v_max` to the 99th percentile (nearest rank) of all displacement
    /// speeds in `traces`.
    pub fn calibrate<'a>(traces: impl IntoIterator<Item = &'a Trace>, n_levels: usize) -> Result<Self> {
        let mut speeds: Vec<f64> = traces
            .into_iter()
            .flat_map(|t| {
                t.points
                    .windows(2)
                    .map(|w| w[0].dist(&w[1]) / (w[1].t - w[0].t))
                    .collect::<Vec<_>>()
            })
            .filter(|v| *v > 0.0)
            .collect();
        if speeds.is_empty() {
            return Err(Error::Empty("no moving displacements to calibrate speed levels".into()));
        }
        speeds.sort_by(f64::total_cmp);
        let rank = ((V_MAX_PERCENTILE * speeds.len() as f64).ceil() as usize).clamp(1, speeds.len());
        Self::new(n_levels, speeds[rank - 1])
    }

    pub fn bin_width(&self) -> f64 {
        TAU / self.n_levels as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    pub dir: u8,
    pub speed: u8,
}

impl Frame {
    pub fn new(dir: u8, speed: u8) -> Self {
        Frame { dir, speed }
    }
}

/// Quantized letter: `frames` plus the geometry needed to rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub letter: Letter,
    pub frames: Vec<Frame>,
    /// Heading of the first displacement, in `[0, 2π)`.
    pub initial_heading: f64,
    /// Speed of the first displacement.
    pub initial_speed: f64,
    pub origin: (f64, f64),
    pub sample_rate_hz: f64,
}

impl FrameSequence {
    pub fn new(letter: Letter, frames: Vec<Frame>, n_levels: usize) -> Result<Self> {
        let fs = FrameSequence {
            letter,
            frames,
            initial_heading: 0.0,
            initial_speed: 1.0,
            origin: (0.0, 0.0),
            sample_rate_hz: crate::trace_io::DEFAULT_SAMPLE_RATE_HZ,
        };
        fs.validate(n_levels)?;
        Ok(fs)
    }

    pub fn validate(&self, n_levels: usize) -> Result<()> {
        if self.frames.is_empty() || self.frames.len() > MAX_FRAMES {
            return Err(Error::InvalidArgument(format!(
                "frame count must be in [1, {MAX_FRAMES}], got {}",
                self.frames.len()
            )));
        }
        if let Some(f) = self
            .frames
            .iter()
            .find(|f| f.dir as usize >= n_levels || f.speed as usize >= n_levels)
        {
            return Err(Error::InvalidArgument(format!("code out of range: {f:?}")));
        }
        if !(0.0..TAU).contains(&self.initial_heading) {
            return Err(Error::InvalidArgument(format!(
                "initial heading {} outside [0, 2π)",
                self.initial_heading
            )));
        }
        if !(self.sample_rate_hz > 0.0 && self.initial_speed.is_finite()) {
            return Err(Error::InvalidArgument("invalid sample rate or initial speed".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dir_codes(&self) -> Vec<u8> {
        self.frames.iter().map(|f| f.dir).collect()
    }

    pub fn speed_codes(&self) -> Vec<u8> {
        self.frames.iter().map(|f| f.speed).collect()
    }

    /// Copies the reconstruction sidecar (heading, speed, origin, rate) from
    /// another sequence.
    pub fn with_anchor_of(mut self, other: &FrameSequence) -> Self {
        self.initial_heading = other.initial_heading;
        self.initial_speed = other.initial_speed;
        self.origin = other.origin;
        self.sample_rate_hz = other.sample_rate_hz;
        self
    }
}

/// One-hot frame vector: direction block then speed block, `2 * n_levels` wide.
pub fn one_hot(frame: Frame, n_levels: usize) -> Vec<f64> {
    let mut v = vec![0.0; 2 * n_levels];
    v[frame.dir as usize] = 1.0;
    v[n_levels + frame.speed as usize] = 1.0;
    v
}

fn heading(a: (f64, f64), b: (f64, f64)) -> f64 {
    (b.1 - a.1).atan2(b.0 - a.0)
}

fn wrap_positive(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Turning angle at `p1` in `[0, 2π)`, counter-clockwise positive.
pub fn turning_angle(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> Result<f64> {
    if p0 == p1 || p1 == p2 {
        return Err(Error::Degenerate("zero-length displacement".into()));
    }
    Ok(wrap_positive(heading(p1, p2) - heading(p0, p1)))
}

/// Relative Freeman code of the heading change at `p1`, rounded to the
/// nearest of `n_levels` bins centred on multiples of `2π / n_levels`.
pub fn direction_change_code(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64), n_levels: usize) -> Result<u8> {
    let dtheta = turning_angle(p0, p1, p2)?;
    let bins = (dtheta / (TAU / n_levels as f64)).round() as usize;
    Ok((bins % n_levels) as u8)
}

pub fn speed_code(p_prev: (f64, f64), p_next: (f64, f64), dt: f64, cfg: &QuantizerConfig) -> Result<u8> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let v = (p_next.0 - p_prev.0).hypot(p_next.1 - p_prev.1) / dt;
    let level = (v.clamp(0.0, cfg.v_max) / cfg.v_max * cfg.n_levels as f64).floor() as usize;
    Ok(level.min(cfg.n_levels - 1) as u8)
}

fn xy(p: &Point) -> (f64, f64) {
    (p.x, p.y)
}

/// Quantizes a trace. Consecutive duplicate points are merged first; pen-up
/// gaps count as ordinary displacements.
pub fn encode(trace: &Trace, cfg: &QuantizerConfig) -> Result<FrameSequence> {
    cfg.validate()?;
    let mut points = trace.points.clone();
    points.dedup_by(|b, a| a.x == b.x && a.y == b.y);
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need 3 distinct points, got {} after merging duplicates",
            points.len()
        )));
    }
    let frames = points
        .windows(3)
        .map(|w| {
            let dir = direction_change_code(xy(&w[0]), xy(&w[1]), xy(&w[2]), cfg.n_levels)?;
            let speed = speed_code(xy(&w[1]), xy(&w[2]), w[2].t - w[1].t, cfg)?;
            Ok(Frame { dir, speed })
        })
        .collect::<Result<Vec<_>>>()?;
    let (p0, p1) = (&points[0], &points[1]);
    let fs = FrameSequence {
        letter: trace.letter,
        frames,
        initial_heading: wrap_positive(heading(xy(p0), xy(p1))),
        initial_speed: p0.dist(p1) / (p1.t - p0.t),
        origin: xy(p0),
        sample_rate_hz: trace.sample_rate_hz,
    };
    fs.validate(cfg.n_levels)?;
    Ok(fs)
}

/// Rebuilds a trajectory by integrating bin-centre heading changes and
/// bin-centre speeds from the stored origin and initial displacement. The
/// result carries writer id `"decoded"`.
pub fn decode(fs: &FrameSequence, cfg: &QuantizerConfig) -> Result<Trace> {
    cfg.validate()?;
    fs.validate(cfg.n_levels)?;
    let dt = 1.0 / fs.sample_rate_hz;
    let mut points = Vec::with_capacity(fs.len() + 2);
    let (mut x, mut y) = fs.origin;
    let mut h = fs.initial_heading;
    points.push(Point::new(x, y, 0.0));
    x += fs.initial_speed * dt * h.cos();
    y += fs.initial_speed * dt * h.sin();
    points.push(Point::new(x, y, dt));
    let level_width = cfg.v_max / cfg.n_levels as f64;
    for (k, f) in fs.frames.iter().enumerate() {
        h = wrap_positive(h + f.dir as f64 * cfg.bin_width());
        let v = (f.speed as f64 + 0.5) * level_width;
        x += v * dt * h.cos();
        y += v * dt * h.sin();
        points.push(Point::new(x, y, (k + 2) as f64 / fs.sample_rate_hz));
    }
    Trace::new("decoded", fs.letter, points, fs.sample_rate_hz)
}
