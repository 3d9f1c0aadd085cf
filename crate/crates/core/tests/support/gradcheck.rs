//! Tape gradients against central finite differences.
//!
//! Every check builds a scalar loss from a closure, then compares the tape
//! gradient of each parameter entry with `(f(x + h) - f(x - h)) / 2h`.
//! Inputs are registered as parameters so their gradients are checked too.

use handstyle::codec::{Frame, FrameSequence};
use handstyle::model::{BaselineModel, ModelConfig, SequenceModel, StyleAutoencoder};
use handstyle::neural::{Dense, Graph, GruCell, GruStack, ParamId, ParamStore, Tensor2, Var};
use handstyle::trace_io::Letter;
use handstyle::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
pub const TOL: f64 = 1e-4;
pub const INSTANCES: u64 = 100;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Largest relative error over every scalar of every parameter.
fn max_rel_error(store: &ParamStore, loss: impl Fn(&mut Graph<'_>) -> Result<Var>) -> f64 {
    let eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let v = loss(&mut g).unwrap();
        g.scalar(v)
    };
    let grads = {
        let mut g = Graph::new(store);
        let v = loss(&mut g).unwrap();
        g.backward(v).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut probe = store.clone();
    for id in store.ids() {
        for k in 0..store.get(id).len() {
            let x = store.get(id).data[k];
            probe.get_mut(id).data[k] = x + STEP;
            let up = eval(&probe);
            probe.get_mut(id).data[k] = x - STEP;
            let down = eval(&probe);
            probe.get_mut(id).data[k] = x;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(grads.get(id).data[k], numeric));
        }
    }
    worst
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn input(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, n: usize) -> ParamId {
    let v = rand_vec(rng, n, 1.5);
    store.add(name, Tensor2::column(v))
}

/// Replaces every parameter with fresh random values, including the biases
/// that layer constructors zero.
fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.get(id).len();
        store.get_mut(id).data = rand_vec(rng, n, 0.8);
    }
}

/// Contracts a vector node to a scalar with fixed random weights, so every
/// output entry contributes a distinct amount to the loss.
fn project(g: &mut Graph<'_>, v: Var, weights: &[f64]) -> Result<Var> {
    let w = g.constant(weights.to_vec());
    let p = g.mul(v, w)?;
    Ok(g.sum_all(p))
}

/// Worst relative error over `INSTANCES` seeded instances of one check.
pub fn worst_case(name: &str, instance: fn(&mut ChaCha8Rng) -> f64) -> f64 {
    (0..INSTANCES)
        .map(|i| instance(&mut ChaCha8Rng::seed_from_u64(i * 7919 + name.len() as u64)))
        .fold(0.0, f64::max)
}

pub fn affine(rng: &mut ChaCha8Rng) -> f64 {
    let (n_in, n_in2, n_out) = (rng.random_range(1..7), rng.random_range(1..5), rng.random_range(1..7));
    let mut s = ParamStore::new();
    let w1 = s.add_uniform("w1", n_out, n_in, rng);
    let w2 = s.add_uniform("w2", n_out, n_in2, rng);
    let b = s.add_zeros("b", n_out, 1);
    let x1 = input(&mut s, rng, "x1", n_in);
    let x2 = input(&mut s, rng, "x2", n_in2);
    randomize(&mut s, rng);
    let proj = rand_vec(rng, n_out, 1.0);
    max_rel_error(&s, |g| {
        let (a, c) = (g.param(x1), g.param(x2));
        let y = g.affine(&[(w1, a), (w2, c)], Some(b))?;
        project(g, y, &proj)
    })
}

pub fn dense(rng: &mut ChaCha8Rng) -> f64 {
    let (n_in, n_out) = (rng.random_range(1..9), rng.random_range(1..9));
    let mut s = ParamStore::new();
    let layer = Dense::new(&mut s, "d", n_in, n_out, rng.random_bool(0.5), rng);
    let x = input(&mut s, rng, "x", n_in);
    randomize(&mut s, rng);
    let proj = rand_vec(rng, n_out, 1.0);
    max_rel_error(&s, |g| {
        let xv = g.param(x);
        let y = layer.forward_graph(g, xv)?;
        project(g, y, &proj)
    })
}

pub fn binary(rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.random_range(1..10);
    let mut s = ParamStore::new();
    let a = input(&mut s, rng, "a", n);
    let b = input(&mut s, rng, "b", n);
    let proj = rand_vec(rng, n, 1.0);
    let use_mul = rng.random_bool(0.5);
    max_rel_error(&s, |g| {
        let (av, bv) = (g.param(a), g.param(b));
        let y = if use_mul { g.mul(av, bv)? } else { g.add(av, bv)? };
        // Squaring keeps the add case from having a constant gradient.
        let y2 = g.mul(y, y)?;
        project(g, y2, &proj)
    })
}

fn unary(rng: &mut ChaCha8Rng, op: &str) -> f64 {
    let n = rng.random_range(1..10);
    let mut s = ParamStore::new();
    let a = input(&mut s, rng, "a", n);
    let proj = rand_vec(rng, n, 1.0);
    let k = rng.random_range(-3.0..3.0);
    max_rel_error(&s, |g| {
        let av = g.param(a);
        let y = match op {
            "one_minus" => g.one_minus(av),
            "sigmoid" => g.sigmoid(av),
            "tanh" => g.tanh(av),
            _ => g.scale(av, k),
        };
        let y2 = g.mul(y, av)?;
        project(g, y2, &proj)
    })
}

pub fn one_minus(rng: &mut ChaCha8Rng) -> f64 {
    unary(rng, "one_minus")
}

pub fn sigmoid(rng: &mut ChaCha8Rng) -> f64 {
    unary(rng, "sigmoid")
}

pub fn tanh(rng: &mut ChaCha8Rng) -> f64 {
    unary(rng, "tanh")
}

pub fn scale(rng: &mut ChaCha8Rng) -> f64 {
    unary(rng, "scale")
}

pub fn concat_mask(rng: &mut ChaCha8Rng) -> f64 {
    let (n, m) = (rng.random_range(1..6), rng.random_range(1..6));
    let mut s = ParamStore::new();
    let a = input(&mut s, rng, "a", n);
    let b = input(&mut s, rng, "b", m);
    let mask: Vec<f64> = (0..n + m).map(|_| if rng.random_bool(0.3) { 0.0 } else { 1.25 }).collect();
    let proj = rand_vec(rng, n + m, 1.0);
    max_rel_error(&s, |g| {
        let (av, bv) = (g.param(a), g.param(b));
        let c = g.concat(&[av, bv]);
        let t = g.tanh(c);
        let y = g.mask(t, mask.clone())?;
        project(g, y, &proj)
    })
}

pub fn rows(rng: &mut ChaCha8Rng) -> f64 {
    let (rows, cols) = (rng.random_range(1..6), rng.random_range(1..6));
    let index = rng.random_range(0..rows);
    let mut s = ParamStore::new();
    let table = s.add_uniform("table", rows, cols, rng);
    let proj = rand_vec(rng, cols, 1.0);
    max_rel_error(&s, |g| {
        let r = g.row(table, index)?;
        let m = g.mean_rows(table)?;
        let y = g.mul(r, m)?;
        let y = g.add(y, r)?;
        project(g, y, &proj)
    })
}

pub fn softmax_nll(rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.random_range(2..18);
    let target = rng.random_range(0..n);
    let mut s = ParamStore::new();
    let a = input(&mut s, rng, "logits", n);
    max_rel_error(&s, |g| {
        let av = g.param(a);
        g.softmax_nll(av, target)
    })
}

pub fn sum(rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.random_range(1..8);
    let k = rng.random_range(1..5);
    let mut s = ParamStore::new();
    let ids: Vec<ParamId> = (0..k).map(|i| input(&mut s, rng, &format!("p{i}"), n)).collect();
    let proj = rand_vec(rng, n, 1.0);
    max_rel_error(&s, |g| {
        let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
        let sq: Vec<Var> = vars.iter().map(|&v| g.mul(v, v)).collect::<Result<_>>()?;
        let total = g.sum(&sq)?;
        let t = g.tanh(total);
        let a = project(g, t, &proj)?;
        let b = g.sum_all(total);
        let b = g.scale(b, 0.1);
        g.sum(&[a, b])
    })
}

pub fn gru_cell(rng: &mut ChaCha8Rng) -> f64 {
    let (n_in, n_h) = (rng.random_range(1..6), rng.random_range(1..6));
    let mut s = ParamStore::new();
    let cell = GruCell::new(&mut s, "gru", n_in, n_h, rng);
    let x = input(&mut s, rng, "x", n_in);
    let h = input(&mut s, rng, "h", n_h);
    randomize(&mut s, rng);
    let target = rng.random_range(0..n_h);
    max_rel_error(&s, |g| {
        let (xv, hv) = (g.param(x), g.param(h));
        let h1 = cell.step_graph(g, xv, hv)?;
        g.softmax_nll(h1, target)
    })
}

pub fn gru_stack(rng: &mut ChaCha8Rng) -> f64 {
    let (n_in, n_h, layers, steps) =
        (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..4));
    let mut s = ParamStore::new();
    let stack = GruStack::new(&mut s, "stack", n_in, n_h, layers, rng);
    let xs: Vec<ParamId> = (0..steps).map(|i| input(&mut s, rng, &format!("x{i}"), n_in)).collect();
    randomize(&mut s, rng);
    let mask: Vec<f64> = (0..n_h).map(|_| if rng.random_bool(0.2) { 0.0 } else { 1.25 }).collect();
    let proj = rand_vec(rng, n_h, 1.0);
    max_rel_error(&s, |g| {
        let mut state: Vec<Var> = (0..layers).map(|_| g.constant(vec![0.0; n_h])).collect();
        let mut top = None;
        for &x in &xs {
            let xv = g.param(x);
            top = Some(stack.step_graph(g, xv, &mut state, |g, h| g.mask(h, mask.clone()))?);
        }
        project(g, top.unwrap(), &proj)
    })
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        hidden: 8,
        bias_dim: 4,
        ..ModelConfig::default()
    }
}

fn tiny_sequence(rng: &mut ChaCha8Rng) -> FrameSequence {
    let frames = (0..5).map(|_| Frame::new(rng.random_range(0..16), rng.random_range(0..16))).collect();
    FrameSequence::new(Letter::from_char('X').unwrap(), frames, 16).unwrap()
}

/// Whole autoencoder loss (hidden 8, style width 4, five frames).
pub fn tiny_autoencoder(rng: &mut ChaCha8Rng) -> f64 {
    let seed = rng.random();
    let mut model = StyleAutoencoder::new(tiny_config(), seed).unwrap();
    randomize(&mut model.store, rng);
    let fs = tiny_sequence(rng);
    max_rel_error(&model.store, |g| model.loss_graph(g, "w", &fs, None))
}

pub fn tiny_baseline(rng: &mut ChaCha8Rng) -> f64 {
    let seed = rng.random();
    let mut model = BaselineModel::new(tiny_config(), ["a".to_string(), "b".to_string()], seed).unwrap();
    randomize(&mut model.store, rng);
    let fs = tiny_sequence(rng);
    max_rel_error(&model.store, |g| model.loss_graph(g, "b", &fs, None))
}

pub type Check = (&'static str, fn(&mut ChaCha8Rng) -> f64);

/// Per-operation and per-layer checks, each run on `INSTANCES` instances.
pub const OPS: &[Check] = &[
    ("affine", affine),
    ("dense", dense),
    ("add_mul", binary),
    ("one_minus", one_minus),
    ("sigmoid", sigmoid),
    ("tanh", tanh),
    ("scale", scale),
    ("concat_mask", concat_mask),
    ("rows", rows),
    ("softmax_nll", softmax_nll),
    ("sum", sum),
    ("gru_cell", gru_cell),
    ("gru_stack", gru_stack),
];
