//! Tape-based reverse-mode differentiation over the handful of vector ops
//! the models need.
//!
//! A [`Graph`] records every operation of one forward pass in execution
//! order. [`Graph::backward`] walks the tape in reverse from a scalar node
//! and returns gradients for every parameter of the borrowed
//! [`ParamStore`]. The graph itself is never mutated by `backward`, so the
//! call can be repeated.

use std::mem;

use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    /// Σ W_k x_k (+ b); each W is a parameter matrix, each x a vector.
    Affine { terms: Vec<(Var, Var)>, bias: Option<Var> },
    Add(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Mask(Var, Vec<f64>),
    Row { matrix: Var, index: usize },
    MeanRows(Var),
    /// Scalar; probabilities are kept in the node's `aux`.
    SoftmaxNll { logits: Var, target: usize },
    Sum(Vec<Var>),
    Scale(Var, f64),
    SumAll(Var),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
    aux: Vec<f64>,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(grads: &mut [Vec<f64>], v: Var, len: usize) -> &mut [f64] {
    let g = &mut grads[v.0];
    if g.is_empty() {
        g.resize(len, 0.0);
    }
    g
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
            aux: Vec::new(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => &self.store.get(id).data,
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    fn vec_len(&self, v: Var) -> usize {
        let (r, c) = self.shape(v);
        r * c
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let t = self.store.get(id);
        let v = self.push(Vec::new(), t.rows, t.cols, Op::Param(id));
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(data, n, 1, Op::Constant)
    }

    pub fn affine(&mut self, terms: &[(ParamId, Var)], bias: Option<ParamId>) -> Result<Var> {
        let mut out: Option<Vec<f64>> = None;
        let mut vars = Vec::with_capacity(terms.len());
        for &(w, x) in terms {
            let wt = self.store.get(w);
            if wt.cols != self.vec_len(x) {
                return Err(Error::shape("affine input", wt.cols, self.vec_len(x)));
            }
            let y = wt.matvec(self.value(x));
            match &mut out {
                None => out = Some(y),
                Some(acc) => {
                    if acc.len() != y.len() {
                        return Err(Error::shape("affine terms", acc.len(), y.len()));
                    }
                    acc.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
                }
            }
            let wv = self.param(w);
            vars.push((wv, x));
        }
        let mut out = out.ok_or_else(|| Error::InvalidArgument("affine needs at least one term".into()))?;
        let bias_var = match bias {
            Some(b) => {
                let bt = self.store.get(b);
                if bt.len() != out.len() {
                    return Err(Error::shape("affine bias", out.len(), bt.len()));
                }
                out.iter_mut().zip(&bt.data).for_each(|(a, b)| *a += b);
                Some(self.param(b))
            }
            None => None,
        };
        let n = out.len();
        Ok(self.push(out, n, 1, Op::Affine { terms: vars, bias: bias_var }))
    }

    fn check_same(&self, a: Var, b: Var, ctx: &'static str) -> Result<()> {
        if self.vec_len(a) != self.vec_len(b) {
            return Err(Error::shape(ctx, self.vec_len(a), self.vec_len(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "add")?;
        let v: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let (r, c) = self.shape(a);
        Ok(self.push(v, r, c, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "mul")?;
        let v: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let (r, c) = self.shape(a);
        Ok(self.push(v, r, c, Op::Mul(a, b)))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v: Vec<f64> = self.value(a).iter().map(|&x| f(x)).collect();
        let (r, c) = self.shape(a);
        self.push(v, r, c, op)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let v: Vec<f64> = parts.iter().flat_map(|&p| self.value(p).iter().copied()).collect();
        let n = v.len();
        self.push(v, n, 1, Op::Concat(parts.to_vec()))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.vec_len(a) {
            return Err(Error::shape("mask", self.vec_len(a), mask.len()));
        }
        let v: Vec<f64> = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let n = v.len();
        Ok(self.push(v, n, 1, Op::Mask(a, mask)))
    }

    /// Row `index` of a parameter matrix, as a vector (embedding lookup).
    pub fn row(&mut self, matrix: ParamId, index: usize) -> Result<Var> {
        let t = self.store.get(matrix);
        if index >= t.rows {
            return Err(Error::shape("row index", t.rows, index));
        }
        let v = t.row(index).to_vec();
        let m = self.param(matrix);
        let n = v.len();
        Ok(self.push(v, n, 1, Op::Row { matrix: m, index }))
    }

    /// Mean of all rows of a parameter matrix.
    pub fn mean_rows(&mut self, matrix: ParamId) -> Result<Var> {
        let t = self.store.get(matrix);
        if t.rows == 0 {
            return Err(Error::Empty("mean of an empty table".into()));
        }
        let mut v = vec![0.0; t.cols];
        for r in 0..t.rows {
            v.iter_mut().zip(t.row(r)).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / t.rows as f64;
        v.iter_mut().for_each(|a| *a *= inv);
        let m = self.param(matrix);
        let n = v.len();
        Ok(self.push(v, n, 1, Op::MeanRows(m)))
    }

    /// `-log softmax(logits)[target]` as a scalar node.
    pub fn softmax_nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let (loss, probs) = super::ops::softmax_nll_probs(self.value(logits), target)?;
        let v = self.push(vec![loss], 1, 1, Op::SoftmaxNll { logits, target });
        self.nodes[v.0].aux = probs;
        Ok(v)
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("sum of nothing".into()))?;
        let mut acc = self.value(first).to_vec();
        for &p in &parts[1..] {
            self.check_same(first, p, "sum")?;
            acc.iter_mut().zip(self.value(p)).for_each(|(a, b)| *a += b);
        }
        let (r, c) = self.shape(first);
        Ok(self.push(acc, r, c, Op::Sum(parts.to_vec())))
    }

    /// Sum of every entry, as a scalar node.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![s], 1, 1, Op::SumAll(a))
    }

    /// Gradients of the scalar node `loss` with respect to every parameter
    /// in the store. Parameters not reached by `loss` get zero gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyGraph);
        }
        if self.vec_len(loss) != 1 {
            return Err(Error::shape("backward root must be scalar", 1, self.vec_len(loss)));
        }
        let mut out = Gradients::zeros_like(self.store);
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        grads[loss.0] = vec![1.0];

        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = mem::take(&mut grads[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    out.get_mut(*id).data.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::Affine { terms, bias } => {
                    for &(w, x) in terms {
                        let wt = self.value(w);
                        let xv = self.value(x);
                        let cols = xv.len();
                        {
                            let dw = accumulate(&mut grads, w, wt.len());
                            for (r, gr) in g.iter().enumerate() {
                                if *gr != 0.0 {
                                    let row = &mut dw[r * cols..(r + 1) * cols];
                                    row.iter_mut().zip(xv).for_each(|(d, xv)| *d += gr * xv);
                                }
                            }
                        }
                        if !matches!(self.nodes[x.0].op, Op::Constant) {
                            let dx = accumulate(&mut grads, x, cols);
                            for (r, gr) in g.iter().enumerate() {
                                if *gr != 0.0 {
                                    let row = &wt[r * cols..(r + 1) * cols];
                                    dx.iter_mut().zip(row).for_each(|(d, w)| *d += gr * w);
                                }
                            }
                        }
                    }
                    if let Some(b) = bias {
                        accumulate(&mut grads, *b, g.len())
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(d, gi)| *d += gi);
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        accumulate(&mut grads, v, g.len())
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(d, gi)| *d += gi);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da: Vec<f64> = g.iter().zip(bv).map(|(gi, y)| gi * y).collect();
                    let db: Vec<f64> = g.iter().zip(av).map(|(gi, x)| gi * x).collect();
                    accumulate(&mut grads, *a, g.len()).iter_mut().zip(&da).for_each(|(d, v)| *d += v);
                    accumulate(&mut grads, *b, g.len()).iter_mut().zip(&db).for_each(|(d, v)| *d += v);
                }
                Op::OneMinus(a) => {
                    accumulate(&mut grads, *a, g.len())
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(d, gi)| *d -= gi);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, g.len())
                        .iter_mut()
                        .zip(g.iter().zip(y))
                        .for_each(|(d, (gi, y))| *d += gi * y * (1.0 - y));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, g.len())
                        .iter_mut()
                        .zip(g.iter().zip(y))
                        .for_each(|(d, (gi, y))| *d += gi * (1.0 - y * y));
                }
                Op::Scale(a, s) => {
                    accumulate(&mut grads, *a, g.len())
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(d, gi)| *d += gi * s);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.vec_len(p);
                        accumulate(&mut grads, p, n)
                            .iter_mut()
                            .zip(&g[offset..offset + n])
                            .for_each(|(d, gi)| *d += gi);
                        offset += n;
                    }
                }
                Op::Mask(a, mask) => {
                    accumulate(&mut grads, *a, g.len())
                        .iter_mut()
                        .zip(g.iter().zip(mask))
                        .for_each(|(d, (gi, m))| *d += gi * m);
                }
                Op::Row { matrix, index } => {
                    let (rows, cols) = self.shape(*matrix);
                    let dm = accumulate(&mut grads, *matrix, rows * cols);
                    dm[index * cols..(index + 1) * cols]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(d, gi)| *d += gi);
                }
                Op::MeanRows(matrix) => {
                    let (rows, cols) = self.shape(*matrix);
                    let inv = 1.0 / rows as f64;
                    let dm = accumulate(&mut grads, *matrix, rows * cols);
                    for r in 0..rows {
                        dm[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(d, gi)| *d += gi * inv);
                    }
                }
                Op::SoftmaxNll { logits, target } => {
                    let probs = &node.aux;
                    let dl = accumulate(&mut grads, *logits, probs.len());
                    for (k, (d, p)) in dl.iter_mut().zip(probs).enumerate() {
                        let onehot = if k == *target { 1.0 } else { 0.0 };
                        *d += g[0] * (p - onehot);
                    }
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        accumulate(&mut grads, p, g.len())
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(d, gi)| *d += gi);
                    }
                }
                Op::SumAll(a) => {
                    let n = self.vec_len(*a);
                    accumulate(&mut grads, *a, n).iter_mut().for_each(|d| *d += g[0]);
                }
            }
        }
        Ok(out)
    }
}
