use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y = W x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub input_size: usize,
    pub output_size: usize,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        output_size: usize,
        with_bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), output_size, input_size, rng);
        let bias = with_bias.then(|| store.add_zeros(format!("{name}.bias"), output_size, 1));
        Dense {
            input_size,
            output_size,
            weight,
            bias,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_size {
            return Err(Error::shape("dense input", self.input_size, x.len()));
        }
        let mut y = store.get(self.weight).matvec(x);
        if let Some(b) = self.bias {
            y.iter_mut().zip(&store.get(b).data).for_each(|(a, b)| *a += b);
        }
        Ok(y)
    }

    pub fn forward_graph(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        g.affine(&[(self.weight, x)], self.bias)
    }
}

/// Gated recurrent unit; the reset gate is applied to the hidden state
/// before the candidate's recurrent matrix:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h~ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 - z) ⊙ h + z ⊙ h~
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, name: &str, input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let (i, h) = (input_size, hidden_size);
        GruCell {
            input_size,
            hidden_size,
            w_z: store.add_uniform(format!("{name}.w_z"), h, i, rng),
            u_z: store.add_uniform(format!("{name}.u_z"), h, h, rng),
            b_z: store.add_zeros(format!("{name}.b_z"), h, 1),
            w_r: store.add_uniform(format!("{name}.w_r"), h, i, rng),
            u_r: store.add_uniform(format!("{name}.u_r"), h, h, rng),
            b_r: store.add_zeros(format!("{name}.b_r"), h, 1),
            w_h: store.add_uniform(format!("{name}.w_h"), h, i, rng),
            u_h: store.add_uniform(format!("{name}.u_h"), h, h, rng),
            b_h: store.add_zeros(format!("{name}.b_h"), h, 1),
        }
    }

    fn check(&self, x: usize, h: usize) -> Result<()> {
        if x != self.input_size {
            return Err(Error::shape("gru input", self.input_size, x));
        }
        if h != self.hidden_size {
            return Err(Error::shape("gru hidden", self.hidden_size, h));
        }
        Ok(())
    }

    /// One step on plain vectors.
    pub fn step(&self, store: &ParamStore, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len(), h.len())?;
        let gate = |w: ParamId, u: ParamId, b: ParamId, hv: &[f64]| -> Vec<f64> {
            let a = store.get(w).matvec(x);
            let c = store.get(u).matvec(hv);
            a.iter()
                .zip(&c)
                .zip(&store.get(b).data)
                .map(|((a, c), b)| a + c + b)
                .collect()
        };
        let z: Vec<f64> = gate(self.w_z, self.u_z, self.b_z, h).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = gate(self.w_r, self.u_r, self.b_r, h).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(r, h)| r * h).collect();
        let cand: Vec<f64> = gate(self.w_h, self.u_h, self.b_h, &rh).into_iter().map(f64::tanh).collect();
        Ok(z.iter()
            .zip(h)
            .zip(&cand)
            .map(|((z, h), c)| (1.0 - z) * h + z * c)
            .collect())
    }

    pub fn step_graph(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<Var> {
        self.check(g.shape(x).0 * g.shape(x).1, g.shape(h).0 * g.shape(h).1)?;
        let za = g.affine(&[(self.w_z, x), (self.u_z, h)], Some(self.b_z))?;
        let z = g.sigmoid(za);
        let ra = g.affine(&[(self.w_r, x), (self.u_r, h)], Some(self.b_r))?;
        let r = g.sigmoid(ra);
        let rh = g.mul(r, h)?;
        let ca = g.affine(&[(self.w_h, x), (self.u_h, rh)], Some(self.b_h))?;
        let cand = g.tanh(ca);
        let keep = g.one_minus(z);
        let old = g.mul(keep, h)?;
        let new = g.mul(z, cand)?;
        g.add(old, new)
    }
}

/// Free-function form of [`GruCell::step`].
pub fn gru_step(store: &ParamStore, cell: &GruCell, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    cell.step(store, x, h)
}

/// Stacked GRU layers; layer `k`'s output is layer `k + 1`'s input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruStack {
    pub layers: Vec<GruCell>,
}

impl GruStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        n_layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|k| {
                let inp = if k == 0 { input_size } else { hidden_size };
                GruCell::new(store, &format!("{name}.l{k}"), inp, hidden_size, rng)
            })
            .collect();
        GruStack { layers }
    }

    pub fn hidden_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.hidden_size)
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input_size)
    }

    pub fn zero_state(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| vec![0.0; l.hidden_size]).collect()
    }

    /// Advances every layer by one step and returns the top layer's output.
    /// `between` is applied to each non-top layer output before it feeds the
    /// next layer (dropout hook).
    pub fn step(
        &self,
        store: &ParamStore,
        x: &[f64],
        state: &mut [Vec<f64>],
        mut between: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<Vec<f64>> {
        let mut input = x.to_vec();
        let n = self.layers.len();
        for (k, (layer, h)) in self.layers.iter().zip(state.iter_mut()).enumerate() {
            *h = layer.step(store, &input, h)?;
            input = if k + 1 < n { between(h)? } else { h.clone() };
        }
        Ok(input)
    }

    pub fn step_graph<'a>(
        &self,
        g: &mut Graph<'a>,
        x: Var,
        state: &mut [Var],
        mut between: impl FnMut(&mut Graph<'a>, Var) -> Result<Var>,
    ) -> Result<Var> {
        let mut input = x;
        let n = self.layers.len();
        for (k, (layer, h)) in self.layers.iter().zip(state.iter_mut()).enumerate() {
            *h = layer.step_graph(g, input, *h)?;
            input = if k + 1 < n { between(g, *h)? } else { *h };
        }
        Ok(input)
    }
}
