//! The letter-conditioned style autoencoder and the "letter + writer bias"
//! baseline.
//!
//! Both models share the same [`Decoder`]: a stacked GRU whose first input
//! step is a *bias frame* living in the same space as the embedded one-hot
//! frames, followed by two softmax heads (direction codes plus a stop class,
//! and speed codes). They differ only in how the bias frame is produced:
//!
//! * the autoencoder runs an encoder GRU over the letter and projects its
//!   final top-layer state, concatenated with the letter one-hot, down to
//!   `bias_dim` (the style vector);
//! * the baseline looks up a writer embedding and a letter embedding and
//!   projects their concatenation. Writers it has never seen get the mean
//!   writer embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{one_hot, FrameSequence};
use crate::error::{Error, Result};
use crate::mix_seed;
use crate::neural::{dropout_mask, softmax_nll, Dense, Graph, GruStack, ParamId, ParamStore, Tensor2, Var};
use crate::trace_io::Letter;

pub const WRITER_EMBED_DIM: usize = 32;
pub const LETTER_EMBED_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_levels: usize,
    pub hidden: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub bias_dim: usize,
    pub encoder_dropout: f64,
    pub decoder_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_levels: 16,
            hidden: 128,
            encoder_layers: 2,
            decoder_layers: 2,
            bias_dim: 32,
            encoder_dropout: 0.0,
            decoder_dropout: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_levels < 2 || self.hidden == 0 || self.bias_dim == 0 {
            return bad(format!("n_levels, hidden and bias_dim must be positive: {self:?}"));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return bad("need at least one encoder and one decoder layer".into());
        }
        if self.bias_dim >= self.hidden {
            return bad(format!(
                "bias_dim ({}) must be smaller than hidden ({})",
                self.bias_dim, self.hidden
            ));
        }
        for p in [self.encoder_dropout, self.decoder_dropout] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("dropout must be in [0, 1), got {p}"));
            }
        }
        Ok(())
    }

    /// Width of the direction head: one class per code plus the stop class.
    pub fn dir_classes(&self) -> usize {
        self.n_levels + 1
    }

    pub fn stop_class(&self) -> usize {
        self.n_levels
    }

    pub fn frame_width(&self) -> usize {
        2 * self.n_levels
    }
}

/// Low-dimensional style code of one letter; also the decoder's bias frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleVector(pub Vec<f64>);

impl StyleVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Teacher-forced decoder output for a `T`-frame sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderLogits {
    /// `T × (n_levels + 1)`; row `t` predicts frame `t`'s direction code.
    pub dir: Tensor2,
    /// `T × n_levels`.
    pub speed: Tensor2,
    /// Direction-head logits after the last frame; the target is the stop
    /// class. `None` for heads without a stop class.
    pub stop: Option<Vec<f64>>,
}

/// Per-feature mean NLL and their average.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceLoss {
    pub dir: f64,
    pub speed: f64,
    pub total: f64,
}

/// Mean negative log-likelihood per feature over the sequence and the
/// average of the two. The direction term also covers the stop step when
/// `logits.stop` is present.
pub fn sequence_loss(logits: &DecoderLogits, fs: &FrameSequence) -> Result<SequenceLoss> {
    let t = fs.len();
    if logits.dir.rows != t || logits.speed.rows != t {
        return Err(Error::shape("logit rows vs frames", t, logits.dir.rows.min(logits.speed.rows)));
    }
    if t == 0 {
        return Err(Error::Empty("empty frame sequence".into()));
    }
    let mut dir_sum = 0.0;
    let mut speed_sum = 0.0;
    for (k, f) in fs.frames.iter().enumerate() {
        dir_sum += softmax_nll(logits.dir.row(k), f.dir as usize)?.0;
        speed_sum += softmax_nll(logits.speed.row(k), f.speed as usize)?.0;
    }
    let mut dir_steps = t;
    if let Some(stop) = &logits.stop {
        dir_sum += softmax_nll(stop, stop.len() - 1)?.0;
        dir_steps += 1;
    }
    let dir = dir_sum / dir_steps as f64;
    let speed = speed_sum / t as f64;
    Ok(SequenceLoss {
        dir,
        speed,
        total: 0.5 * (dir + speed),
    })
}

/// Decoder recurrent state during step-by-step generation.
#[derive(Clone, Debug)]
pub struct DecoderState {
    hidden: Vec<Vec<f64>>,
}

/// Shared generator: frame embedding, GRU stack and the two heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub n_levels: usize,
    pub dropout: f64,
    pub frame_embed: Dense,
    pub gru: GruStack,
    pub head_dir: Dense,
    pub head_speed: Dense,
}

impl Decoder {
    fn new(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        Decoder {
            n_levels: cfg.n_levels,
            dropout: cfg.decoder_dropout,
            frame_embed: Dense::new(store, "decoder.embed", cfg.frame_width(), cfg.bias_dim, false, rng),
            gru: GruStack::new(store, "decoder.gru", cfg.bias_dim, cfg.hidden, cfg.decoder_layers, rng),
            head_dir: Dense::new(store, "decoder.head_dir", cfg.hidden, cfg.dir_classes(), true, rng),
            head_speed: Dense::new(store, "decoder.head_speed", cfg.hidden, cfg.n_levels, true, rng),
        }
    }

    pub fn bias_dim(&self) -> usize {
        self.gru.input_size()
    }

    /// Sets both heads to zero so every prediction is uniform.
    pub fn zero_heads(&self, store: &mut ParamStore) {
        for d in [&self.head_dir, &self.head_speed] {
            store.get_mut(d.weight).data.iter_mut().for_each(|w| *w = 0.0);
            if let Some(b) = d.bias {
                store.get_mut(b).data.iter_mut().for_each(|w| *w = 0.0);
            }
        }
    }

    fn check_bias(&self, bias: usize) -> Result<()> {
        if bias != self.bias_dim() {
            return Err(Error::shape("bias frame", self.bias_dim(), bias));
        }
        Ok(())
    }

    /// Feeds the bias frame and returns the state plus the first step's
    /// (direction, speed) logits.
    pub fn start(&self, store: &ParamStore, bias: &[f64]) -> Result<(DecoderState, Vec<f64>, Vec<f64>)> {
        self.check_bias(bias.len())?;
        let mut state = DecoderState {
            hidden: self.gru.zero_state(),
        };
        let top = self.gru.step(store, bias, &mut state.hidden, |h| Ok(h.to_vec()))?;
        Ok((state, self.head_dir.forward(store, &top)?, self.head_speed.forward(store, &top)?))
    }

    /// Feeds one frame (given as codes) and returns the next logits.
    pub fn feed(&self, store: &ParamStore, state: &mut DecoderState, dir: u8, speed: u8) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.frame_embed.forward(store, &one_hot(crate::codec::Frame::new(dir, speed), self.n_levels))?;
        let top = self.gru.step(store, &x, &mut state.hidden, |h| Ok(h.to_vec()))?;
        Ok((self.head_dir.forward(store, &top)?, self.head_speed.forward(store, &top)?))
    }

    /// Teacher-forced pass on plain vectors. With `rng`, dropout is active
    /// between GRU layers.
    pub fn forward(
        &self,
        store: &ParamStore,
        bias: &[f64],
        fs: &FrameSequence,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<DecoderLogits> {
        self.check_bias(bias.len())?;
        if fs.is_empty() {
            return Err(Error::Empty("empty frame sequence".into()));
        }
        let t = fs.len();
        let (nd, ns) = (self.head_dir.output_size, self.head_speed.output_size);
        let mut dir = Tensor2::zeros(t, nd);
        let mut speed = Tensor2::zeros(t, ns);
        let mut hidden = self.gru.zero_state();
        let mut input = bias.to_vec();
        let mut stop = None;
        for step in 0..=t {
            let p = self.dropout;
            let top = self.gru.step(store, &input, &mut hidden, |h| match rng.as_deref_mut() {
                Some(r) if p > 0.0 => {
                    let m = dropout_mask(h.len(), p, r)?;
                    Ok(h.iter().zip(&m).map(|(a, b)| a * b).collect())
                }
                _ => Ok(h.to_vec()),
            })?;
            let d = self.head_dir.forward(store, &top)?;
            if step < t {
                dir.data[step * nd..(step + 1) * nd].copy_from_slice(&d);
                let s = self.head_speed.forward(store, &top)?;
                speed.data[step * ns..(step + 1) * ns].copy_from_slice(&s);
                input = self.frame_embed.forward(store, &one_hot(fs.frames[step], self.n_levels))?;
            } else {
                stop = Some(d);
            }
        }
        Ok(DecoderLogits { dir, speed, stop })
    }

    /// Teacher-forced loss node: `(mean dir NLL incl. stop + mean speed NLL) / 2`.
    pub fn loss_graph<'a>(
        &self,
        g: &mut Graph<'a>,
        bias: Var,
        fs: &FrameSequence,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let (r, c) = g.shape(bias);
        self.check_bias(r * c)?;
        if fs.is_empty() {
            return Err(Error::Empty("empty frame sequence".into()));
        }
        let t = fs.len();
        let mut state: Vec<Var> = self
            .gru
            .layers
            .iter()
            .map(|l| g.constant(vec![0.0; l.hidden_size]))
            .collect();
        let mut input = bias;
        let mut dir_terms = Vec::with_capacity(t + 1);
        let mut speed_terms = Vec::with_capacity(t);
        let p = self.dropout;
        for step in 0..=t {
            let top = self.gru.step_graph(g, input, &mut state, |g, h| match rng.as_deref_mut() {
                Some(r) if p > 0.0 => {
                    let m = dropout_mask(g.shape(h).0, p, r)?;
                    g.mask(h, m)
                }
                _ => Ok(h),
            })?;
            let d = self.head_dir.forward_graph(g, top)?;
            if step < t {
                let f = fs.frames[step];
                dir_terms.push(g.softmax_nll(d, f.dir as usize)?);
                let s = self.head_speed.forward_graph(g, top)?;
                speed_terms.push(g.softmax_nll(s, f.speed as usize)?);
                let x = g.constant(one_hot(f, self.n_levels));
                input = self.frame_embed.forward_graph(g, x)?;
            } else {
                dir_terms.push(g.softmax_nll(d, self.n_levels)?);
            }
        }
        let dir_sum = g.sum(&dir_terms)?;
        let speed_sum = g.sum(&speed_terms)?;
        let dir_mean = g.scale(dir_sum, 0.5 / (t + 1) as f64);
        let speed_mean = g.scale(speed_sum, 0.5 / t as f64);
        g.sum(&[dir_mean, speed_mean])
    }
}

/// Common surface of the two trainable models.
pub trait SequenceModel: Sync {
    fn config(&self) -> &ModelConfig;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn decoder(&self) -> &Decoder;

    /// Bias frame for a letter written by `writer_id`.
    fn bias_frame(&self, writer_id: &str, fs: &FrameSequence) -> Result<Vec<f64>>;

    /// Differentiable teacher-forced loss for one sequence.
    fn loss_graph<'a>(
        &self,
        g: &mut Graph<'a>,
        writer_id: &str,
        fs: &FrameSequence,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var>;

    /// Eval-mode teacher-forced loss.
    fn sequence_loss(&self, writer_id: &str, fs: &FrameSequence) -> Result<SequenceLoss> {
        let bias = self.bias_frame(writer_id, fs)?;
        let logits = self.decoder().forward(self.store(), &bias, fs, None)?;
        sequence_loss(&logits, fs)
    }
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x1417))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleAutoencoder {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: GruStack,
    pub projection: Dense,
    pub decoder: Decoder,
}

impl StyleAutoencoder {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = init_rng(seed);
        let mut store = ParamStore::new();
        let encoder = GruStack::new(
            &mut store,
            "encoder.gru",
            config.frame_width(),
            config.hidden,
            config.encoder_layers,
            &mut rng,
        );
        let projection = Dense::new(
            &mut store,
            "projection",
            config.hidden + Letter::COUNT,
            config.bias_dim,
            true,
            &mut rng,
        );
        let decoder = Decoder::new(&mut store, &config, &mut rng);
        Ok(StyleAutoencoder {
            config,
            store,
            encoder,
            projection,
            decoder,
        })
    }

    /// Encoder over all frames, then projection of (final top state ⊕
    /// letter one-hot). Deterministic: no dropout at encoding time.
    pub fn encode_style(&self, fs: &FrameSequence) -> Result<StyleVector> {
        if fs.is_empty() {
            return Err(Error::Empty("empty frame sequence".into()));
        }
        let mut state = self.encoder.zero_state();
        let mut top = Vec::new();
        for &f in &fs.frames {
            top = self
                .encoder
                .step(&self.store, &one_hot(f, self.config.n_levels), &mut state, |h| Ok(h.to_vec()))?;
        }
        top.extend(fs.letter.one_hot());
        Ok(StyleVector(self.projection.forward(&self.store, &top)?))
    }

    pub fn decoder_forward(
        &self,
        style: &StyleVector,
        fs: &FrameSequence,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<DecoderLogits> {
        self.decoder.forward(&self.store, &style.0, fs, rng)
    }

    fn style_graph<'a>(&self, g: &mut Graph<'a>, fs: &FrameSequence, mut rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        if fs.is_empty() {
            return Err(Error::Empty("empty frame sequence".into()));
        }
        let mut state: Vec<Var> = self
            .encoder
            .layers
            .iter()
            .map(|l| g.constant(vec![0.0; l.hidden_size]))
            .collect();
        let p = self.config.encoder_dropout;
        let mut top = state[0];
        for &f in &fs.frames {
            let x = g.constant(one_hot(f, self.config.n_levels));
            top = self.encoder.step_graph(g, x, &mut state, |g, h| match rng.as_deref_mut() {
                Some(r) if p > 0.0 => {
                    let m = dropout_mask(g.shape(h).0, p, r)?;
                    g.mask(h, m)
                }
                _ => Ok(h),
            })?;
        }
        let letter = g.constant(fs.letter.one_hot());
        let joined = g.concat(&[top, letter]);
        self.projection.forward_graph(g, joined)
    }
}

impl SequenceModel for StyleAutoencoder {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    fn bias_frame(&self, _writer_id: &str, fs: &FrameSequence) -> Result<Vec<f64>> {
        Ok(self.encode_style(fs)?.0)
    }

    fn loss_graph<'a>(
        &self,
        g: &mut Graph<'a>,
        _writer_id: &str,
        fs: &FrameSequence,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let style = self.style_graph(g, fs, rng.as_deref_mut())?;
        self.decoder.loss_graph(g, style, fs, rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    /// Known writers, sorted; row `i` of the writer table belongs to `writers[i]`.
    pub writers: Vec<String>,
    pub writer_embedding: ParamId,
    pub letter_embedding: ParamId,
    pub projection: Dense,
    pub decoder: Decoder,
}

/// Baseline output plus whether the writer had to fall back to the mean
/// embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOutput {
    pub logits: DecoderLogits,
    pub used_mean_writer: bool,
}

impl BaselineModel {
    pub fn new(config: ModelConfig, writers: impl IntoIterator<Item = String>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut writers: Vec<String> = writers.into_iter().collect();
        writers.sort();
        writers.dedup();
        if writers.is_empty() {
            return Err(Error::Empty("baseline needs at least one writer".into()));
        }
        let mut rng = init_rng(seed);
        let mut store = ParamStore::new();
        let writer_embedding = store.add_uniform("baseline.writer_embedding", writers.len(), WRITER_EMBED_DIM, &mut rng);
        let letter_embedding = store.add_uniform("baseline.letter_embedding", Letter::COUNT, LETTER_EMBED_DIM, &mut rng);
        let projection = Dense::new(
            &mut store,
            "baseline.projection",
            WRITER_EMBED_DIM + LETTER_EMBED_DIM,
            config.bias_dim,
            true,
            &mut rng,
        );
        let decoder = Decoder::new(&mut store, &config, &mut rng);
        Ok(BaselineModel {
            config,
            store,
            writers,
            writer_embedding,
            letter_embedding,
            projection,
            decoder,
        })
    }

    pub fn writer_index(&self, writer_id: &str) -> Option<usize> {
        self.writers.binary_search_by(|w| w.as_str().cmp(writer_id)).ok()
    }

    fn writer_vector(&self, writer_id: &str) -> (Vec<f64>, bool) {
        let table = self.store.get(self.writer_embedding);
        match self.writer_index(writer_id) {
            Some(i) => (table.row(i).to_vec(), false),
            None => {
                let mut mean = vec![0.0; table.cols];
                for r in 0..table.rows {
                    mean.iter_mut().zip(table.row(r)).for_each(|(a, b)| *a += b);
                }
                mean.iter_mut().for_each(|a| *a /= table.rows as f64);
                (mean, true)
            }
        }
    }

    /// Bias frame for `(writer, letter)` and the fallback flag.
    pub fn bias_for(&self, writer_id: &str, letter: Letter) -> Result<(Vec<f64>, bool)> {
        let (mut x, fallback) = self.writer_vector(writer_id);
        x.extend_from_slice(self.store.get(self.letter_embedding).row(letter.index()));
        Ok((self.projection.forward(&self.store, &x)?, fallback))
    }

    pub fn baseline_forward(
        &self,
        writer_id: &str,
        letter: Letter,
        fs: &FrameSequence,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<BaselineOutput> {
        let (bias, used_mean_writer) = self.bias_for(writer_id, letter)?;
        Ok(BaselineOutput {
            logits: self.decoder.forward(&self.store, &bias, fs, rng)?,
            used_mean_writer,
        })
    }
}

impl SequenceModel for BaselineModel {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    fn bias_frame(&self, writer_id: &str, fs: &FrameSequence) -> Result<Vec<f64>> {
        Ok(self.bias_for(writer_id, fs.letter)?.0)
    }

    fn loss_graph<'a>(
        &self,
        g: &mut Graph<'a>,
        writer_id: &str,
        fs: &FrameSequence,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let writer = match self.writer_index(writer_id) {
            Some(i) => g.row(self.writer_embedding, i)?,
            None => g.mean_rows(self.writer_embedding)?,
        };
        let letter = g.row(self.letter_embedding, fs.letter.index())?;
        let joined = g.concat(&[writer, letter]);
        let bias = self.projection.forward_graph(g, joined)?;
        self.decoder.loss_graph(g, bias, fs, rng)
    }
}

/// Either trained model, as stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Autoencoder(StyleAutoencoder),
    Baseline(BaselineModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Autoencoder(_) => "autoencoder",
            Model::Baseline(_) => "baseline",
        }
    }

    pub fn as_autoencoder(&self) -> Option<&StyleAutoencoder> {
        match self {
            Model::Autoencoder(m) => Some(m),
            Model::Baseline(_) => None,
        }
    }

    pub fn as_baseline(&self) -> Option<&BaselineModel> {
        match self {
            Model::Baseline(m) => Some(m),
            Model::Autoencoder(_) => None,
        }
    }

    fn inner(&self) -> &dyn SequenceModelDyn {
        match self {
            Model::Autoencoder(m) => m,
            Model::Baseline(m) => m,
        }
    }
}

// Object-safe slice of `SequenceModel` for dispatching through `Model`.
trait SequenceModelDyn {
    fn config_dyn(&self) -> &ModelConfig;
    fn store_dyn(&self) -> &ParamStore;
    fn decoder_dyn(&self) -> &Decoder;
    fn bias_frame_dyn(&self, writer_id: &str, fs: &FrameSequence) -> Result<Vec<f64>>;
}

impl<M: SequenceModel> SequenceModelDyn for M {
    fn config_dyn(&self) -> &ModelConfig {
        self.config()
    }
    fn store_dyn(&self) -> &ParamStore {
        self.store()
    }
    fn decoder_dyn(&self) -> &Decoder {
        self.decoder()
    }
    fn bias_frame_dyn(&self, writer_id: &str, fs: &FrameSequence) -> Result<Vec<f64>> {
        self.bias_frame(writer_id, fs)
    }
}

impl SequenceModel for Model {
    fn config(&self) -> &ModelConfig {
        self.inner().config_dyn()
    }

    fn store(&self) -> &ParamStore {
        self.inner().store_dyn()
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            Model::Autoencoder(m) => &mut m.store,
            Model::Baseline(m) => &mut m.store,
        }
    }

    fn decoder(&self) -> &Decoder {
        self.inner().decoder_dyn()
    }

    fn bias_frame(&self, writer_id: &str, fs: &FrameSequence) -> Result<Vec<f64>> {
        self.inner().bias_frame_dyn(writer_id, fs)
    }

    fn loss_graph<'a>(
        &self,
        g: &mut Graph<'a>,
        writer_id: &str,
        fs: &FrameSequence,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        match self {
            Model::Autoencoder(m) => m.loss_graph(g, writer_id, fs, rng),
            Model::Baseline(m) => m.loss_graph(g, writer_id, fs, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Frame;
    use crate::neural::softmax;

    fn tiny() -> ModelConfig {
        ModelConfig {
            hidden: 8,
            bias_dim: 4,
            ..ModelConfig::default()
        }
    }

    fn seq(letter: char, t: usize) -> FrameSequence {
        let frames = (0..t).map(|i| Frame::new((i * 3 % 16) as u8, (i * 5 % 16) as u8)).collect();
        FrameSequence::new(Letter::from_char(letter).unwrap(), frames, 16).unwrap()
    }

    #[test]
    fn style_is_deterministic_and_letter_dependent() {
        let m = StyleAutoencoder::new(tiny(), 1).unwrap();
        let a = seq('X', 6);
        assert_eq!(m.encode_style(&a).unwrap(), m.encode_style(&a).unwrap());
        let mut b = a.clone();
        b.letter = Letter::from_char('O').unwrap();
        assert_ne!(m.encode_style(&a).unwrap(), m.encode_style(&b).unwrap());
    }

    #[test]
    fn zero_parameters_give_projection_bias() {
        let mut m = StyleAutoencoder::new(tiny(), 1).unwrap();
        let ids: Vec<_> = m.store.ids().collect();
        for id in ids {
            m.store.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let b = m.projection.bias.unwrap();
        m.store.get_mut(b).data = vec![0.1, -0.2, 0.3, 0.4];
        assert_eq!(m.encode_style(&seq('X', 5)).unwrap().0, vec![0.1, -0.2, 0.3, 0.4]);
    }

    #[test]
    fn logits_shapes() {
        let m = StyleAutoencoder::new(tiny(), 2).unwrap();
        for t in [1, 2, 37, 99] {
            let fs = seq('A', t);
            let style = m.encode_style(&fs).unwrap();
            let out = m.decoder_forward(&style, &fs, None).unwrap();
            assert_eq!((out.dir.rows, out.dir.cols), (t, 17));
            assert_eq!((out.speed.rows, out.speed.cols), (t, 16));
            assert_eq!(out.stop.as_ref().unwrap().len(), 17);
            let p = softmax(out.speed.row(0), 1.0);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_mode_is_deterministic_training_mode_is_not() {
        let m = StyleAutoencoder::new(tiny(), 3).unwrap();
        let fs = seq('S', 10);
        let style = m.encode_style(&fs).unwrap();
        let a = m.decoder_forward(&style, &fs, None).unwrap();
        assert_eq!(a, m.decoder_forward(&style, &fs, None).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = m.decoder_forward(&style, &fs, Some(&mut rng)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn graph_loss_matches_plain_loss() {
        let m = StyleAutoencoder::new(tiny(), 4).unwrap();
        let fs = seq('H', 7);
        let plain = m.sequence_loss("w", &fs).unwrap().total;
        let mut g = Graph::new(&m.store);
        let l = m.loss_graph(&mut g, "w", &fs, None).unwrap();
        assert!((g.scalar(l) - plain).abs() < 1e-12);

        let b = BaselineModel::new(tiny(), ["w1".to_string(), "w2".to_string()], 4).unwrap();
        for writer in ["w2", "stranger"] {
            let plain = b.sequence_loss(writer, &fs).unwrap().total;
            let mut g = Graph::new(&b.store);
            let l = b.loss_graph(&mut g, writer, &fs, None).unwrap();
            assert!((g.scalar(l) - plain).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_heads_give_log_class_counts() {
        let m = StyleAutoencoder::new(tiny(), 5).unwrap();
        let mut store = m.store.clone();
        m.decoder.zero_heads(&mut store);
        let m = StyleAutoencoder { store, ..m };
        let loss = m.sequence_loss("w", &seq('X', 20)).unwrap();
        assert!((loss.speed - 16f64.ln()).abs() < 1e-12);
        assert!((loss.dir - 17f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn baseline_fallback_is_flagged() {
        let b = BaselineModel::new(tiny(), ["w1".to_string()], 0).unwrap();
        let fs = seq('X', 4);
        let known = b.baseline_forward("w1", fs.letter, &fs, None).unwrap();
        assert!(!known.used_mean_writer);
        assert_eq!(known.logits.dir.rows, 4);
        let unknown = b.baseline_forward("w9", fs.letter, &fs, None).unwrap();
        assert!(unknown.used_mean_writer);
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.bias_dim = 8;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.decoder_dropout = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sequence_loss_length_mismatch() {
        let m = StyleAutoencoder::new(tiny(), 6).unwrap();
        let fs = seq('X', 5);
        let style = m.encode_style(&fs).unwrap();
        let logits = m.decoder_forward(&style, &fs, None).unwrap();
        assert!(sequence_loss(&logits, &seq('X', 6)).is_err());
    }
}
