//! Teacher-forced training with Adam and patience-based early stopping.
//!
//! Per-sequence loss is the mean NLL over time steps for each feature,
//! averaged across the two features; a batch loss is the mean over its
//! sequences. Batches are processed data-parallel, but per-sequence
//! gradients are summed in a fixed order and every dropout mask comes from
//! an RNG stream derived from `(seed, epoch, example index)`, so a run is
//! bit-reproducible regardless of thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, RngState};
use crate::codec::{encode, FrameSequence, QuantizerConfig};
use crate::error::{Error, Result};
use crate::mix_seed;
use crate::model::{BaselineModel, Model, ModelConfig, SequenceModel, StyleAutoencoder};
use crate::neural::{AdamConfig, AdamState, Gradients, Graph};
use crate::trace_io::{Corpus, Split, Trace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub hidden: usize,
    pub bias_dim: usize,
    pub encoder_dropout: f64,
    pub decoder_dropout: f64,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub n_levels: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            encoder_layers: 2,
            decoder_layers: 2,
            hidden: 128,
            bias_dim: 32,
            encoder_dropout: 0.0,
            decoder_dropout: 0.2,
            early_stop_patience: 20,
            batch_size: 32,
            max_epochs: 500,
            n_levels: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            n_levels: self.n_levels,
            hidden: self.hidden,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            bias_dim: self.bias_dim,
            encoder_dropout: self.encoder_dropout,
            decoder_dropout: self.decoder_dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, max_epochs and early_stop_patience must be positive".into(),
            ));
        }
        self.model_config().validate()
    }
}

/// One training example: the writer (used by the baseline only) and the
/// quantized letter.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub writer_id: String,
    pub fs: FrameSequence,
}

/// Encodes traces, skipping any that cannot be quantized (fewer than three
/// distinct points or too many frames). Returns the examples and the number
/// skipped.
pub fn encode_examples<'a>(
    traces: impl IntoIterator<Item = &'a Trace>,
    quantizer: &QuantizerConfig,
) -> (Vec<Example>, usize) {
    let mut skipped = 0;
    let examples = traces
        .into_iter()
        .filter_map(|t| match encode(t, quantizer) {
            Ok(fs) => Some(Example {
                writer_id: t.writer_id.clone(),
                fs,
            }),
            Err(_) => {
                skipped += 1;
                None
            }
        })
        .collect();
    (examples, skipped)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Patience bookkeeping. An epoch improves when its metric is strictly
/// below the best seen so far.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records `metric` for `epoch` and returns whether it improved.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        if metric < self.best {
            self.best = metric;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
}

/// Where an epoch loop ended.
#[derive(Clone, Debug, PartialEq)]
pub struct StopInfo {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub stopped_early: bool,
}

/// Runs `epoch(state, n)` for `n = 1, 2, ...` until `max_epochs` or until
/// the returned validation metric has not improved for `patience` epochs.
/// `on_improve` fires after every improving epoch.
pub fn run_epochs<S>(
    state: &mut S,
    max_epochs: usize,
    patience: usize,
    mut epoch: impl FnMut(&mut S, usize) -> Result<f64>,
    mut on_improve: impl FnMut(&mut S, usize),
) -> Result<StopInfo> {
    let mut stopper = EarlyStopping::new(patience);
    for n in 1..=max_epochs {
        let metric = epoch(state, n)?;
        if !metric.is_finite() {
            return Err(Error::NonFinite(format!("validation loss {metric} at epoch {n}")));
        }
        if stopper.observe(n, metric) {
            on_improve(state, n);
        }
        if stopper.should_stop() {
            return Ok(StopInfo {
                epochs_run: n,
                best_epoch: stopper.best_epoch,
                best_metric: stopper.best,
                stopped_early: true,
            });
        }
    }
    Ok(StopInfo {
        epochs_run: max_epochs,
        best_epoch: stopper.best_epoch,
        best_metric: stopper.best,
        stopped_early: false,
    })
}

/// Mean eval-mode loss over `examples`.
pub fn mean_loss<M: SequenceModel>(model: &M, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("no examples to evaluate".into()));
    }
    let losses: Vec<f64> = examples
        .par_iter()
        .map(|e| model.sequence_loss(&e.writer_id, &e.fs).map(|l| l.total))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Loss and gradient of one batch (mean over its sequences). `rng_base`
/// seeds per-example dropout streams; `None` trains without dropout.
pub fn batch_gradients<M: SequenceModel>(
    model: &M,
    batch: &[&Example],
    rng_base: Option<u64>,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let per_seq: Vec<(f64, Gradients)> = batch
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let mut rng = rng_base.map(|s| ChaCha8Rng::seed_from_u64(mix_seed(s, i as u64)));
            let mut g = Graph::new(model.store());
            let loss = model.loss_graph(&mut g, &e.writer_id, &e.fs, rng.as_mut())?;
            Ok((g.scalar(loss), g.backward(loss)?))
        })
        .collect::<Result<_>>()?;
    let mut total = Gradients::zeros_like(model.store());
    let mut loss = 0.0;
    for (l, g) in &per_seq {
        loss += l;
        total.add_assign(g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss * inv, total))
}

/// Result of [`fit`]: the best-validation model and the loss curve.
#[derive(Clone, Debug)]
pub struct FitResult<M> {
    pub best: M,
    pub history: Vec<EpochLog>,
    pub stop: StopInfo,
}

struct FitState<M> {
    model: M,
    best: M,
    adam: AdamState,
    order: Vec<usize>,
    history: Vec<EpochLog>,
}

/// Trains `model` and returns a copy of the parameters from the epoch with
/// the lowest validation loss.
pub fn fit<M: SequenceModel + Clone + Send>(
    model: M,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitResult<M>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation split is empty".into()));
    }
    let adam = AdamState::new(
        model.store(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut state = FitState {
        best: model.clone(),
        model,
        adam,
        order: (0..train.len()).collect(),
        history: Vec::new(),
    };

    let stop = run_epochs(
        &mut state,
        cfg.max_epochs,
        cfg.early_stop_patience,
        |st, epoch| {
            let epoch_seed = mix_seed(cfg.seed, epoch as u64);
            let mut shuffle_rng = ChaCha8Rng::seed_from_u64(epoch_seed);
            st.order.shuffle(&mut shuffle_rng);
            let mut loss_sum = 0.0;
            for (b, chunk) in st.order.chunks(cfg.batch_size).enumerate() {
                let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
                let (loss, grads) = batch_gradients(&st.model, &batch, Some(mix_seed(epoch_seed, b as u64 + 1)))?;
                if !loss.is_finite() || !grads.is_finite() {
                    return Err(Error::NonFinite(format!("training loss {loss} at epoch {epoch}, batch {b}")));
                }
                st.adam.step(st.model.store_mut(), &grads)?;
                loss_sum += loss * batch.len() as f64;
            }
            let log = EpochLog {
                epoch,
                train_loss: loss_sum / train.len() as f64,
                val_loss: mean_loss(&st.model, val)?,
            };
            on_epoch(&log);
            let v = log.val_loss;
            st.history.push(log);
            Ok(v)
        },
        |st, _| st.best = st.model.clone(),
    )?;
    Ok(FitResult {
        best: state.best,
        history: state.history,
        stop,
    })
}

fn splits(corpus: &Corpus) -> Result<(Vec<&Trace>, Vec<&Trace>)> {
    let train: Vec<&Trace> = corpus.split(Split::Train).collect();
    let val: Vec<&Trace> = corpus.split(Split::Val).collect();
    if train.is_empty() {
        return Err(Error::Empty("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation split is empty".into()));
    }
    Ok((train, val))
}

fn prepare(corpus: &Corpus, cfg: &TrainConfig) -> Result<(QuantizerConfig, Vec<Example>, Vec<Example>)> {
    cfg.validate()?;
    let (train, val) = splits(corpus)?;
    let quantizer = QuantizerConfig::calibrate(train.iter().copied(), cfg.n_levels)?;
    let (train_ex, _) = encode_examples(train, &quantizer);
    let (val_ex, _) = encode_examples(val, &quantizer);
    if train_ex.is_empty() || val_ex.is_empty() {
        return Err(Error::Empty("no encodable traces in train or validation split".into()));
    }
    Ok((quantizer, train_ex, val_ex))
}

fn into_checkpoint(model: Model, quantizer: QuantizerConfig, cfg: &TrainConfig, history: Vec<EpochLog>, stop: StopInfo) -> Checkpoint {
    Checkpoint {
        model,
        quantizer,
        train_config: cfg.clone(),
        epoch: stop.best_epoch,
        epochs_run: stop.epochs_run,
        best_val_loss: stop.best_metric,
        rng: RngState {
            seed: cfg.seed,
            epoch: stop.epochs_run as u64,
        },
        history,
    }
}

/// Trains the style autoencoder on the corpus' train split, early-stopping
/// on the validation split. The speed ceiling is calibrated on train.
pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<Checkpoint> {
    train_with(corpus, cfg, |_| {})
}

pub fn train_with(corpus: &Corpus, cfg: &TrainConfig, on_epoch: impl FnMut(&EpochLog)) -> Result<Checkpoint> {
    let (quantizer, train_ex, val_ex) = prepare(corpus, cfg)?;
    let model = StyleAutoencoder::new(cfg.model_config(), cfg.seed)?;
    let fit = fit(model, &train_ex, &val_ex, cfg, on_epoch)?;
    Ok(into_checkpoint(Model::Autoencoder(fit.best), quantizer, cfg, fit.history, fit.stop))
}

/// Trains the "letter + writer bias" baseline. Its writer table covers the
/// training writers; validation writers go through the mean embedding.
pub fn train_baseline(corpus: &Corpus, cfg: &TrainConfig) -> Result<Checkpoint> {
    train_baseline_with(corpus, cfg, |_| {})
}

pub fn train_baseline_with(corpus: &Corpus, cfg: &TrainConfig, on_epoch: impl FnMut(&EpochLog)) -> Result<Checkpoint> {
    let (quantizer, train_ex, val_ex) = prepare(corpus, cfg)?;
    let writers = train_ex.iter().map(|e| e.writer_id.clone());
    let model = BaselineModel::new(cfg.model_config(), writers, cfg.seed)?;
    let fit = fit(model, &train_ex, &val_ex, cfg, on_epoch)?;
    Ok(into_checkpoint(Model::Baseline(fit.best), quantizer, cfg, fit.history, fit.stop))
}
