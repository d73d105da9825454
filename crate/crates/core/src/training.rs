//! Mini-batch Adam training with early stopping, and finite-difference
//! gradient checking.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{DatasetSplit, Gender, LabeledWord};
use crate::encoding::EncodedWord;
use crate::error::{Error, Result};
use crate::models::{ForwardTrace, GenderModel, Gradients};
use crate::nn::{bce_loss, Param, Tensor2};
use crate::rng::{derive_seed, SplitMix64};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Epochs without a new validation-loss minimum before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            patience: 50,
            max_epochs: 2000,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad("epsilon must be non-negative");
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch size, patience and max epochs must be at least 1");
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor2<T>>,
    pub v: Vec<Tensor2<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Param<T>>) -> Self {
        let m: Vec<Tensor2<T>> = params
            .into_iter()
            .map(|p| Tensor2::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self { v: m.clone(), m, t: 0 }
    }

    pub fn for_model(model: &GenderModel<T>) -> Self {
        Self::new(model.params())
    }
}

/// One Adam update of every parameter from its accumulated gradient, which is
/// then cleared. Nothing is modified if any gradient is non-finite.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Param<T>],
    names: &[&str],
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters, optimizer tracks {}",
            params.len(),
            state.m.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.grad.shape() != state.m[i].shape() {
            return Err(Error::ShapeMismatch(format!("optimizer state for tensor {i}")));
        }
        if !p.grad.is_finite() {
            let name = names.get(i).map_or_else(|| format!("#{i}"), |n| (*n).to_owned());
            return Err(Error::NonFiniteGradient(name));
        }
    }
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_m_b1, one_m_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let bc1 = T::lit(1.0 - cfg.beta1.powi(t));
    let bc2 = T::lit(1.0 - cfg.beta2.powi(t));
    let lr = T::lit(cfg.learning_rate);
    let eps = T::lit(cfg.epsilon);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let theta = p.value.as_mut_slice();
        let grad = p.grad.as_slice();
        for (k, &g) in grad.iter().enumerate() {
            let mk = &mut m.as_mut_slice()[k];
            *mk = b1 * *mk + one_m_b1 * g;
            let vk = &mut v.as_mut_slice()[k];
            *vk = b2 * *vk + one_m_b2 * g * g;
            let m_hat = *mk / bc1;
            let v_hat = *vk / bc2;
            theta[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.zero_grad();
    }
    Ok(())
}

/// Adam step over every parameter of `model`.
pub fn adam_step_model<T: Scalar>(model: &mut GenderModel<T>, state: &mut AdamState<T>, cfg: &TrainConfig) -> Result<()> {
    let names = model.param_names();
    let mut params = model.params_mut();
    adam_step(&mut params, names, state, cfg)
}

/// Shuffle seed of one epoch: `derive_seed(seed, epoch)`.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    derive_seed(seed, epoch as u64)
}

/// Shuffled index batches over `0..n`; the last batch may be short.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn make_batches<X: Clone>(data: &[X], batch_size: usize, seed: u64) -> Vec<Vec<X>> {
    batch_indices(data.len(), batch_size, seed)
        .into_iter()
        .map(|b| b.into_iter().map(|i| data[i].clone()).collect())
        .collect()
}

/// An encoded word with its numeric label (1 = utrum).
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub word: EncodedWord,
    pub label: T,
}

pub fn encode_examples<T: Scalar>(model: &GenderModel<T>, words: &[LabeledWord]) -> Result<Vec<Example<T>>> {
    words
        .iter()
        .map(|w| {
            Ok(Example {
                word: model.encode(&w.surface)?,
                label: if w.gender == Gender::Utrum { T::one() } else { T::zero() },
            })
        })
        .collect()
}

/// Mean loss and accuracy (threshold 0.5, ties to utrum) over `examples`.
pub fn loss_and_accuracy<T: Scalar>(model: &GenderModel<T>, examples: &[Example<T>]) -> Result<(T, T)> {
    if examples.is_empty() {
        return Err(Error::Empty("no examples to score"));
    }
    let scored = examples
        .par_iter()
        .map(|ex| {
            let p = model.forward(&ex.word)?.probability();
            let predicted = if p >= T::lit(0.5) { T::one() } else { T::zero() };
            Ok((bce_loss(p, ex.label), predicted == ex.label))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = T::lit(examples.len() as f64);
    let loss = scored.iter().map(|s| s.0).fold(T::zero(), |a, b| a + b) / n;
    let correct = scored.iter().filter(|s| s.1).count();
    Ok((loss, T::lit(correct as f64) / n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation loss (first on ties); 0
    /// before any epoch has run.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.checked_sub(1).and_then(|i| self.epochs.get(i))
    }

    /// `epoch<TAB>train_loss<TAB>val_loss<TAB>val_acc` per line, floats with
    /// 17 significant digits.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            writeln!(out, "{}\t{:.16e}\t{:.16e}\t{:.16e}", r.epoch, r.train_loss, r.val_loss, r.val_accuracy)
                .expect("write to String");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut history = TrainHistory::default();
        for (n, line) in text.lines().enumerate() {
            let err = |m: &str| Error::Parse { path: None, line: n + 1, message: m.to_owned() };
            let f: Vec<&str> = line.split('\t').collect();
            let [epoch, tl, vl, va] = f.as_slice() else { return Err(err("expected four fields")) };
            let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
            history.epochs.push(EpochRecord {
                epoch: epoch.parse().map_err(|_| err("bad epoch"))?,
                train_loss: num(tl)?,
                val_loss: num(vl)?,
                val_accuracy: num(va)?,
            });
        }
        let best = history
            .epochs
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (i, r)| match best {
                Some((_, v)) if r.val_loss >= v => best,
                _ => Some((i, r.val_loss)),
            });
        history.best_epoch = best.map_or(0, |(i, _)| history.epochs[i].epoch);
        Ok(history)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

/// Owns a model, its optimizer state and the encoded training set, and runs
/// one epoch at a time.
pub struct Trainer<T> {
    model: GenderModel<T>,
    adam: AdamState<T>,
    cfg: TrainConfig,
    train: Vec<Example<T>>,
    buffers: Vec<Gradients<T>>,
    epoch: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: GenderModel<T>, train: &[LabeledWord], cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::Empty("training set is empty"));
        }
        let train = encode_examples(&model, train)?;
        let buffers = (0..cfg.batch_size.min(train.len())).map(|_| model.zero_gradients()).collect();
        let adam = AdamState::for_model(&model);
        Ok(Self { model, adam, cfg, train, buffers, epoch: 0 })
    }

    pub fn model(&self) -> &GenderModel<T> {
        &self.model
    }

    pub fn into_model(self) -> GenderModel<T> {
        self.model
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    pub fn examples(&self) -> &[Example<T>] {
        &self.train
    }

    /// Shuffles, then takes one Adam step per batch on the mean gradient.
    /// Returns the mean training loss seen during the epoch.
    pub fn run_epoch(&mut self) -> Result<T> {
        self.epoch += 1;
        let batches = batch_indices(self.train.len(), self.cfg.batch_size, epoch_seed(self.cfg.seed, self.epoch));
        let mut total = T::zero();
        for batch in &batches {
            total += self.step(batch)?;
        }
        Ok(total / T::lit(self.train.len() as f64))
    }

    /// Per-example gradients may be computed concurrently; they are reduced
    /// into the parameters strictly in batch order.
    fn step(&mut self, batch: &[usize]) -> Result<T> {
        let model = &self.model;
        let train = &self.train;
        let losses = self.buffers[..batch.len()]
            .par_iter_mut()
            .zip(batch.par_iter())
            .map(|(buf, &i)| {
                buf.fill_zero();
                let ex = &train[i];
                let trace = model.forward(&ex.word)?;
                model.backward_into(&trace, ex.label, buf)?;
                Ok(bce_loss(trace.probability(), ex.label))
            })
            .collect::<Result<Vec<T>>>()?;
        let scale = T::one() / T::lit(batch.len() as f64);
        for buf in &self.buffers[..batch.len()] {
            self.model.accumulate(buf, scale);
        }
        adam_step_model(&mut self.model, &mut self.adam, &self.cfg)?;
        Ok(losses.into_iter().fold(T::zero(), |a, b| a + b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// New minimum of the validation loss.
    Improved,
    Wait,
    /// `patience` epochs in a row without a new minimum.
    Stop,
}

/// Tracks the validation-loss minimum. Only a strict decrease counts as
/// improvement, and each one restarts the patience count.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, since_best: 0 }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, val_loss: f64) -> Verdict {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_best = 0;
            Verdict::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Wait
            }
        }
    }
}

pub fn train<T: Scalar>(
    model: GenderModel<T>,
    split: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<(GenderModel<T>, TrainHistory)> {
    train_with(model, split, cfg, |_, _| Ok(()))
}

/// Trains until validation loss has not reached a new minimum for
/// `patience` epochs (or `max_epochs`), then returns the parameters of the
/// best epoch. `observer` sees every epoch record, plus the model whenever
/// that epoch set a new minimum.
pub fn train_with<T, F>(
    model: GenderModel<T>,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<(GenderModel<T>, TrainHistory)>
where
    T: Scalar,
    F: FnMut(&EpochRecord, Option<&GenderModel<T>>) -> Result<()>,
{
    if split.validation.is_empty() || split.test.is_empty() {
        return Err(Error::Empty("every part of the split must be non-empty"));
    }
    let validation = encode_examples(&model, &split.validation)?;
    let mut best_model = model.clone();
    let mut trainer = Trainer::new(model, &split.train, cfg.clone())?;
    let mut history = TrainHistory::default();
    let mut stopping = EarlyStopping::new(cfg.patience);

    for epoch in 1..=cfg.max_epochs {
        let train_loss = trainer.run_epoch()?.widen();
        let (val_loss, val_acc) = loss_and_accuracy(trainer.model(), &validation)?;
        let record = EpochRecord { epoch, train_loss, val_loss: val_loss.widen(), val_accuracy: val_acc.widen() };
        history.epochs.push(record);
        if !record.train_loss.is_finite() || !record.val_loss.is_finite() {
            return Err(Error::Diverged { epoch, history: Box::new(history) });
        }
        match stopping.observe(record.val_loss) {
            Verdict::Improved => {
                history.best_epoch = epoch;
                best_model = trainer.model().clone();
                observer(&record, Some(&best_model))?;
            }
            Verdict::Wait => observer(&record, None)?,
            Verdict::Stop => {
                observer(&record, None)?;
                break;
            }
        }
    }
    best_model.zero_grads();
    Ok((best_model, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_tensor: &'static str,
    pub worst_index: usize,
    pub checked: usize,
}

/// Which parameter scalars a gradient check perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradCheckScope {
    All,
    /// Seeded uniform sample (with replacement) of this many scalars.
    Sample { count: usize, seed: u64 },
}

impl GradCheckScope {
    /// Every scalar for small models, 1000 sampled scalars otherwise.
    pub fn auto(parameter_count: usize, seed: u64) -> Self {
        if parameter_count <= 20_000 {
            GradCheckScope::All
        } else {
            GradCheckScope::Sample { count: 1000, seed }
        }
    }
}

/// Differences within this absolute tolerance count as agreement; it sits
/// above the rounding noise of a central difference at `h = 1e-5`.
pub const GRADCHECK_ABS_TOL: f64 = 1e-10;

/// Compares the analytic gradient of the loss on one example against central
/// differences `(L(θ+h) - L(θ-h)) / 2h`, returning the largest relative error
/// `|a - n| / max(|a|, |n|)` (zero where `|a - n| <= 1e-10`).
pub fn gradient_check<T: Scalar>(
    model: &GenderModel<T>,
    word: &EncodedWord,
    label: T,
    h: f64,
    scope: GradCheckScope,
) -> Result<GradCheckReport> {
    gradient_check_with(model, word, label, h, scope, |m, tr, g| m.backward_into(tr, label, g))
}

pub(crate) fn gradient_check_with<T, F>(
    model: &GenderModel<T>,
    word: &EncodedWord,
    label: T,
    h: f64,
    scope: GradCheckScope,
    analytic: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&GenderModel<T>, &ForwardTrace<T>, &mut Gradients<T>) -> Result<()>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidInput("finite-difference step must be positive".into()));
    }
    let trace = model.forward(word)?;
    let mut grads = model.zero_gradients();
    analytic(model, &trace, &mut grads)?;

    let sizes: Vec<usize> = grads.tensors.iter().map(Tensor2::len).collect();
    let total: usize = sizes.iter().sum();
    let targets: Vec<(usize, usize)> = match scope {
        GradCheckScope::All => sizes.iter().enumerate().flat_map(|(t, &n)| (0..n).map(move |k| (t, k))).collect(),
        GradCheckScope::Sample { count, seed } => {
            let mut rng = SplitMix64::new(seed);
            (0..count)
                .map(|_| {
                    let mut flat = rng.below_usize(total);
                    let mut t = 0;
                    while flat >= sizes[t] {
                        flat -= sizes[t];
                        t += 1;
                    }
                    (t, flat)
                })
                .collect()
        }
    };

    let names = model.param_names();
    let mut probe = model.clone();
    let step = T::lit(h);
    let loss_at = |m: &GenderModel<T>| -> Result<f64> { Ok(bce_loss(m.forward(word)?.probability(), label).widen()) };
    let mut report = GradCheckReport { max_relative_error: 0.0, worst_tensor: names[0], worst_index: 0, checked: 0 };
    for (t, k) in targets {
        let original = probe.params()[t].value.as_slice()[k];
        probe.params_mut()[t].value.as_mut_slice()[k] = original + step;
        let plus = loss_at(&probe)?;
        probe.params_mut()[t].value.as_mut_slice()[k] = original - step;
        let minus = loss_at(&probe)?;
        probe.params_mut()[t].value.as_mut_slice()[k] = original;

        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grads.tensors[t].as_slice()[k].widen();
        let diff = (analytic - numeric).abs();
        let err = if diff <= GRADCHECK_ABS_TOL { 0.0 } else { diff / analytic.abs().max(numeric.abs()) };
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_tensor = names[t];
            report.worst_index = k;
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
