//! The three classifier architectures and their shared interface.
//!
//! Every model embeds the padded character sequence, transforms it, and ends
//! in one sigmoid unit giving the probability of utrum.

mod dense;
mod embedding;
pub mod io;
mod recurrent;

use std::fmt;
use std::str::FromStr;

pub use dense::{DenseNet, DenseTrace};
pub use embedding::Embedding;
pub use recurrent::{
    Cell, CellTrace, ConcatReadout, GateParams, GruCell, GruStep, LstmCell, LstmStep,
    RecurrentNet, RecurrentTrace,
};

use crate::encoding::{encode_word, EncodedWord, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{Param, Tensor2};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Dense,
    Gru,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Dense, ModelKind::Gru, ModelKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dense => "dense",
            ModelKind::Gru => "gru",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self != ModelKind::Dense
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            ModelKind::Dense => 0,
            ModelKind::Gru => 1,
            ModelKind::Lstm => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Dense => &dense::DENSE_PARAM_NAMES,
            ModelKind::Gru => &recurrent::GRU_PARAM_NAMES,
            ModelKind::Lstm => &recurrent::LSTM_PARAM_NAMES,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(ModelKind::Dense),
            "gru" => Ok(ModelKind::Gru),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::InvalidInput(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Sequence length, embedding width and hidden width (dense hidden layer
/// or recurrent state size).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub max_len: usize,
    pub d_emb: usize,
    pub hidden: usize,
}

impl ModelDims {
    pub const EMBEDDING_DIM: usize = 60;
    pub const DENSE_HIDDEN: usize = 128;
    pub const RECURRENT_HIDDEN: usize = 64;

    /// Reference dimensions: 60-wide embeddings, 128 dense units or 64
    /// recurrent units.
    pub fn reference(kind: ModelKind, max_len: usize) -> Self {
        let hidden = match kind {
            ModelKind::Dense => Self::DENSE_HIDDEN,
            _ => Self::RECURRENT_HIDDEN,
        };
        Self { max_len, d_emb: Self::EMBEDDING_DIM, hidden }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Network<T> {
    Dense(DenseNet<T>),
    Recurrent(RecurrentNet<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForwardTrace<T> {
    Dense(DenseTrace<T>),
    Recurrent(RecurrentTrace<T>),
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn probability(&self) -> T {
        match self {
            ForwardTrace::Dense(t) => t.probability,
            ForwardTrace::Recurrent(t) => t.probability,
        }
    }

    pub fn logit(&self) -> T {
        match self {
            ForwardTrace::Dense(t) => t.logit,
            ForwardTrace::Recurrent(t) => t.logit,
        }
    }

    pub fn word(&self) -> &EncodedWord {
        match self {
            ForwardTrace::Dense(t) => &t.word,
            ForwardTrace::Recurrent(t) => &t.word,
        }
    }
}

/// Gradient tensors laid out like [`GenderModel::params`]; used as a
/// per-example scratch buffer when a batch is differentiated in parallel.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor2<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn fill_zero(&mut self) {
        self.tensors.iter_mut().for_each(Tensor2::fill_zero);
    }
}

/// A trained or trainable classifier together with the vocabulary and
/// sequence length it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct GenderModel<T> {
    vocab: Vocabulary,
    dims: ModelDims,
    kind: ModelKind,
    net: Network<T>,
}

impl<T: Scalar> GenderModel<T> {
    /// Glorot-uniform weights, zero biases (LSTM forget gate bias 1).
    pub fn new(kind: ModelKind, vocab: Vocabulary, dims: ModelDims, seed: u64) -> Self {
        let rows = vocab.table_rows();
        let ModelDims { max_len, d_emb, hidden } = dims;
        let net = match kind {
            ModelKind::Dense => Network::Dense(DenseNet::new(rows, max_len, d_emb, hidden, seed)),
            ModelKind::Gru => Network::Recurrent(RecurrentNet::gru(rows, max_len, d_emb, hidden, seed)),
            ModelKind::Lstm => Network::Recurrent(RecurrentNet::lstm(rows, max_len, d_emb, hidden, seed)),
        };
        Self { vocab, dims, kind, net }
    }

    /// Same architecture with every parameter set to zero.
    pub fn zeroed(kind: ModelKind, vocab: Vocabulary, dims: ModelDims) -> Self {
        let mut m = Self::new(kind, vocab, dims, 0);
        for p in m.params_mut() {
            p.value.fill_zero();
        }
        m
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.dims.max_len
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<T> {
        &mut self.net
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        self.kind.param_names()
    }

    /// Parameters in canonical order (see [`ModelKind::param_names`]).
    pub fn params(&self) -> Vec<&Param<T>> {
        match &self.net {
            Network::Dense(n) => n.params(),
            Network::Recurrent(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match &mut self.net {
            Network::Dense(n) => n.params_mut(),
            Network::Recurrent(n) => n.params_mut(),
        }
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&'static str, &Param<T>)> {
        self.param_names().iter().copied().zip(self.params())
    }

    /// Total number of scalar parameters.
    pub fn count_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            tensors: self
                .params()
                .iter()
                .map(|p| Tensor2::zeros(p.value.rows(), p.value.cols()))
                .collect(),
        }
    }

    pub fn encode(&self, word: &str) -> Result<EncodedWord> {
        encode_word(word, &self.vocab, self.dims.max_len)
    }

    pub fn forward(&self, word: &EncodedWord) -> Result<ForwardTrace<T>> {
        if word.max_len() != self.dims.max_len {
            return Err(Error::ShapeMismatch(format!(
                "word encoded to length {}, model expects {}",
                word.max_len(),
                self.dims.max_len
            )));
        }
        Ok(match &self.net {
            Network::Dense(n) => ForwardTrace::Dense(n.forward(word)?),
            Network::Recurrent(n) => ForwardTrace::Recurrent(n.forward(word)?),
        })
    }

    /// Probability that `word` is utrum.
    pub fn predict(&self, word: &str) -> Result<T> {
        Ok(self.forward(&self.encode(word)?)?.probability())
    }

    fn check_trace(&self, trace: &ForwardTrace<T>) -> Result<()> {
        let ok = match (&self.net, trace) {
            (Network::Dense(n), ForwardTrace::Dense(t)) => {
                t.embedded.len() == self.dims.max_len * self.dims.d_emb
                    && t.hidden.len() == n.hidden_size()
            }
            (Network::Recurrent(n), ForwardTrace::Recurrent(t)) => {
                let steps_ok = match (&n.cell, &t.steps) {
                    (Cell::Lstm(_), CellTrace::Lstm(s)) => s.len() == self.dims.max_len,
                    (Cell::Gru(_), CellTrace::Gru(s)) => s.len() == self.dims.max_len,
                    _ => false,
                };
                steps_ok
                    && t.embedded.len() == self.dims.max_len * self.dims.d_emb
                    && t.hidden.len() == self.dims.max_len * n.hidden_size()
            }
            _ => false,
        };
        let rows = self.vocab.table_rows();
        if !ok || trace.word().indices().iter().any(|&i| i >= rows) {
            return Err(Error::ShapeMismatch("trace does not belong to this model".into()));
        }
        Ok(())
    }

    fn backward_impl(&self, trace: &ForwardTrace<T>, label: T, grads: &mut Gradients<T>, flip_forget: bool) -> Result<()> {
        self.check_trace(trace)?;
        if grads.tensors.len() != self.params().len() {
            return Err(Error::ShapeMismatch("gradient buffer does not match model".into()));
        }
        match (&self.net, trace) {
            (Network::Dense(n), ForwardTrace::Dense(t)) => n.backward_into(t, label, &mut grads.tensors),
            (Network::Recurrent(n), ForwardTrace::Recurrent(t)) => {
                n.backward_into(t, label, &mut grads.tensors, flip_forget)
            }
            _ => unreachable!("checked above"),
        }
        Ok(())
    }

    /// Adds the binary cross-entropy gradient for one example into `grads`.
    /// `label` is 1 for utrum, 0 for neutrum.
    pub fn backward_into(&self, trace: &ForwardTrace<T>, label: T, grads: &mut Gradients<T>) -> Result<()> {
        self.backward_impl(trace, label, grads, false)
    }

    /// LSTM backward pass with the sign of the forget-gate gradient flipped.
    #[cfg(test)]
    pub(crate) fn backward_into_faulty(&self, trace: &ForwardTrace<T>, label: T, grads: &mut Gradients<T>) -> Result<()> {
        self.backward_impl(trace, label, grads, true)
    }

    /// Adds the gradient for one example into every `Param::grad`.
    pub fn backward(&mut self, trace: &ForwardTrace<T>, label: T) -> Result<()> {
        let mut grads = self.zero_gradients();
        self.backward_into(trace, label, &mut grads)?;
        self.accumulate(&grads, T::one());
        Ok(())
    }

    /// `Param::grad += scale * grads` for every parameter.
    pub fn accumulate(&mut self, grads: &Gradients<T>, scale: T) {
        for (p, g) in self.params_mut().into_iter().zip(&grads.tensors) {
            p.grad.add_scaled(g, scale);
        }
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> GenderModel<U> {
        let mut out = GenderModel::<U>::zeroed(self.kind, self.vocab.clone(), self.dims);
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            dst.value = src.value.cast();
        }
        out
    }
}

/// Closed-form parameter count for a vocabulary of `vocab_size` characters.
pub fn expected_parameter_count(kind: ModelKind, vocab_size: usize, dims: ModelDims) -> usize {
    let ModelDims { max_len, d_emb, hidden } = dims;
    let embedding = (vocab_size + 2) * d_emb;
    let gate = d_emb * hidden + hidden * hidden + hidden;
    let readout = max_len * hidden + 1;
    match kind {
        ModelKind::Dense => embedding + (max_len * d_emb * hidden + hidden) + (hidden + 1),
        ModelKind::Gru => embedding + 3 * gate + readout,
        ModelKind::Lstm => embedding + 4 * gate + readout,
    }
}

#[cfg(test)]
mod tests;
