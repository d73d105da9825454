//! Character-level classifiers for the grammatical gender of Swedish nouns.
//!
//! A word is encoded as a padded sequence of character indices, embedded, and
//! fed to a dense network, a GRU or an LSTM ending in one sigmoid unit that
//! gives the probability of utrum (common gender). Everything needed to train
//! and evaluate these models lives here: vocabulary and encoding, dataset
//! handling, forward and backward passes, Adam with early stopping, and
//! metrics.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which the gradient checks require.

pub mod dataset;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod training;

pub use dataset::{DatasetSplit, Gender, LabeledWord, SuffixRule, SuffixStat};
pub use encoding::{EncodedWord, Vocabulary};
pub use error::{Error, Result};
pub use evaluation::EvalReport;
pub use models::{ModelDims, ModelKind};
pub use scalar::Scalar;
pub use training::{TrainConfig, TrainHistory};

pub type Tensor = nn::Tensor2<f64>;
pub type Param = nn::Param<f64>;
pub type Model = models::GenderModel<f64>;
pub type Trace = models::ForwardTrace<f64>;
pub type Gradients = models::Gradients<f64>;
pub type AdamState = training::AdamState<f64>;
pub type Trainer = training::Trainer<f64>;

pub type Model32 = models::GenderModel<f32>;
