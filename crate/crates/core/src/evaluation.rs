//! Accuracy, per-class precision/recall/F1, confusion counts, prediction
//! samples and hidden-state export.
//!
//! Utrum is the positive class; a word is predicted utrum when its
//! probability is at least the threshold (ties go to utrum).

use std::fmt::{self, Write as _};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Gender, LabeledWord};
use crate::error::{Error, Result};
use crate::models::{ForwardTrace, GenderModel, Network};
use crate::rng::{derive_seed, SplitMix64};
use crate::scalar::Scalar;

/// Counts indexed actual x predicted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
}

impl Confusion {
    pub fn add(&mut self, actual: Gender, predicted: Gender) {
        match (actual, predicted) {
            (Gender::Neutrum, Gender::Neutrum) => self.tn += 1,
            (Gender::Neutrum, Gender::Utrum) => self.fp += 1,
            (Gender::Utrum, Gender::Neutrum) => self.fn_ += 1,
            (Gender::Utrum, Gender::Utrum) => self.tp += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of words actually in the class.
    pub support: usize,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

impl ClassMetrics {
    fn from_counts(hits: usize, predicted: usize, actual: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(hits, predicted);
        let recall = ratio(hits, actual);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1, support: actual, degenerate: predicted == 0 || actual == 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerClass {
    pub utrum: ClassMetrics,
    pub neutrum: ClassMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub per_class: PerClass,
    pub confusion: Confusion,
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion) -> Result<Self> {
        let n = confusion.total();
        if n == 0 {
            return Err(Error::Empty("cannot score an empty set"));
        }
        let Confusion { tn, fp, fn_, tp } = confusion;
        Ok(Self {
            n,
            accuracy: (tp + tn) as f64 / n as f64,
            per_class: PerClass {
                utrum: ClassMetrics::from_counts(tp, tp + fp, tp + fn_),
                neutrum: ClassMetrics::from_counts(tn, tn + fn_, tn + fp),
            },
            confusion,
        })
    }

    pub fn from_predictions(actual: &[Gender], predicted: &[Gender]) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels, {} predictions",
                actual.len(),
                predicted.len()
            )));
        }
        let mut c = Confusion::default();
        for (&a, &p) in actual.iter().zip(predicted) {
            c.add(a, p);
        }
        Self::from_confusion(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}   accuracy = {:.4}", self.n, self.accuracy)?;
        writeln!(f)?;
        writeln!(f, "{:<10}{:>10}{:>10}{:>10}{:>10}", "", "precision", "recall", "f1", "support")?;
        for (name, m) in [("neutrum", &self.per_class.neutrum), ("utrum", &self.per_class.utrum)] {
            writeln!(
                f,
                "{:<10}{:>10.4}{:>10.4}{:>10.4}{:>10}{}",
                name,
                m.precision,
                m.recall,
                m.f1,
                m.support,
                if m.degenerate { "  (undefined ratio reported as 0)" } else { "" }
            )?;
        }
        writeln!(f)?;
        writeln!(f, "{:<18}{:>10}{:>10}", "actual \\ predicted", "neutrum", "utrum")?;
        writeln!(f, "{:<18}{:>10}{:>10}", "neutrum", self.confusion.tn, self.confusion.fp)?;
        write!(f, "{:<18}{:>10}{:>10}", "utrum", self.confusion.fn_, self.confusion.tp)
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("threshold {threshold} is outside [0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub surface: String,
    pub actual: Gender,
    pub predicted: Gender,
    pub probability: f64,
}

impl Prediction {
    pub fn is_correct(&self) -> bool {
        self.actual == self.predicted
    }
}

pub fn predict_all<T: Scalar>(model: &GenderModel<T>, data: &[LabeledWord], threshold: f64) -> Result<Vec<Prediction>> {
    check_threshold(threshold)?;
    data.par_iter()
        .map(|w| {
            let probability = model.predict(&w.surface)?.widen();
            Ok(Prediction {
                surface: w.surface.clone(),
                actual: w.gender,
                predicted: if probability >= threshold { Gender::Utrum } else { Gender::Neutrum },
                probability,
            })
        })
        .collect()
}

pub fn evaluate<T: Scalar>(model: &GenderModel<T>, data: &[LabeledWord], threshold: f64) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Empty("cannot evaluate on an empty set"));
    }
    let mut c = Confusion::default();
    for p in predict_all(model, data, threshold)? {
        c.add(p.actual, p.predicted);
    }
    EvalReport::from_confusion(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSample {
    pub correct: Vec<Prediction>,
    pub incorrect: Vec<Prediction>,
    /// Fewer correct predictions existed than were requested.
    pub correct_shortfall: bool,
    pub incorrect_shortfall: bool,
}

impl PredictionSample {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut section = |title: &str, items: &[Prediction], short: bool| {
            let _ = writeln!(out, "{title}{}", if short { " (fewer than requested)" } else { "" });
            for p in items {
                let _ = writeln!(out, "  {:<24} {}  p(utrum)={:.4}", p.surface, p.actual.letter(), p.probability);
            }
        };
        section("Correctly predicted", &self.correct, self.correct_shortfall);
        section("Incorrectly predicted", &self.incorrect, self.incorrect_shortfall);
        out
    }
}

fn sample_without_replacement(mut items: Vec<Prediction>, n: usize, seed: u64) -> (Vec<Prediction>, bool) {
    let short = items.len() < n;
    SplitMix64::new(seed).shuffle(&mut items);
    items.truncate(n);
    (items, short)
}

/// Up to `n_each` correctly and `n_each` incorrectly predicted words, drawn
/// uniformly without replacement.
pub fn sample_predictions<T: Scalar>(
    model: &GenderModel<T>,
    data: &[LabeledWord],
    seed: u64,
    n_each: usize,
) -> Result<PredictionSample> {
    if n_each == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let (correct, incorrect): (Vec<_>, Vec<_>) =
        predict_all(model, data, 0.5)?.into_iter().partition(Prediction::is_correct);
    let (correct, correct_shortfall) = sample_without_replacement(correct, n_each, derive_seed(seed, 0));
    let (incorrect, incorrect_shortfall) = sample_without_replacement(incorrect, n_each, derive_seed(seed, 1));
    Ok(PredictionSample { correct, incorrect, correct_shortfall, incorrect_shortfall })
}

/// Which recurrent states to export per word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HiddenExport {
    /// Every step's hidden state, concatenated: the readout input.
    #[default]
    Sequence,
    /// Only the state after the last position.
    FinalState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenRow {
    pub surface: String,
    pub actual: Gender,
    pub predicted: Gender,
    pub values: Vec<f64>,
}

/// Tab-separated rows: surface, true label, predicted label (1 = utrum),
/// then the hidden-state values with 17 significant digits. No header.
pub fn export_hidden_states<T: Scalar>(
    model: &GenderModel<T>,
    data: &[LabeledWord],
    path: &Path,
    mode: HiddenExport,
) -> Result<usize> {
    let hidden_size = match model.network() {
        Network::Recurrent(n) => n.hidden_size(),
        Network::Dense(_) => {
            return Err(Error::UnsupportedModel("hidden-state export needs a GRU or LSTM model".into()))
        }
    };
    let rows = data
        .par_iter()
        .map(|w| {
            let ForwardTrace::Recurrent(trace) = model.forward(&model.encode(&w.surface)?)? else {
                unreachable!("recurrent network yields recurrent traces")
            };
            let values = match mode {
                HiddenExport::Sequence => &trace.hidden[..],
                HiddenExport::FinalState => trace.final_state(hidden_size),
            };
            let predicted = if trace.probability >= T::lit(0.5) { Gender::Utrum } else { Gender::Neutrum };
            let mut line = format!("{}\t{}\t{}", w.surface, w.gender.label(), predicted.label());
            for v in values {
                let _ = write!(line, "\t{:.16e}", v.widen());
            }
            Ok(line)
        })
        .collect::<Result<Vec<String>>>()?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    for line in &rows {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(rows.len())
}

pub fn read_hidden_states(path: &Path) -> Result<Vec<HiddenRow>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let err = |m: &str| Error::Parse { path: Some(path.to_path_buf()), line: i + 1, message: m.into() };
            let mut fields = line.split('\t');
            let surface = fields.next().ok_or_else(|| err("missing surface"))?.to_owned();
            let mut label = || -> Result<Gender> {
                fields
                    .next()
                    .and_then(|f| f.parse::<u8>().ok())
                    .and_then(Gender::from_label)
                    .ok_or_else(|| err("bad label"))
            };
            let actual = label()?;
            let predicted = label()?;
            let values = fields.map(|f| f.parse::<f64>().map_err(|_| err("bad value"))).collect::<Result<_>>()?;
            Ok(HiddenRow { surface, actual, predicted, values })
        })
        .collect()
}
