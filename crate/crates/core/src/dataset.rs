//! Labeled noun lists: loading, splitting, suffix statistics and synthetic
//! corpora.
//!
//! File format: UTF-8, one `surface<TAB>label` record per line. Labels
//! `1`, `U`, `u` mean utrum and `0`, `N`, `n` mean neutrum. Lines starting
//! with `#` and blank lines are skipped.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Suffixes stripped from the test set for the suffix-removed evaluation.
pub const DEFAULT_DROP_SUFFIXES: [&str; 5] = ["ing", "tion", "het", "ist", "eri"];

/// Suffixes tabulated by `stats` when none are given.
pub const TABLE_SUFFIXES: [&str; 9] =
    ["het", "tion", "ist", "ing", "are", "skop", "eri", "gram", "ande"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Neutrum,
    Utrum,
}

impl Gender {
    /// Utrum is the positive class, label 1.
    pub fn label(self) -> u8 {
        match self {
            Gender::Neutrum => 0,
            Gender::Utrum => 1,
        }
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            0 => Some(Gender::Neutrum),
            1 => Some(Gender::Utrum),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Gender::Neutrum => 'N',
            Gender::Utrum => 'U',
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Gender::Neutrum => Gender::Utrum,
            Gender::Utrum => Gender::Neutrum,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Neutrum => "neutrum",
            Gender::Utrum => "utrum",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledWord {
    pub surface: String,
    pub gender: Gender,
}

impl LabeledWord {
    pub fn new(surface: impl Into<String>, gender: Gender) -> Self {
        Self { surface: surface.into(), gender }
    }
}

pub fn parse_dataset(text: &str, path: Option<&Path>) -> Result<Vec<LabeledWord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.map(Path::to_path_buf),
        line,
        message,
    };
    let mut words = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (surface, label) = line
            .split_once('\t')
            .ok_or_else(|| err(line_no, "expected \"surface<TAB>label\"".into()))?;
        if surface.is_empty() {
            return Err(err(line_no, "empty surface form".into()));
        }
        let gender = match label {
            "1" | "U" | "u" => Gender::Utrum,
            "0" | "N" | "n" => Gender::Neutrum,
            other => return Err(err(line_no, format!("label {other:?} is not one of 0,1,U,N,u,n"))),
        };
        words.push(LabeledWord::new(surface, gender));
    }
    Ok(words)
}

pub fn load_dataset(path: &Path) -> Result<Vec<LabeledWord>> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, Some(path))
}

/// Writes words with numeric labels, readable by [`load_dataset`].
pub fn write_dataset(path: &Path, words: &[LabeledWord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for w in words {
        writeln!(out, "{}\t{}", w.surface, w.gender.label())?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledWord>,
    pub validation: Vec<LabeledWord>,
    pub test: Vec<LabeledWord>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn all(&self) -> impl Iterator<Item = &LabeledWord> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }
}

/// Sizes of the 60/20/20 partition: `floor(0.6 n)`, `floor(0.2 n)`, rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 3 / 5;
    let validation = n / 5;
    (train, validation, n - train - validation)
}

/// Seeded unstratified 60/20/20 split: Fisher-Yates shuffle with
/// [`SplitMix64`], then contiguous slices.
pub fn split_dataset(data: &[LabeledWord], seed: u64) -> Result<DatasetSplit> {
    const MIN: usize = 5;
    if data.len() < MIN {
        return Err(Error::DatasetTooSmall { n: data.len(), min: MIN });
    }
    let mut shuffled = data.to_vec();
    SplitMix64::new(seed).shuffle(&mut shuffled);
    let (n_train, n_val, _) = split_sizes(data.len());
    let test = shuffled.split_off(n_train + n_val);
    let validation = shuffled.split_off(n_train);
    Ok(DatasetSplit { train: shuffled, validation, test, seed })
}

/// Keeps the words that do not end in any of `suffixes`, in input order.
pub fn filter_suffix_test_set<S: AsRef<str>>(test: &[LabeledWord], suffixes: &[S]) -> Vec<LabeledWord> {
    test.iter()
        .filter(|w| !suffixes.iter().any(|s| w.surface.ends_with(s.as_ref())))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuffixStat {
    pub suffix: String,
    pub occurrences: usize,
    pub utrum: usize,
    pub fraction_utrum: f64,
}

pub fn suffix_statistics(data: &[LabeledWord], suffix: &str) -> Result<SuffixStat> {
    if suffix.is_empty() {
        return Err(Error::InvalidInput("suffix must be non-empty".into()));
    }
    let (occurrences, utrum) = data
        .iter()
        .filter(|w| w.surface.ends_with(suffix))
        .fold((0, 0), |(n, u), w| (n + 1, u + usize::from(w.gender == Gender::Utrum)));
    if occurrences == 0 {
        return Err(Error::UndefinedFraction(suffix.to_owned()));
    }
    Ok(SuffixStat {
        suffix: suffix.to_owned(),
        occurrences,
        utrum,
        fraction_utrum: utrum as f64 / occurrences as f64,
    })
}

/// Accuracy of always predicting the most frequent class.
pub fn majority_baseline(data: &[LabeledWord]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("majority baseline of an empty dataset"));
    }
    let utrum = data.iter().filter(|w| w.gender == Gender::Utrum).count();
    Ok(utrum.max(data.len() - utrum) as f64 / data.len() as f64)
}

pub const SWEDISH_ALPHABET: [char; 29] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's',
    't', 'u', 'v', 'w', 'x', 'y', 'z', 'å', 'ä', 'ö',
];

/// A suffix and the probability that a word carrying it is utrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffixRule {
    pub suffix: String,
    pub utrum_probability: f64,
}

impl SuffixRule {
    pub fn new(suffix: impl Into<String>, utrum_probability: f64) -> Self {
        Self { suffix: suffix.into(), utrum_probability }
    }
}

/// Random stems of 2 to 12 letters over [`SWEDISH_ALPHABET`], each followed
/// by a uniformly chosen rule suffix and labeled utrum with that rule's
/// probability.
///
/// Per word the draws are, in order: stem length, stem letters, rule index,
/// then one unit float compared against the probability.
pub fn synthesize_dataset(seed: u64, n: usize, rules: &[SuffixRule]) -> Result<Vec<LabeledWord>> {
    if rules.is_empty() {
        return Err(Error::Empty("synthesis needs at least one suffix rule"));
    }
    if n == 0 {
        return Err(Error::InvalidInput("cannot synthesize zero words".into()));
    }
    if let Some(r) = rules.iter().find(|r| !(0.0..=1.0).contains(&r.utrum_probability)) {
        return Err(Error::InvalidInput(format!(
            "utrum probability {} for suffix {:?} is outside [0, 1]",
            r.utrum_probability, r.suffix
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let words = (0..n)
        .map(|_| {
            let stem_len = 2 + rng.below_usize(11);
            let mut surface: String = (0..stem_len)
                .map(|_| SWEDISH_ALPHABET[rng.below_usize(SWEDISH_ALPHABET.len())])
                .collect();
            let rule = &rules[rng.below_usize(rules.len())];
            surface.push_str(&rule.suffix);
            let gender = if rng.next_f64() < rule.utrum_probability {
                Gender::Utrum
            } else {
                Gender::Neutrum
            };
            LabeledWord { surface, gender }
        })
        .collect();
    Ok(words)
}
