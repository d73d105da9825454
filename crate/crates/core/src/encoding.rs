//! Character vocabulary and fixed-length integer encoding of words.
//!
//! Index 0 is padding, characters take `1..=size` in ascending code-point
//! order, and `size + 1` stands for any character outside the vocabulary.
//! A "character" is a Unicode scalar value.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

pub const PAD_INDEX: usize = 0;

/// Longest word of the reference noun list.
pub const DEFAULT_MAX_LEN: usize = 19;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    char_to_index: HashMap<char, usize>,
    index_to_char: Vec<char>,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit character list. Characters are
    /// sorted and deduplicated, so any order of the same set gives the same
    /// mapping.
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Result<Self> {
        let sorted: BTreeSet<char> = chars.into_iter().collect();
        if sorted.is_empty() {
            return Err(Error::Empty("vocabulary needs at least one character"));
        }
        let index_to_char: Vec<char> = sorted.into_iter().collect();
        let char_to_index = index_to_char
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + 1))
            .collect();
        Ok(Self { char_to_index, index_to_char })
    }

    /// Number of real characters (excludes padding and unknown).
    pub fn size(&self) -> usize {
        self.index_to_char.len()
    }

    pub fn pad_index(&self) -> usize {
        PAD_INDEX
    }

    pub fn unk_index(&self) -> usize {
        self.size() + 1
    }

    /// Rows needed by an embedding table: padding, characters, unknown.
    pub fn table_rows(&self) -> usize {
        self.size() + 2
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.char_to_index.get(&c).copied()
    }

    pub fn char_at(&self, index: usize) -> Option<char> {
        index.checked_sub(1).and_then(|i| self.index_to_char.get(i)).copied()
    }

    /// Characters in index order (index 1 first).
    pub fn chars(&self) -> &[char] {
        &self.index_to_char
    }
}

/// Vocabulary over every character occurring in `words`.
pub fn build_vocabulary<S: AsRef<str>>(words: &[S]) -> Result<Vocabulary> {
    if words.is_empty() {
        return Err(Error::Empty("cannot build a vocabulary from an empty word list"));
    }
    Vocabulary::from_chars(words.iter().flat_map(|w| w.as_ref().chars()))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedWord {
    indices: Vec<usize>,
    true_length: usize,
}

impl EncodedWord {
    /// Wraps raw indices, checking the padding-suffix invariant.
    pub fn from_indices(indices: Vec<usize>) -> Result<Self> {
        let true_length = indices.iter().take_while(|&&i| i != PAD_INDEX).count();
        if indices[true_length..].iter().any(|&i| i != PAD_INDEX) {
            return Err(Error::InvalidInput(
                "encoded word has a non-padding index after padding".into(),
            ));
        }
        Ok(Self { indices, true_length })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn true_length(&self) -> usize {
        self.true_length
    }

    pub fn max_len(&self) -> usize {
        self.indices.len()
    }
}

pub fn encode_word(word: &str, vocab: &Vocabulary, max_len: usize) -> Result<EncodedWord> {
    if word.is_empty() {
        return Err(Error::InvalidInput("cannot encode an empty word".into()));
    }
    let len = word.chars().count();
    if len > max_len {
        return Err(Error::LengthExceeded { word: word.to_owned(), len, max_len });
    }
    let mut indices: Vec<usize> = word
        .chars()
        .map(|c| vocab.index_of(c).unwrap_or_else(|| vocab.unk_index()))
        .collect();
    indices.resize(max_len, PAD_INDEX);
    Ok(EncodedWord { indices, true_length: len })
}

/// Inverse of [`encode_word`]. Unknown-character indices decode to U+FFFD.
pub fn decode_indices(encoded: &EncodedWord, vocab: &Vocabulary) -> Result<String> {
    let limit = vocab.unk_index();
    encoded.indices[..encoded.true_length]
        .iter()
        .map(|&i| match vocab.char_at(i) {
            Some(c) => Ok(c),
            None if i == limit => Ok(char::REPLACEMENT_CHARACTER),
            None => Err(Error::IndexOutOfRange { index: i, limit }),
        })
        .collect()
}
