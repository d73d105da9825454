use crate::encoding::EncodedWord;
use crate::error::{Error, Result};
use crate::nn::{add_into, glorot_init, Param, Tensor2};
use crate::scalar::Scalar;

/// Character embedding table. Row 0 is the (trainable) padding row, rows
/// `1..=V` are characters and row `V + 1` is the unknown character.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub table: Param<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(rows: usize, dim: usize, seed: u64) -> Self {
        Self { table: Param::new(glorot_init(rows, dim, seed)) }
    }

    pub fn dim(&self) -> usize {
        self.table.value.cols()
    }

    pub fn rows(&self) -> usize {
        self.table.value.rows()
    }

    /// Looks up every position, padding included, and concatenates the rows
    /// in position order.
    pub fn forward(&self, word: &EncodedWord) -> Result<Vec<T>> {
        let table = &self.table.value;
        let mut out = Vec::with_capacity(word.max_len() * self.dim());
        for &ix in word.indices() {
            if ix >= table.rows() {
                return Err(Error::IndexOutOfRange { index: ix, limit: table.rows() - 1 });
            }
            out.extend_from_slice(table.row(ix));
        }
        Ok(out)
    }

    /// Scatters `d_embedded` (the loss gradient w.r.t. the concatenated
    /// lookup) back onto the rows that were read.
    pub(crate) fn backward(word: &EncodedWord, d_embedded: &[T], grad: &mut Tensor2<T>) {
        let dim = grad.cols();
        for (t, &ix) in word.indices().iter().enumerate() {
            add_into(grad.row_mut(ix), &d_embedded[t * dim..(t + 1) * dim]);
        }
    }
}
