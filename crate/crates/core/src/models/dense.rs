use crate::encoding::EncodedWord;
use crate::error::Result;
use crate::nn::{
    bce_logit_grad, glorot_init, mat_vec_acc, outer_acc, sigmoid, tanh_derivative, vec_mat_acc,
    Param, Tensor2,
};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

use super::embedding::Embedding;

/// Embedding, flattened over positions, into a tanh hidden layer and a
/// single sigmoid unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<T> {
    pub embedding: Embedding<T>,
    pub hidden_weight: Param<T>,
    pub hidden_bias: Param<T>,
    pub output_weight: Param<T>,
    pub output_bias: Param<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrace<T> {
    pub word: EncodedWord,
    pub embedded: Vec<T>,
    pub hidden: Vec<T>,
    pub logit: T,
    pub probability: T,
}

pub(crate) const DENSE_PARAM_NAMES: [&str; 5] =
    ["embedding", "hidden.weight", "hidden.bias", "output.weight", "output.bias"];

impl<T: Scalar> DenseNet<T> {
    pub fn new(table_rows: usize, max_len: usize, d_emb: usize, hidden: usize, seed: u64) -> Self {
        let flat = max_len * d_emb;
        Self {
            embedding: Embedding::new(table_rows, d_emb, derive_seed(seed, 0)),
            hidden_weight: Param::new(glorot_init(flat, hidden, derive_seed(seed, 1))),
            hidden_bias: Param::zeros(1, hidden),
            output_weight: Param::new(glorot_init(hidden, 1, derive_seed(seed, 2))),
            output_bias: Param::zeros(1, 1),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_bias.value.cols()
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![
            &self.embedding.table,
            &self.hidden_weight,
            &self.hidden_bias,
            &self.output_weight,
            &self.output_bias,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.embedding.table,
            &mut self.hidden_weight,
            &mut self.hidden_bias,
            &mut self.output_weight,
            &mut self.output_bias,
        ]
    }

    pub fn forward(&self, word: &EncodedWord) -> Result<DenseTrace<T>> {
        let embedded = self.embedding.forward(word)?;
        let mut hidden = self.hidden_bias.value.as_slice().to_vec();
        vec_mat_acc(&embedded, &self.hidden_weight.value, &mut hidden);
        hidden.iter_mut().for_each(|a| *a = a.tanh());
        let mut logit = [self.output_bias.value.as_slice()[0]];
        vec_mat_acc(&hidden, &self.output_weight.value, &mut logit);
        let logit = logit[0];
        Ok(DenseTrace { word: word.clone(), embedded, hidden, logit, probability: sigmoid(logit) })
    }

    /// Accumulates loss gradients into `grads`, ordered as [`Self::params`].
    pub(crate) fn backward_into(&self, trace: &DenseTrace<T>, label: T, grads: &mut [Tensor2<T>]) {
        let [g_emb, g_hw, g_hb, g_ow, g_ob] = grads else {
            unreachable!("dense gradient buffer has five tensors")
        };
        let dz = bce_logit_grad(trace.probability, label);
        outer_acc(g_ow, &trace.hidden, &[dz]);
        g_ob.as_mut_slice()[0] += dz;

        let mut d_pre = vec![T::zero(); trace.hidden.len()];
        mat_vec_acc(&self.output_weight.value, &[dz], &mut d_pre);
        for (d, &h) in d_pre.iter_mut().zip(&trace.hidden) {
            *d *= tanh_derivative(h);
        }
        outer_acc(g_hw, &trace.embedded, &d_pre);
        crate::nn::add_into(g_hb.as_mut_slice(), &d_pre);

        let mut d_embedded = vec![T::zero(); trace.embedded.len()];
        mat_vec_acc(&self.hidden_weight.value, &d_pre, &mut d_embedded);
        Embedding::backward(&trace.word, &d_embedded, g_emb);
    }
}
