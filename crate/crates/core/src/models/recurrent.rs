//! GRU and LSTM cells, unrolled over every position of the padded word, with
//! the concatenated hidden states feeding a single sigmoid unit.
//!
//! Cell equations, with `a_g = W_g x_t + U_g h_{t-1} + b_g`:
//!
//! LSTM: `i, f, o = sigmoid(a)`, `g = tanh(a_c)`, `c_t = f*c_{t-1} + i*g`,
//! `h_t = o*tanh(c_t)`.
//!
//! GRU: `z, r = sigmoid(a)`, `n = tanh(W_n x_t + U_n (r*h_{t-1}) + b_n)`,
//! `h_t = (1-z)*h_{t-1} + z*n`.

use crate::encoding::EncodedWord;
use crate::error::Result;
use crate::nn::{
    add_into, bce_logit_grad, glorot_init, mat_vec_acc, outer_acc, sigmoid, sigmoid_derivative,
    tanh_derivative, vec_mat_acc, Param, Tensor2,
};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

use super::embedding::Embedding;

/// Input weights `W` (d_emb x hidden), recurrent weights `U`
/// (hidden x hidden) and bias `b` (1 x hidden) of one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams<T> {
    pub w: Param<T>,
    pub u: Param<T>,
    pub b: Param<T>,
}

impl<T: Scalar> GateParams<T> {
    pub fn new(d_in: usize, hidden: usize, seed: u64, bias: T) -> Self {
        Self {
            w: Param::new(glorot_init(d_in, hidden, derive_seed(seed, 0))),
            u: Param::new(glorot_init(hidden, hidden, derive_seed(seed, 1))),
            b: Param::new(Tensor2::filled(1, hidden, bias)),
        }
    }

    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        Self { w: Param::zeros(d_in, hidden), u: Param::zeros(hidden, hidden), b: Param::zeros(1, hidden) }
    }

    /// `W x + U h + b`.
    pub fn preactivation(&self, x: &[T], h: &[T]) -> Vec<T> {
        let mut a = self.b.value.as_slice().to_vec();
        vec_mat_acc(x, &self.w.value, &mut a);
        vec_mat_acc(h, &self.u.value, &mut a);
        a
    }

    fn params(&self) -> [&Param<T>; 3] {
        [&self.w, &self.u, &self.b]
    }

    fn params_mut(&mut self) -> [&mut Param<T>; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }
}

/// Accumulates the gradients of one gate given `d_pre` = dL/d(preactivation)
/// and the vector that was multiplied into `U`; pushes the input and
/// recurrent gradients into `dx` and `dh`.
fn gate_backward<T: Scalar>(
    gate: &GateParams<T>,
    grads: &mut [Tensor2<T>],
    x: &[T],
    h_in: &[T],
    d_pre: &[T],
    dx: &mut [T],
    dh: &mut [T],
) {
    let [gw, gu, gb] = grads else { unreachable!("gate gradients come in triples") };
    outer_acc(gw, x, d_pre);
    outer_acc(gu, h_in, d_pre);
    add_into(gb.as_mut_slice(), d_pre);
    mat_vec_acc(&gate.w.value, d_pre, dx);
    mat_vec_acc(&gate.u.value, d_pre, dh);
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<T> {
    pub input: GateParams<T>,
    pub forget: GateParams<T>,
    pub output: GateParams<T>,
    pub candidate: GateParams<T>,
}

/// Gate activations and new state of one LSTM step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep<T> {
    pub i: Vec<T>,
    pub f: Vec<T>,
    pub o: Vec<T>,
    pub g: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
}

impl<T: Scalar> LstmCell<T> {
    /// Glorot weights, zero biases except the forget gate, which starts at 1.
    pub fn new(d_in: usize, hidden: usize, seed: u64) -> Self {
        Self {
            input: GateParams::new(d_in, hidden, derive_seed(seed, 0), T::zero()),
            forget: GateParams::new(d_in, hidden, derive_seed(seed, 1), T::one()),
            output: GateParams::new(d_in, hidden, derive_seed(seed, 2), T::zero()),
            candidate: GateParams::new(d_in, hidden, derive_seed(seed, 3), T::zero()),
        }
    }

    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        Self {
            input: GateParams::zeros(d_in, hidden),
            forget: GateParams::zeros(d_in, hidden),
            output: GateParams::zeros(d_in, hidden),
            candidate: GateParams::zeros(d_in, hidden),
        }
    }

    fn gates(&self) -> [&GateParams<T>; 4] {
        [&self.input, &self.forget, &self.output, &self.candidate]
    }

    fn gates_mut(&mut self) -> [&mut GateParams<T>; 4] {
        [&mut self.input, &mut self.forget, &mut self.output, &mut self.candidate]
    }

    pub fn step(&self, x: &[T], h_prev: &[T], c_prev: &[T]) -> LstmStep<T> {
        let mut i = self.input.preactivation(x, h_prev);
        let mut f = self.forget.preactivation(x, h_prev);
        let mut o = self.output.preactivation(x, h_prev);
        let mut g = self.candidate.preactivation(x, h_prev);
        i.iter_mut().chain(f.iter_mut()).chain(o.iter_mut()).for_each(|a| *a = sigmoid(*a));
        g.iter_mut().for_each(|a| *a = a.tanh());
        let c: Vec<T> = (0..g.len()).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let h = c.iter().zip(&o).map(|(&c, &o)| o * c.tanh()).collect();
        LstmStep { i, f, o, g, c, h }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCell<T> {
    pub update: GateParams<T>,
    pub reset: GateParams<T>,
    pub candidate: GateParams<T>,
}

/// Gate activations and new state of one GRU step. `rh` is `r * h_prev`,
/// the vector fed to the candidate's recurrent weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStep<T> {
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub n: Vec<T>,
    pub rh: Vec<T>,
    pub h: Vec<T>,
}

impl<T: Scalar> GruCell<T> {
    pub fn new(d_in: usize, hidden: usize, seed: u64) -> Self {
        Self {
            update: GateParams::new(d_in, hidden, derive_seed(seed, 0), T::zero()),
            reset: GateParams::new(d_in, hidden, derive_seed(seed, 1), T::zero()),
            candidate: GateParams::new(d_in, hidden, derive_seed(seed, 2), T::zero()),
        }
    }

    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        Self {
            update: GateParams::zeros(d_in, hidden),
            reset: GateParams::zeros(d_in, hidden),
            candidate: GateParams::zeros(d_in, hidden),
        }
    }

    fn gates(&self) -> [&GateParams<T>; 3] {
        [&self.update, &self.reset, &self.candidate]
    }

    fn gates_mut(&mut self) -> [&mut GateParams<T>; 3] {
        [&mut self.update, &mut self.reset, &mut self.candidate]
    }

    pub fn step(&self, x: &[T], h_prev: &[T]) -> GruStep<T> {
        let mut z = self.update.preactivation(x, h_prev);
        let mut r = self.reset.preactivation(x, h_prev);
        z.iter_mut().chain(r.iter_mut()).for_each(|a| *a = sigmoid(*a));
        let rh: Vec<T> = r.iter().zip(h_prev).map(|(&r, &h)| r * h).collect();
        let mut n = self.candidate.preactivation(x, &rh);
        n.iter_mut().for_each(|a| *a = a.tanh());
        let h = (0..n.len()).map(|k| (T::one() - z[k]) * h_prev[k] + z[k] * n[k]).collect();
        GruStep { z, r, n, rh, h }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Cell<T> {
    Lstm(LstmCell<T>),
    Gru(GruCell<T>),
}

/// Single-unit sigmoid readout over the concatenation of every step's
/// hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatReadout<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> ConcatReadout<T> {
    pub fn new(features: usize, seed: u64) -> Self {
        Self { weight: Param::new(glorot_init(features, 1, seed)), bias: Param::zeros(1, 1) }
    }

    pub fn logit(&self, features: &[T]) -> T {
        let mut z = [self.bias.value.as_slice()[0]];
        vec_mat_acc(features, &self.weight.value, &mut z);
        z[0]
    }

    /// Returns dL/d(features) after accumulating the readout's own gradients.
    fn backward(&self, features: &[T], dz: T, gw: &mut Tensor2<T>, gb: &mut Tensor2<T>) -> Vec<T> {
        outer_acc(gw, features, &[dz]);
        gb.as_mut_slice()[0] += dz;
        let mut d = vec![T::zero(); features.len()];
        mat_vec_acc(&self.weight.value, &[dz], &mut d);
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentNet<T> {
    pub embedding: Embedding<T>,
    pub cell: Cell<T>,
    pub readout: ConcatReadout<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellTrace<T> {
    Lstm(Vec<LstmStep<T>>),
    Gru(Vec<GruStep<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentTrace<T> {
    pub word: EncodedWord,
    pub embedded: Vec<T>,
    /// `h_1 .. h_maxlen` concatenated; the readout input.
    pub hidden: Vec<T>,
    pub steps: CellTrace<T>,
    pub logit: T,
    pub probability: T,
}

impl<T: Scalar> RecurrentTrace<T> {
    pub fn final_state(&self, hidden_size: usize) -> &[T] {
        &self.hidden[self.hidden.len() - hidden_size..]
    }
}

pub(crate) const LSTM_PARAM_NAMES: [&str; 15] = [
    "embedding",
    "lstm.input.w",
    "lstm.input.u",
    "lstm.input.b",
    "lstm.forget.w",
    "lstm.forget.u",
    "lstm.forget.b",
    "lstm.output.w",
    "lstm.output.u",
    "lstm.output.b",
    "lstm.candidate.w",
    "lstm.candidate.u",
    "lstm.candidate.b",
    "readout.weight",
    "readout.bias",
];

pub(crate) const GRU_PARAM_NAMES: [&str; 12] = [
    "embedding",
    "gru.update.w",
    "gru.update.u",
    "gru.update.b",
    "gru.reset.w",
    "gru.reset.u",
    "gru.reset.b",
    "gru.candidate.w",
    "gru.candidate.u",
    "gru.candidate.b",
    "readout.weight",
    "readout.bias",
];

impl<T: Scalar> RecurrentNet<T> {
    pub fn lstm(table_rows: usize, max_len: usize, d_emb: usize, hidden: usize, seed: u64) -> Self {
        Self {
            embedding: Embedding::new(table_rows, d_emb, derive_seed(seed, 0)),
            cell: Cell::Lstm(LstmCell::new(d_emb, hidden, derive_seed(seed, 1))),
            readout: ConcatReadout::new(max_len * hidden, derive_seed(seed, 2)),
        }
    }

    pub fn gru(table_rows: usize, max_len: usize, d_emb: usize, hidden: usize, seed: u64) -> Self {
        Self {
            embedding: Embedding::new(table_rows, d_emb, derive_seed(seed, 0)),
            cell: Cell::Gru(GruCell::new(d_emb, hidden, derive_seed(seed, 1))),
            readout: ConcatReadout::new(max_len * hidden, derive_seed(seed, 2)),
        }
    }

    pub fn hidden_size(&self) -> usize {
        match &self.cell {
            Cell::Lstm(c) => c.input.b.value.cols(),
            Cell::Gru(c) => c.update.b.value.cols(),
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = vec![&self.embedding.table];
        match &self.cell {
            Cell::Lstm(c) => out.extend(c.gates().into_iter().flat_map(GateParams::params)),
            Cell::Gru(c) => out.extend(c.gates().into_iter().flat_map(GateParams::params)),
        }
        out.push(&self.readout.weight);
        out.push(&self.readout.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = vec![&mut self.embedding.table];
        match &mut self.cell {
            Cell::Lstm(c) => out.extend(c.gates_mut().into_iter().flat_map(GateParams::params_mut)),
            Cell::Gru(c) => out.extend(c.gates_mut().into_iter().flat_map(GateParams::params_mut)),
        }
        out.push(&mut self.readout.weight);
        out.push(&mut self.readout.bias);
        out
    }

    /// Runs the cell from `h_0 = c_0 = 0` over every position, padding
    /// included.
    pub fn forward(&self, word: &EncodedWord) -> Result<RecurrentTrace<T>> {
        let embedded = self.embedding.forward(word)?;
        let d = self.embedding.dim();
        let hs = self.hidden_size();
        let steps_n = word.max_len();
        let mut hidden = Vec::with_capacity(steps_n * hs);
        let zeros = vec![T::zero(); hs];
        let steps = match &self.cell {
            Cell::Lstm(cell) => {
                let mut steps: Vec<LstmStep<T>> = Vec::with_capacity(steps_n);
                for t in 0..steps_n {
                    let x = &embedded[t * d..(t + 1) * d];
                    let (h_prev, c_prev) = match steps.last() {
                        Some(s) => (&s.h[..], &s.c[..]),
                        None => (&zeros[..], &zeros[..]),
                    };
                    let step = cell.step(x, h_prev, c_prev);
                    hidden.extend_from_slice(&step.h);
                    steps.push(step);
                }
                CellTrace::Lstm(steps)
            }
            Cell::Gru(cell) => {
                let mut steps: Vec<GruStep<T>> = Vec::with_capacity(steps_n);
                for t in 0..steps_n {
                    let x = &embedded[t * d..(t + 1) * d];
                    let h_prev = steps.last().map_or(&zeros[..], |s| &s.h[..]);
                    let step = cell.step(x, h_prev);
                    hidden.extend_from_slice(&step.h);
                    steps.push(step);
                }
                CellTrace::Gru(steps)
            }
        };
        let logit = self.readout.logit(&hidden);
        Ok(RecurrentTrace { word: word.clone(), embedded, hidden, steps, logit, probability: sigmoid(logit) })
    }

    /// Backpropagation through time. `grads` is ordered as [`Self::params`].
    pub(crate) fn backward_into(
        &self,
        trace: &RecurrentTrace<T>,
        label: T,
        grads: &mut [Tensor2<T>],
        flip_forget: bool,
    ) {
        let n = grads.len();
        let (g_emb, rest) = grads.split_first_mut().expect("embedding gradient");
        let (g_cell, g_readout) = rest.split_at_mut(n - 3);
        let [g_rw, g_rb] = g_readout else { unreachable!("readout has weight and bias") };

        let dz = bce_logit_grad(trace.probability, label);
        let d_hidden = self.readout.backward(&trace.hidden, dz, g_rw, g_rb);

        let d = self.embedding.dim();
        let hs = self.hidden_size();
        let mut d_embedded = vec![T::zero(); trace.embedded.len()];
        let zeros = vec![T::zero(); hs];
        let h_at = |t: usize| -> &[T] {
            if t == 0 {
                &zeros
            } else {
                &trace.hidden[(t - 1) * hs..t * hs]
            }
        };

        match (&self.cell, &trace.steps) {
            (Cell::Lstm(cell), CellTrace::Lstm(steps)) => {
                let mut dh_next = vec![T::zero(); hs];
                let mut dc_next = vec![T::zero(); hs];
                let mut d_pre: [Vec<T>; 4] = std::array::from_fn(|_| vec![T::zero(); hs]);
                for t in (0..steps.len()).rev() {
                    let s = &steps[t];
                    let c_prev = if t == 0 { &zeros[..] } else { &steps[t - 1].c[..] };
                    let h_prev = h_at(t);
                    let x = &trace.embedded[t * d..(t + 1) * d];
                    for k in 0..hs {
                        let dh = d_hidden[t * hs + k] + dh_next[k];
                        let tc = s.c[k].tanh();
                        let dc = dc_next[k] + dh * s.o[k] * tanh_derivative(tc);
                        let mut df = dc * c_prev[k];
                        if flip_forget {
                            df = -df;
                        }
                        d_pre[0][k] = dc * s.g[k] * sigmoid_derivative(s.i[k]);
                        d_pre[1][k] = df * sigmoid_derivative(s.f[k]);
                        d_pre[2][k] = dh * tc * sigmoid_derivative(s.o[k]);
                        d_pre[3][k] = dc * s.i[k] * tanh_derivative(s.g[k]);
                        dc_next[k] = dc * s.f[k];
                    }
                    dh_next.fill(T::zero());
                    let dx = &mut d_embedded[t * d..(t + 1) * d];
                    for ((gate, g), dp) in cell.gates().into_iter().zip(g_cell.chunks_exact_mut(3)).zip(&d_pre) {
                        gate_backward(gate, g, x, h_prev, dp, dx, &mut dh_next);
                    }
                }
            }
            (Cell::Gru(cell), CellTrace::Gru(steps)) => {
                let mut dh_next = vec![T::zero(); hs];
                let mut dh_prev = vec![T::zero(); hs];
                let mut dz_pre = vec![T::zero(); hs];
                let mut dr_pre = vec![T::zero(); hs];
                let mut dn_pre = vec![T::zero(); hs];
                let mut d_rh = vec![T::zero(); hs];
                let mut gate_grads = g_cell.chunks_exact_mut(3);
                let (g_z, g_r, g_n) = match (gate_grads.next(), gate_grads.next(), gate_grads.next()) {
                    (Some(z), Some(r), Some(n)) => (z, r, n),
                    _ => unreachable!("GRU has three gate triples"),
                };
                for t in (0..steps.len()).rev() {
                    let s = &steps[t];
                    let h_prev = h_at(t);
                    let x = &trace.embedded[t * d..(t + 1) * d];
                    let mut dz = vec![T::zero(); hs];
                    for k in 0..hs {
                        let dh = d_hidden[t * hs + k] + dh_next[k];
                        dz[k] = dh * (s.n[k] - h_prev[k]);
                        dn_pre[k] = dh * s.z[k] * tanh_derivative(s.n[k]);
                        dh_prev[k] = dh * (T::one() - s.z[k]);
                    }
                    let dx = &mut d_embedded[t * d..(t + 1) * d];
                    d_rh.fill(T::zero());
                    gate_backward(&cell.candidate, g_n, x, &s.rh, &dn_pre, dx, &mut d_rh);
                    for k in 0..hs {
                        dr_pre[k] = d_rh[k] * h_prev[k] * sigmoid_derivative(s.r[k]);
                        dh_prev[k] += d_rh[k] * s.r[k];
                        dz_pre[k] = dz[k] * sigmoid_derivative(s.z[k]);
                    }
                    gate_backward(&cell.update, g_z, x, h_prev, &dz_pre, dx, &mut dh_prev);
                    gate_backward(&cell.reset, g_r, x, h_prev, &dr_pre, dx, &mut dh_prev);
                    std::mem::swap(&mut dh_next, &mut dh_prev);
                }
            }
            _ => unreachable!("trace kind checked by caller"),
        }
        Embedding::backward(&trace.word, &d_embedded, g_emb);
    }
}
