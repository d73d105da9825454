//! Tensors, activations, loss and initialization shared by every model.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

/// Dense row-major matrix. Vectors are stored as `1 x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> Tensor2<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![T::zero(); rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, values: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} tensor",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.values[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn fill_zero(&mut self) {
        self.values.fill(T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`, element-wise.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor2<U> {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| U::lit(v.widen())).collect(),
        }
    }
}

/// A trainable tensor and its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor2<T>,
    pub grad: Tensor2<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor2<T>) -> Self {
        let grad = Tensor2::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Tensor2::zeros(rows, cols))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill_zero();
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Derivative of the logistic function expressed through its output `s`.
#[inline]
pub fn sigmoid_derivative<T: Scalar>(s: T) -> T {
    s * (T::one() - s)
}

#[inline]
pub fn tanh_elem<T: Scalar>(x: T) -> T {
    x.tanh()
}

#[inline]
pub fn tanh_derivative<T: Scalar>(t: T) -> T {
    T::one() - t * t
}

/// Confines a probability to `[PROB_EPS, 1 - PROB_EPS]`.
#[inline]
pub fn clamp_probability<T: Scalar>(p: T) -> T {
    if p.is_nan() {
        return p;
    }
    p.max(T::PROB_EPS).min(T::one() - T::PROB_EPS)
}

/// Binary cross-entropy of prediction `p` against label `y` in {0, 1},
/// with `p` clamped first.
pub fn bce_loss<T: Scalar>(p: T, y: T) -> T {
    let p = clamp_probability(p);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

/// `dL/dp` of [`bce_loss`]; zero where the clamp is active.
pub fn bce_grad<T: Scalar>(p: T, y: T) -> T {
    if p.is_finite() && p != clamp_probability(p) {
        return T::zero();
    }
    (p - y) / (p * (T::one() - p))
}

/// `dL/dz` of [`bce_loss`] composed with `p = sigmoid(z)`, i.e. `p - y`
/// inside the clamp range and zero outside it.
#[inline]
pub fn bce_logit_grad<T: Scalar>(p: T, y: T) -> T {
    if p.is_finite() && p != clamp_probability(p) {
        T::zero()
    } else {
        p - y
    }
}

/// Glorot-uniform initialization on `[-L, L]`, `L = sqrt(6 / (rows + cols))`.
pub fn glorot_init<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Tensor2<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = SplitMix64::new(seed);
    let values = (0..rows * cols)
        .map(|_| T::lit((2.0 * rng.next_f64() - 1.0) * limit))
        .collect();
    Tensor2 { rows, cols, values }
}

// Kernels used by the model passes. `w` is `x.len() x out.len()`.

/// `out[j] += sum_k x[k] * w[k][j]`.
#[inline]
pub(crate) fn vec_mat_acc<T: Scalar>(x: &[T], w: &Tensor2<T>, out: &mut [T]) {
    debug_assert_eq!((x.len(), out.len()), w.shape());
    for (k, &xk) in x.iter().enumerate() {
        if xk == T::zero() {
            continue;
        }
        for (o, &wkj) in out.iter_mut().zip(w.row(k)) {
            *o += xk * wkj;
        }
    }
}

/// `out[k] += sum_j w[k][j] * d[j]`.
#[inline]
pub(crate) fn mat_vec_acc<T: Scalar>(w: &Tensor2<T>, d: &[T], out: &mut [T]) {
    debug_assert_eq!((out.len(), d.len()), w.shape());
    for (k, o) in out.iter_mut().enumerate() {
        let mut s = T::zero();
        for (&wkj, &dj) in w.row(k).iter().zip(d) {
            s += wkj * dj;
        }
        *o += s;
    }
}

/// `grad[k][j] += x[k] * d[j]`.
#[inline]
pub(crate) fn outer_acc<T: Scalar>(grad: &mut Tensor2<T>, x: &[T], d: &[T]) {
    debug_assert_eq!((x.len(), d.len()), grad.shape());
    for (k, &xk) in x.iter().enumerate() {
        if xk == T::zero() {
            continue;
        }
        for (g, &dj) in grad.row_mut(k).iter_mut().zip(d) {
            *g += xk * dj;
        }
    }
}

#[inline]
pub(crate) fn add_into<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}
