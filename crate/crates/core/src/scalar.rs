use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type for tensors, models and optimizer state.
///
/// Implemented for `f32` and `f64`. Model files always store 64-bit values,
/// so an `f32` model widens losslessly on save and narrows back exactly on load.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Probability clamp used by the loss: predictions are confined to
    /// `[PROB_EPS, 1 - PROB_EPS]` before taking logarithms.
    const PROB_EPS: Self;

    fn lit(x: f64) -> Self;

    fn widen(self) -> f64;
}

impl Scalar for f64 {
    const PROB_EPS: Self = 1e-12;

    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    // 1 - 1e-12 rounds to 1.0 in single precision.
    const PROB_EPS: Self = 1e-7;

    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}
