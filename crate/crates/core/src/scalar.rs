//! Floating-point abstraction for the numeric kernels.
//!
//! Model math (MLP training, Viterbi decoding, rank correlation) is written
//! against [`Scalar`] so the same code runs at `f32` or `f64`. The pipeline
//! itself always instantiates `f64`; see the aliases at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Any float type usable by the numeric kernels.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, for constants and counts.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("float-to-float conversion cannot fail")
    }

    /// Lossy conversion from a count.
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_f64_lossy(n as f64)
    }

    /// Lossy widening to `f64`, for reporting and cross-type comparisons.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float-to-float conversion cannot fail")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Debug
        + Display
        + Default
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}
