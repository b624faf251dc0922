//! Scalar abstraction for the numeric kernels.
//!
//! All matrix, tree, and return arithmetic is generic over [`Scalar`] so the
//! engine runs in either `f32` or `f64`. Concrete `f64` aliases live at the
//! crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar usable throughout the engine.
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
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for configuration constants.
    fn from_config(value: f64) -> Self {
        Self::from_f64(value).expect("finite config value representable in scalar type")
    }

    /// Widening conversion to `f64` for reporting.
    fn to_report(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
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
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}
