//! Generic scalar abstraction for the numeric core.
//!
//! All physics and network math is written against [`Scalar`] so the same
//! kernels run in `f32` or `f64`. Concrete aliases live at the crate root.

use num_traits::FromPrimitive;

/// Real scalar type usable throughout the numeric core.
pub trait Scalar: nalgebra::RealField + FromPrimitive + Copy + Default {
    /// Lossy conversion from `f64` literals and config values.
    fn from_config(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Scalar")
    }

    /// Lossy conversion to `f64` for logging and statistics.
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Shorthand used by the numeric kernels for literal constants.
#[inline]
pub fn sc<S: Scalar>(x: f64) -> S {
    S::from_config(x)
}
