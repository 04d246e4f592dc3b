//! Floating-point abstraction so the whole stack can run in `f32` (training,
//! decoding) or `f64` (gradient-check mode) without duplicated code.

use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Element type for tensors and graph operations.
///
/// `f32` is the working precision; `f64` exists so finite-difference
/// gradient checks have enough headroom for tight tolerances.
pub trait Scalar:
    Float + Sum<Self> + Debug + Display + Default + Send + Sync + 'static
{
    /// Short type name used in diagnostics.
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
