//! Scalar abstractions.
//!
//! Image, SIFT and hashing math is written once against [`Real`] and used
//! with `f32` (extraction throughput) or `f64` (training, gradient checks).
//! Loss bookkeeping for threshold search only needs exact field arithmetic
//! and ordering, so it is generic over the weaker [`LossScalar`], which is
//! also satisfied by rational types.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, NumAssign, Signed, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; infallible for the primitive floats.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("primitive float conversion")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("primitive float conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field used for hinge-loss accounting.
pub trait LossScalar:
    Num + Signed + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync
{
    /// Positive part `[x]_+`.
    #[inline]
    fn hinge(self) -> Self {
        if self > Self::zero() {
            self
        } else {
            Self::zero()
        }
    }

    #[inline]
    fn from_usize_exact(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable in loss scalar")
    }
}

impl<T> LossScalar for T where
    T: Num + Signed + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync
{
}
