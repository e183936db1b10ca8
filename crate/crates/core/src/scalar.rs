//! Scalar abstractions shared by the numeric parts of the crate.
//!
//! Ratios (accuracy, F1, confidence) only need field arithmetic, so they are
//! generic over [`Scalar`], which admits exact rationals as well as floats.
//! BM25 needs a logarithm and is generic over [`Real`].

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num};

/// Field-like scalar: `f32`, `f64`, or an exact rational.
pub trait Scalar: Num + Clone + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// `num / den`, with `0/0` defined as zero.
    fn ratio_or_zero(num: usize, den: usize) -> Self {
        if den == 0 {
            Self::zero()
        } else {
            Self::from_count(num) / Self::from_count(den)
        }
    }
}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {}

/// Floating-point scalar with transcendental functions.
pub trait Real: Scalar + Float {
    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite value")
    }
}

impl<T> Real for T where T: Scalar + Float {}

/// Exact rational used for oracle-grade metric comparisons.
pub type Exact = Ratio<u64>;
