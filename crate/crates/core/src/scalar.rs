//! Scalar abstraction for metric arithmetic.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point type usable by the metric and scoring code: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Lossless for counts below 2^24 (`f32`) or 2^53 (`f64`).
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable as float")
    }

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
