//! Scalar abstraction for the numeric kernels.
//!
//! All tensor and tile math is generic over [`Scalar`] so the same code runs
//! on `f32` (the runtime's working type) and `f64` (useful for oracles and
//! tolerance studies). The concrete aliases live at the crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type accepted by the tensor and tile kernels.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Copy + Send + Sync + Debug + Display + 'static
{
    /// Lossy conversion from `f64`, for constants like activation slopes.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant must convert")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
