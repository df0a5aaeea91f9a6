use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar used throughout the toolkit: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    /// A log value below which `exp` is zero or subnormal.
    #[inline]
    fn exp_underflow() -> Self {
        Self::min_positive_value().ln()
    }

    /// Widen to `f64` for accumulation.
    #[inline]
    fn wide(self) -> f64 {
        self.to_f64().expect("Real always widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
