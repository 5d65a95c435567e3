use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar the numerics are generic over.
///
/// `f64` is the working precision for everything that ships; `f32` exists to
/// keep the code honest about not depending on spare mantissa bits and for
/// memory-bound parameter sweeps. Conversions from `f64` literals go through
/// [`Real::of`] so generic code never mentions a concrete float type.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal converts to scalar")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to scalar")
    }

    /// Widen to `f64` (exact for both supported scalars).
    fn dbl(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }

    fn half(self) -> Self {
        self / Self::of(2.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// n! as a scalar. Levels stay in the single digits, so this never overflows.
pub fn factorial<T: Real>(n: usize) -> T {
    let mut acc = 1.0f64;
    for k in 2..=n {
        acc *= k as f64;
    }
    T::of(acc)
}

/// Binomial coefficient as a scalar.
pub fn binomial<T: Real>(n: usize, k: usize) -> T {
    if k > n {
        return T::zero();
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    T::of(acc)
}
