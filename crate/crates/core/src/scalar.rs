//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the optimization stack is generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Pivot magnitude below which a tableau entry is treated as zero.
    fn pivot_tol() -> Self;

    /// Primal/dual feasibility tolerance used by the simplex iterations.
    fn solver_tol() -> Self;

    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn pivot_tol() -> Self {
        1e-11
    }

    fn solver_tol() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn pivot_tol() -> Self {
        1e-5
    }

    fn solver_tol() -> Self {
        1e-5
    }
}

/// `max(x, 0)`.
#[inline]
pub(crate) fn pos<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Largest element of an iterator of non-negative values, zero when empty.
pub(crate) fn max_of<T: Scalar, I: IntoIterator<Item = T>>(it: I) -> T {
    it.into_iter().fold(T::zero(), |m, v| if v > m { v } else { m })
}
