use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type the deterministic core is generic over.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Relative tolerance iterative solvers aim for at this precision.
    fn solver_tol() -> Self {
        Self::epsilon() * lit(64.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub(crate) fn lit<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 literal representable")
}

#[inline]
pub(crate) fn from_usize<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("usize representable")
}

#[inline]
pub(crate) fn to_f64<S: Scalar>(x: S) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
