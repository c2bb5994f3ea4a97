//! Scalar abstraction used by the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar type the solver is generic over: `f32` or `f64`.
///
/// The acceptance tolerances in the test suites are stated for `f64`; the
/// `f32` instantiation is functional but correspondingly less accurate.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + Debug + Display + Sum + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into the scalar type.
///
/// Panics only if the value is not representable, which cannot happen for the
/// finite constants used throughout the crate.
#[inline]
pub fn real<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("constant representable in scalar type")
}
