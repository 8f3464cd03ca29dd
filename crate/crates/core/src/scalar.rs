//! Floating-point scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Real scalar usable by the linear algebra, subspace, loss and encoder code.
///
/// Implemented for `f32` and `f64`. Tolerances that the numeric code checks
/// against scale with the precision of the type.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    /// Tolerance for "unit norm" and orthonormality checks.
    fn unit_tolerance() -> Self;

    /// Relative tolerance for the symmetry precondition of the eigensolver.
    fn symmetry_tolerance() -> Self;

    /// Relative off-diagonal mass at which Jacobi sweeps stop.
    fn jacobi_tolerance() -> Self;

    /// Converts a literal. Every `f64` literal used in this crate is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal fits the scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    fn unit_tolerance() -> Self {
        1e-8
    }
    fn symmetry_tolerance() -> Self {
        1e-12
    }
    fn jacobi_tolerance() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn unit_tolerance() -> Self {
        1e-4
    }
    fn symmetry_tolerance() -> Self {
        1e-5
    }
    fn jacobi_tolerance() -> Self {
        1e-6
    }
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}
