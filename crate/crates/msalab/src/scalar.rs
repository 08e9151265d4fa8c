//! Scalar abstraction for the floating-point backends.
//!
//! Everything numeric in the crate is generic over [`Scalar`], which bundles
//! the real-field operations the eigensolver needs with the `num-traits`
//! conversions used to move literals and statistics in and out of the
//! generic code. `f32` and `f64` are the intended instantiations.

use num_traits::{FromPrimitive, ToPrimitive};

pub trait Scalar:
    nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal must convert")
    }

    /// Lossy view as `f64`, for reporting and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand used throughout the crate for `Scalar::lit`.
pub fn lit<T: Scalar>(x: f64) -> T {
    T::lit(x)
}
