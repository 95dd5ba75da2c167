use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar used by trajectories, vector fields and features: f32 or f64.
pub trait Real: Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static {
    /// Lossy conversion from an f64 constant.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn from_count(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("scalar converts to f64")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static
{
}

/// Scalar usable by the dense linear algebra in [`crate::frechet`].
pub trait LinalgScalar: Real + nalgebra::RealField + Copy {}

impl<T> LinalgScalar for T where T: Real + nalgebra::RealField + Copy {}

/// Converts between two scalar types through f64.
#[inline]
pub fn cast<A: Real, B: Real>(v: A) -> B {
    B::lit(v.as_f64())
}
