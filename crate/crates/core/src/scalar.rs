//! Scalar abstraction shared by the estimation kernels.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point type the estimators and diagnostics are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances quoted for double precision
/// are widened to a multiple of the type's machine epsilon through [`Real::tol`].
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Machine epsilon of the type, as `f64`.
    const EPSILON: f64;

    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// `base`, floored at 64 ulps of the type.
    fn tol(base: f64) -> Self {
        Self::lit(base.max(64.0 * Self::EPSILON))
    }
}

impl Real for f32 {
    const EPSILON: f64 = f32::EPSILON as f64;
}

impl Real for f64 {
    const EPSILON: f64 = f64::EPSILON;
}
