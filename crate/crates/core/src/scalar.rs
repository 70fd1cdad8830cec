use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;

/// Scalar field the numerical kernels are generic over.
///
/// Implemented for `f32` and `f64`. Numerical thresholds are written as `f64`
/// literals and widened to a precision floor with [`Real::tol`] so that the
/// same code runs in single precision with proportionally looser checks.
pub trait Real: RealField + Copy + Debug + Display + LowerExp + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    fn as_f64(self) -> f64;

    /// `x`, but never below `1000 * machine epsilon`.
    fn tol(x: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(1e3);
        Self::lit(x).max(floor)
    }
}

impl Real for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}
