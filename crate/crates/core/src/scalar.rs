//! Floating-point scalar abstraction shared by the geometry and transform code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumCast, ToPrimitive};

/// A real scalar usable for box coordinates: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Tolerance for geometric predicates (collinearity, containment, thin boxes).
    const EPS_GEOM: Self;

    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts to any float scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn lit(v: f64) -> Self {
        Self::from_f64_lossy(v)
    }
}

impl Scalar for f64 {
    const EPS_GEOM: f64 = 1e-9;
}

impl Scalar for f32 {
    // f32 carries ~7 significant digits; pixel coordinates up to ~1e4 need a coarser tolerance.
    const EPS_GEOM: f32 = 1e-3;
}
