//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar the estimator can run on (`f32` or `f64`).
///
/// Everything numeric in the crate is generic over this trait; the
/// `*F64` aliases at the crate root pick the common instantiation.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Display + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal or computed constant.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}
