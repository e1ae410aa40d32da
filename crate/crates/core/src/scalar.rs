use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Real scalar type the numeric routines are written against.
///
/// Implemented for `f32` and `f64`. Literal constants go through [`Scalar::lit`].
pub trait Scalar:
    Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Coefficients below this magnitude are dropped from polynomials.
    #[inline]
    fn prune_threshold() -> Self {
        Self::lit(1e-12)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
