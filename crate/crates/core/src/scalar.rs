//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All estimators, operators and classifiers are written against [`Real`],
//! which is implemented for `f32` and `f64`. File formats always store values
//! as `f64` decimals, which round-trips both widths exactly.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Widens to `f64`. Exact for both supported types.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn count(n: usize) -> Self {
        nalgebra::convert(n as f64)
    }

    #[inline]
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `n * machine_epsilon`, a convenient relative tolerance that scales with
/// the precision of `S`.
#[inline]
pub(crate) fn eps_tol<S: Real>(n: f64) -> S {
    S::default_epsilon() * S::lit(n)
}
