//! The scalar abstraction the numerical core is generic over.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
///
/// Everything numeric in this crate is written against this trait; the
/// experiment pipeline instantiates it with `f64` (see the aliases at the
/// crate root).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + core::ops::AddAssign
    + core::ops::SubAssign
    + core::ops::MulAssign
    + core::fmt::Debug
    + core::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` literal. Panics on values not representable at all
    /// (never the case for finite literals).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Lossy view as `f64` (exact for `f64`, widening for `f32`).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
