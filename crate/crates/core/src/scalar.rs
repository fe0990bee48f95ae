use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits as nt;

/// Floating-point element type of every matrix in the crate: `f32` or `f64`.
///
/// The solver is normally run at `f64`; `f32` is the storage precision used by
/// the on-disk containers.
pub trait Scalar:
    nt::Float
    + nt::FromPrimitive
    + nt::ToPrimitive
    + nt::NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn from_f64_lossy(x: f64) -> Self {
        <Self as nt::NumCast>::from(x).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
