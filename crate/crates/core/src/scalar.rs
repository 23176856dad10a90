//! Scalar abstraction for the numeric code paths (models, datasets, data
//! generation). Currency is never a `Scalar`; it is always integer micro-units.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A floating-point type usable as model parameter and feature storage.
///
/// `Display` must produce the shortest text that parses back to the same
/// value; this holds for `f32` and `f64` in std and is what makes the
/// canonical model and dataset encodings round-trip bit-exactly.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Display + FromStr + Debug + Default + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Display
        + FromStr
        + Debug
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Parses a scalar from canonical decimal text, rejecting non-finite values.
pub fn parse_finite<F: Scalar>(text: &str) -> Option<F> {
    let v: F = text.trim().parse().ok()?;
    v.is_finite().then_some(v)
}
