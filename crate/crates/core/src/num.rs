//! Scalar abstraction for ratio-valued metrics.
//!
//! Locality metrics are quotients of alert and line counts. They can be
//! evaluated in floating point for bulk reporting, or exactly as rationals
//! when the result must be compared bit-for-bit.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Num, ToPrimitive};

/// A field-like number type that ratio metrics can be computed in.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync {
    /// Embed a non-negative count.
    fn from_count(n: usize) -> Self;

    /// Lossy conversion for rendering and float statistics.
    fn to_f64(&self) -> f64;

    /// `num / den`; callers guarantee `den > 0`.
    fn ratio(num: usize, den: usize) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }

    /// Exact textual form when the type has one (`"13/18"`), `None` for floats.
    fn exact_repr(&self) -> Option<String> {
        None
    }
}

impl Scalar for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }
    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for Ratio<i64> {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(i64::try_from(n).expect("count exceeds i64"))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn exact_repr(&self) -> Option<String> {
        Some(self.to_string())
    }
}

impl Scalar for BigRational {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(BigInt::from(n))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn exact_repr(&self) -> Option<String> {
        Some(self.to_string())
    }
}

/// Render a float with at least 12 significant digits in positional notation.
///
/// Output is locale-independent and deterministic, so it is safe to diff
/// between runs.
pub fn render_decimal(value: f64) -> String {
    if !value.is_finite() {
        return "null".to_owned();
    }
    if value == 0.0 {
        return "0".to_owned();
    }
    const SIG: i32 = 12;
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (SIG - 1 - magnitude).clamp(0, 30) as usize;
    let s = format!("{value:.decimals$}");
    if s.starts_with("-0") && s.trim_start_matches(['-', '0', '.']).is_empty() {
        s[1..].to_owned()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn ratio_is_exact_for_rationals() {
        let r = <Rational64 as Scalar>::ratio(13, 18);
        assert_eq!(r, Rational64::new(13, 18));
        assert_eq!(r.exact_repr().as_deref(), Some("13/18"));
        let b = <BigRational as Scalar>::ratio(6, 12);
        assert_eq!(b.exact_repr().as_deref(), Some("1/2"));
    }

    #[test]
    fn floats_have_no_exact_form() {
        assert_eq!(<f64 as Scalar>::ratio(1, 4), 0.25);
        assert!(0.25f64.exact_repr().is_none());
    }

    #[test]
    fn render_has_twelve_significant_digits() {
        assert_eq!(render_decimal(13.0 / 18.0), "0.722222222222");
        assert_eq!(render_decimal(0.5), "0.500000000000");
        assert_eq!(render_decimal(1.0), "1.00000000000");
        assert_eq!(render_decimal(14.0), "14.0000000000");
        assert_eq!(render_decimal(0.0), "0");
        assert_eq!(render_decimal(3.0 / 13.0), "0.230769230769");
        assert_eq!(render_decimal(f64::NAN), "null");
    }
}
