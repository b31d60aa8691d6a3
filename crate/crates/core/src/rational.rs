//! Arbitrary-precision rationals. `BigRational` keeps values in lowest terms
//! with a positive denominator, which the parity classification relies on.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

pub type ExactRational = BigRational;

/// `p/q` as an exact rational. Panics if `q == 0`.
pub fn rat(p: i64, q: i64) -> ExactRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Parses `p/q`, an integer, or a finite decimal such as `0.375`.
pub fn parse_rational(text: &str) -> Result<ExactRational> {
    let text = text.trim();
    let bad = || Error::ParamOutOfRange(format!("not a rational number: `{text}`"));
    if let Some((p, q)) = text.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().map_err(|_| bad())?;
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    let value = BigRational::new(numer, denom);
    Ok(if negative { -value } else { value })
}

/// Exact value of a finite `f64`.
pub fn from_f64(v: f64) -> Option<ExactRational> {
    BigRational::from_float(v)
}

pub fn is_in_open_unit_interval(q: &ExactRational) -> bool {
    q > &ExactRational::zero() && q < &ExactRational::one()
}
