//! Extended reals with the two resolutions of `(-inf) + (+inf)`, and the
//! upper/lower second-order divided differences built on them.
//!
//! Everything here is generic over [`ExtScalar`], implemented for `f64` and
//! for [`ExactRational`], so the same code drives both the floating-point
//! checks and the decision-exact ones.

use std::fmt;
use std::ops::Neg;

use num_traits::{Num, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::rational::ExactRational;

/// A value of the extended real line. Variant order gives the total order
/// `NegInf < Finite(_) < PosInf`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Extended<T> {
    NegInf,
    Finite(T),
    PosInf,
}

/// Extended real backed by a finite `f64`.
pub type XReal = Extended<f64>;

/// Extended real backed by an exact rational.
pub type XRational = Extended<ExactRational>;

/// Scalars usable as the finite part of an [`Extended`] value.
pub trait ExtScalar: Clone + PartialOrd + Num + Signed + fmt::Debug {
    /// Wraps a computed value, mapping float overflow to the infinite tags.
    fn extend(self) -> Extended<Self>;

    /// Rounding allowance used when comparing quantities assembled from terms
    /// of magnitude `scale`. Zero for exact scalars.
    fn rounding_slack(scale: &Self) -> Self;

    /// Looser allowance used by the sampled convexity checks, where terms are
    /// themselves results of mean evaluations. Zero for exact scalars.
    fn comparison_slack(scale: &Self) -> Self;
}

impl ExtScalar for f64 {
    fn extend(self) -> XReal {
        XReal::new(self)
    }

    fn rounding_slack(scale: &f64) -> f64 {
        1e-12 * scale
    }

    fn comparison_slack(scale: &f64) -> f64 {
        1e-9 * scale
    }
}

impl ExtScalar for ExactRational {
    fn extend(self) -> XRational {
        Extended::Finite(self)
    }

    fn rounding_slack(_scale: &ExactRational) -> ExactRational {
        ExactRational::zero()
    }

    fn comparison_slack(_scale: &ExactRational) -> ExactRational {
        ExactRational::zero()
    }
}

impl XReal {
    /// Wraps an `f64`; `±inf` become the infinite tags.
    ///
    /// Panics on NaN, which has no place on the extended line.
    pub fn new(v: f64) -> XReal {
        assert!(!v.is_nan(), "NaN is not an extended real");
        if v == f64::INFINITY {
            Extended::PosInf
        } else if v == f64::NEG_INFINITY {
            Extended::NegInf
        } else {
            Extended::Finite(v)
        }
    }

    /// The value as an `f64`, infinities included.
    pub fn to_f64(&self) -> f64 {
        match self {
            Extended::NegInf => f64::NEG_INFINITY,
            Extended::Finite(v) => *v,
            Extended::PosInf => f64::INFINITY,
        }
    }
}

impl XRational {
    /// Nearest `f64` rendering of an exact extended value.
    pub fn to_xreal(&self) -> XReal {
        match self {
            Extended::NegInf => Extended::NegInf,
            Extended::PosInf => Extended::PosInf,
            Extended::Finite(q) => XReal::new(q.to_f64().unwrap_or(f64::NAN)),
        }
    }
}

impl<T> Extended<T> {
    pub fn finite(&self) -> Option<&T> {
        match self {
            Extended::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }
}

impl<T: ExtScalar> Extended<T> {
    pub fn zero() -> Self {
        Extended::Finite(T::zero())
    }

    /// Multiplies by a nonzero real; infinities keep or flip sign with `c`.
    pub fn scale(&self, c: &T) -> Self {
        debug_assert!(!c.is_zero());
        match self {
            Extended::Finite(v) => (v.clone() * c.clone()).extend(),
            inf if c.is_positive() => inf.clone(),
            inf => -inf.clone(),
        }
    }
}

impl<T: Neg<Output = T>> Neg for Extended<T> {
    type Output = Extended<T>;

    fn neg(self) -> Self::Output {
        match self {
            Extended::NegInf => Extended::PosInf,
            Extended::Finite(v) => Extended::Finite(-v),
            Extended::PosInf => Extended::NegInf,
        }
    }
}

impl<T: fmt::Display> fmt::Display for Extended<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::NegInf => f.write_str("-inf"),
            Extended::Finite(v) => v.fmt(f),
            Extended::PosInf => f.write_str("+inf"),
        }
    }
}

/// Upper sum: ordinary addition, except that any `+inf` summand wins.
pub fn upper_sum<T: ExtScalar>(a: &Extended<T>, b: &Extended<T>) -> Extended<T> {
    use Extended::*;
    match (a, b) {
        (PosInf, _) | (_, PosInf) => PosInf,
        (NegInf, _) | (_, NegInf) => NegInf,
        (Finite(p), Finite(q)) => (p.clone() + q.clone()).extend(),
    }
}

/// Lower sum: ordinary addition, except that any `-inf` summand wins.
pub fn lower_sum<T: ExtScalar>(a: &Extended<T>, b: &Extended<T>) -> Extended<T> {
    use Extended::*;
    match (a, b) {
        (NegInf, _) | (_, NegInf) => NegInf,
        (PosInf, _) | (_, PosInf) => PosInf,
        (Finite(p), Finite(q)) => (p.clone() + q.clone()).extend(),
    }
}

/// The three weighted terms `f(p) / prod(p - other)` of a second-order
/// divided difference, in argument order.
pub fn dd_terms<T, F>(x: &T, y: &T, z: &T, f: F) -> Result<[Extended<T>; 3]>
where
    T: ExtScalar,
    F: Fn(&T) -> Extended<T>,
{
    terms_from_values(x, y, z, &f(x), &f(y), &f(z))
}

pub(crate) fn terms_from_values<T: ExtScalar>(
    x: &T,
    y: &T,
    z: &T,
    fx: &Extended<T>,
    fy: &Extended<T>,
    fz: &Extended<T>,
) -> Result<[Extended<T>; 3]> {
    if x == y || y == z || x == z {
        return Err(Error::DistinctnessViolation);
    }
    let dx = (y.clone() - x.clone()) * (z.clone() - x.clone());
    let dy = (x.clone() - y.clone()) * (z.clone() - y.clone());
    let dz = (x.clone() - z.clone()) * (y.clone() - z.clone());
    // Distinct floats can still have a product that underflows.
    if dx.is_zero() || dy.is_zero() || dz.is_zero() {
        return Err(Error::DistinctnessViolation);
    }
    Ok([term(fx, &dx), term(fy, &dy), term(fz, &dz)])
}

fn term<T: ExtScalar>(value: &Extended<T>, denom: &T) -> Extended<T> {
    match value {
        Extended::Finite(v) => (v.clone() / denom.clone()).extend(),
        inf if denom.is_positive() => inf.clone(),
        inf => -inf.clone(),
    }
}

pub(crate) fn fold_lower<T: ExtScalar>(terms: &[Extended<T>; 3]) -> Extended<T> {
    lower_sum(&lower_sum(&terms[0], &terms[1]), &terms[2])
}

pub(crate) fn fold_upper<T: ExtScalar>(terms: &[Extended<T>; 3]) -> Extended<T> {
    upper_sum(&upper_sum(&terms[0], &terms[1]), &terms[2])
}

/// Lower second-order divided difference `⌊x, y, z; f⌋`.
pub fn lower_dd<T, F>(x: &T, y: &T, z: &T, f: F) -> Result<Extended<T>>
where
    T: ExtScalar,
    F: Fn(&T) -> Extended<T>,
{
    dd_terms(x, y, z, f).map(|t| fold_lower(&t))
}

/// Upper second-order divided difference `⌈x, y, z; f⌉`.
pub fn upper_dd<T, F>(x: &T, y: &T, z: &T, f: F) -> Result<Extended<T>>
where
    T: ExtScalar,
    F: Fn(&T) -> Extended<T>,
{
    dd_terms(x, y, z, f).map(|t| fold_upper(&t))
}

/// Both divided differences at one triple.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleDD<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub lower: Extended<T>,
    pub upper: Extended<T>,
}

pub fn triple_dd<T, F>(x: &T, y: &T, z: &T, f: F) -> Result<TripleDD<T>>
where
    T: ExtScalar,
    F: Fn(&T) -> Extended<T>,
{
    let terms = dd_terms(x, y, z, f)?;
    Ok(TripleDD { x: x.clone(), y: y.clone(), z: z.clone(), lower: fold_lower(&terms), upper: fold_upper(&terms) })
}

/// The four quantities of the (extended) chain inequality for one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainReport<T> {
    /// `min_j ⌊x_{j-1}, x_j, x_{j+1}; f⌋`
    pub min_lower: Extended<T>,
    /// `⌊x_0, x_i, x_{n+1}; f⌋`
    pub lower: Extended<T>,
    /// `⌈x_0, x_i, x_{n+1}; f⌉`
    pub upper: Extended<T>,
    /// `max_j ⌈x_{j-1}, x_j, x_{j+1}; f⌉`
    pub max_upper: Extended<T>,
    /// Whether `min_lower <= lower <= upper <= max_upper`, up to
    /// [`ExtScalar::rounding_slack`] of the largest term involved.
    pub holds: bool,
}

/// Evaluates the extended chain inequality on `x_0 < ... < x_{n+1}` at the
/// interior index `i` (`1 <= i <= n`).
pub fn check_chain<T, F>(points: &[T], i: usize, f: F) -> Result<ChainReport<T>>
where
    T: ExtScalar,
    F: Fn(&T) -> Extended<T>,
{
    if points.len() < 3 {
        return Err(Error::ParamOutOfRange(format!("chain needs at least 3 points, got {}", points.len())));
    }
    for w in points.windows(2) {
        if w[0] == w[1] {
            return Err(Error::DistinctnessViolation);
        }
        if w[0] > w[1] {
            return Err(Error::ParamOutOfRange("chain points must increase".into()));
        }
    }
    let n = points.len() - 2;
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, max: n });
    }

    let values: Vec<Extended<T>> = points.iter().map(&f).collect();
    let mut scale = T::zero();
    let mut track = |terms: &[Extended<T>; 3]| {
        for t in terms {
            if let Extended::Finite(v) = t {
                if v.abs() > scale {
                    scale = v.abs();
                }
            }
        }
    };

    let mut min_lower = Extended::PosInf;
    let mut max_upper = Extended::NegInf;
    for j in 1..=n {
        let terms =
            terms_from_values(&points[j - 1], &points[j], &points[j + 1], &values[j - 1], &values[j], &values[j + 1])?;
        track(&terms);
        let lo = fold_lower(&terms);
        let hi = fold_upper(&terms);
        if lo < min_lower {
            min_lower = lo;
        }
        if hi > max_upper {
            max_upper = hi;
        }
    }
    let outer = terms_from_values(&points[0], &points[i], &points[n + 1], &values[0], &values[i], &values[n + 1])?;
    track(&outer);
    let lower = fold_lower(&outer);
    let upper = fold_upper(&outer);

    let slack = T::rounding_slack(&scale);
    let holds = leq_within(&min_lower, &lower, &slack)
        && leq_within(&lower, &upper, &slack)
        && leq_within(&upper, &max_upper, &slack);
    Ok(ChainReport { min_lower, lower, upper, max_upper, holds })
}

/// `a <= b`, allowing finite values to exceed by `slack`.
pub(crate) fn leq_within<T: ExtScalar>(a: &Extended<T>, b: &Extended<T>, slack: &T) -> bool {
    match (a, b) {
        (Extended::Finite(p), Extended::Finite(q)) => p.clone() <= q.clone() + slack.clone(),
        _ => a <= b,
    }
}
