//! Two-variable means on ordered pairs `x <= y`: weighted arithmetic,
//! Matkowski (generalized quasi-arithmetic) and weighted quasi-arithmetic
//! means, plus composition `M∘(N1, N2)` and the squeezing sequence
//! `U_0 = max`, `U_k = M∘(M, U_{k-1})`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute width to which generator inverses are bisected.
pub const INVERSE_TOL: f64 = 1e-12;

/// Default number of grid points used to validate a [`MonotoneFn`].
pub const VALIDATION_GRID: usize = 1024;

/// Half-width of the sampling window used for unbounded domains.
const UNBOUNDED_SPAN: f64 = 64.0;

/// A real interval with open or closed ends. Infinite ends are always open.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Result<Interval> {
        if lo.is_nan() || hi.is_nan() || lo > hi || (lo == hi && !(lo_closed && hi_closed)) {
            return Err(Error::ParamOutOfRange(format!("empty interval ({lo}, {hi})")));
        }
        Ok(Interval { lo, hi, lo_closed: lo_closed && lo.is_finite(), hi_closed: hi_closed && hi.is_finite() })
    }

    pub fn real_line() -> Interval {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY, lo_closed: false, hi_closed: false }
    }

    /// `]0, +inf[`
    pub fn positive() -> Interval {
        Interval { lo: 0.0, hi: f64::INFINITY, lo_closed: false, hi_closed: false }
    }

    pub fn closed(lo: f64, hi: f64) -> Result<Interval> {
        Interval::new(lo, hi, true, true)
    }

    pub fn contains(&self, t: f64) -> bool {
        let above = if self.lo_closed { t >= self.lo } else { t > self.lo };
        let below = if self.hi_closed { t <= self.hi } else { t < self.hi };
        above && below
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        Interval::new(lo, hi, lo_closed, hi_closed).ok()
    }

    /// A bounded window of the interval used for sampling. Unbounded ends are
    /// cut `2 * 64` away from the finite end, or at `±64` on the whole line.
    pub fn window(&self) -> (f64, f64) {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => (self.lo, self.hi),
            (true, false) => (self.lo, self.lo + 2.0 * UNBOUNDED_SPAN),
            (false, true) => (self.hi - 2.0 * UNBOUNDED_SPAN, self.hi),
            (false, false) => (-UNBOUNDED_SPAN, UNBOUNDED_SPAN),
        }
    }

    /// Cell midpoints of a uniform partition of the window; never touches an
    /// endpoint, so open ends are safe.
    pub fn sample_midpoints(&self, count: usize) -> Vec<f64> {
        let (lo, hi) = self.window();
        let h = (hi - lo) / count as f64;
        (0..count).map(|k| lo + (k as f64 + 0.5) * h).collect()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lo_closed { '[' } else { '(' };
        let r = if self.hi_closed { ']' } else { ')' };
        write!(f, "{l}{}, {}{r}", self.lo, self.hi)
    }
}

/// Solves `g(t) = target` on `[lo, hi]` for increasing `g` by bisection to
/// width `tol`, finishing with one interpolation step inside the last bracket.
pub fn solve_increasing<G>(g: G, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    let mut glo = g(lo);
    let mut ghi = g(hi);
    if !(glo <= target && target <= ghi) {
        return Err(Error::BracketFailure { lo, hi });
    }
    if glo == target {
        return Ok(lo);
    }
    if ghi == target {
        return Ok(hi);
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if !(glo <= gm && gm <= ghi) {
            return Err(Error::BracketFailure { lo, hi });
        }
        if gm < target {
            lo = mid;
            glo = gm;
        } else if gm > target {
            hi = mid;
            ghi = gm;
        } else {
            return Ok(mid);
        }
    }
    if ghi > glo {
        let t = lo + (target - glo) / (ghi - glo) * (hi - lo);
        Ok(t.clamp(lo, hi))
    } else {
        Ok(lo + 0.5 * (hi - lo))
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A continuous, strictly increasing function on an interval, with an
/// optional derivative.
#[derive(Clone)]
pub struct MonotoneFn {
    label: String,
    domain: Interval,
    eval: RealFn,
    deriv: Option<RealFn>,
}

impl fmt::Debug for MonotoneFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonotoneFn")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("has_derivative", &self.deriv.is_some())
            .finish()
    }
}

impl MonotoneFn {
    /// Builds and validates on a [`VALIDATION_GRID`]-point grid.
    pub fn new<F, D>(label: impl Into<String>, domain: Interval, eval: F, deriv: Option<D>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::with_grid(label, domain, eval, deriv, VALIDATION_GRID)
    }

    pub fn with_grid<F, D>(
        label: impl Into<String>,
        domain: Interval,
        eval: F,
        deriv: Option<D>,
        grid: usize,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let fun = MonotoneFn {
            label: label.into(),
            domain,
            eval: Arc::new(eval),
            deriv: deriv.map(|d| Arc::new(d) as RealFn),
        };
        fun.validate(grid)?;
        Ok(fun)
    }

    fn trusted(label: String, domain: Interval, eval: RealFn, deriv: Option<RealFn>) -> Self {
        MonotoneFn { label, domain, eval, deriv }
    }

    pub fn identity() -> Self {
        Self::trusted("id".into(), Interval::real_line(), Arc::new(|t| t), Some(Arc::new(|_| 1.0)))
    }

    pub fn ln() -> Self {
        Self::trusted("ln".into(), Interval::positive(), Arc::new(f64::ln), Some(Arc::new(|t| 1.0 / t)))
    }

    pub fn exp() -> Self {
        Self::trusted("exp".into(), Interval::real_line(), Arc::new(f64::exp), Some(Arc::new(f64::exp)))
    }

    /// `t^p` on `]0, +inf[` for `p > 0`.
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::ParamOutOfRange(format!("pow exponent must be positive, got {p}")));
        }
        Ok(Self::trusted(
            format!("pow({p})"),
            Interval::positive(),
            Arc::new(move |t: f64| t.powf(p)),
            Some(Arc::new(move |t: f64| p * t.powf(p - 1.0))),
        ))
    }

    /// `t^3` on the whole line.
    pub fn cube() -> Self {
        Self::trusted("cube".into(), Interval::real_line(), Arc::new(|t| t * t * t), Some(Arc::new(|t| 3.0 * t * t)))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn deriv(&self, t: f64) -> Option<f64> {
        self.deriv.as_ref().map(|d| d(t))
    }

    pub fn has_derivative(&self) -> bool {
        self.deriv.is_some()
    }

    /// Checks strict increase, and positivity plus finite-difference agreement
    /// of the derivative when present, on `grid` interior points.
    pub fn validate(&self, grid: usize) -> Result<()> {
        let pts = self.domain.sample_midpoints(grid.max(2));
        let mut prev: Option<(f64, f64)> = None;
        for &t in &pts {
            let v = self.eval(t);
            if !v.is_finite() {
                return Err(Error::NonMonotone { label: self.label.clone(), at: t });
            }
            if let Some((_, pv)) = prev {
                if v <= pv {
                    return Err(Error::NonMonotone { label: self.label.clone(), at: t });
                }
            }
            prev = Some((t, v));
            if let Some(d) = self.deriv(t) {
                if !(d > 0.0) {
                    return Err(Error::NonMonotone { label: self.label.clone(), at: t });
                }
                let step = 1e-6 * t.abs().max(1.0);
                let (a, b) = (t - step, t + step);
                if self.domain.contains(a) && self.domain.contains(b) {
                    let fd = (self.eval(b) - self.eval(a)) / (b - a);
                    if (fd - d).abs() > 1e-5 * d.abs().max(fd.abs()) + 1e-6 {
                        return Err(Error::ParamOutOfRange(format!(
                            "derivative of `{}` disagrees with finite differences at {t}: {d} vs {fd}",
                            self.label
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `c * self` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::ParamOutOfRange(format!("scale factor must be positive, got {c}")));
        }
        let f = self.eval.clone();
        let deriv = self.deriv.clone().map(|d| Arc::new(move |t: f64| c * d(t)) as RealFn);
        Ok(Self::trusted(format!("{c}*{}", self.label), self.domain, Arc::new(move |t| c * f(t)), deriv))
    }

    /// Pointwise sum on the common domain.
    pub fn plus(&self, other: &MonotoneFn) -> Result<Self> {
        let domain = self.domain.intersect(&other.domain).ok_or_else(|| {
            Error::DomainViolation(format!("`{}` and `{}` have disjoint domains", self.label, other.label))
        })?;
        let (f, g) = (self.eval.clone(), other.eval.clone());
        let deriv = match (&self.deriv, &other.deriv) {
            (Some(df), Some(dg)) => {
                let (df, dg) = (df.clone(), dg.clone());
                Some(Arc::new(move |t: f64| df(t) + dg(t)) as RealFn)
            }
            _ => None,
        };
        Ok(Self::trusted(format!("{}+{}", self.label, other.label), domain, Arc::new(move |t| f(t) + g(t)), deriv))
    }

    /// `self^{-1}(target)`, searched for inside `[lo, hi]`.
    pub fn inverse_within(&self, target: f64, lo: f64, hi: f64) -> Result<f64> {
        solve_increasing(|t| self.eval(t), target, lo, hi, INVERSE_TOL)
    }
}

type MeanFn = Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync>;

/// The generator pair `(f, g)` of a Matkowski mean `(f+g)^{-1}(f(x)+g(y))`.
#[derive(Clone, Debug)]
pub struct Generators {
    pub f: MonotoneFn,
    pub g: MonotoneFn,
}

/// A two-variable mean, evaluated on ordered pairs `x <= y` only.
#[derive(Clone)]
pub struct Mean {
    label: String,
    domain: Interval,
    eval: MeanFn,
    strict: bool,
    continuous: bool,
    generators: Option<Generators>,
}

impl fmt::Debug for Mean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mean")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("strict", &self.strict)
            .field("continuous", &self.continuous)
            .finish()
    }
}

impl Mean {
    /// Wraps a user evaluator. The evaluator is only called with `x < y`,
    /// both inside `domain`.
    pub fn new<F>(label: impl Into<String>, domain: Interval, strict: bool, continuous: bool, eval: F) -> Self
    where
        F: Fn(f64, f64) -> Result<f64> + Send + Sync + 'static,
    {
        Mean { label: label.into(), domain, eval: Arc::new(eval), strict, continuous, generators: None }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn is_continuous(&self) -> bool {
        self.continuous
    }

    pub fn generators(&self) -> Option<&Generators> {
        self.generators.as_ref()
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !(self.domain.contains(x) && self.domain.contains(y)) {
            return Err(Error::DomainViolation(format!(
                "({x}, {y}) outside the domain {} of {}",
                self.domain, self.label
            )));
        }
        if x > y {
            return Err(Error::DomainViolation(format!("{} is evaluated on x <= y only, got ({x}, {y})", self.label)));
        }
        if x == y {
            return Ok(x);
        }
        (self.eval)(x, y)
    }

    /// Ordered pairs `x < y` from a `points`-point grid over the domain window.
    pub fn sample_pairs(&self, points: usize) -> Vec<(f64, f64)> {
        let pts = self.domain.sample_midpoints(points);
        let mut out = Vec::with_capacity(points * points.saturating_sub(1) / 2);
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                out.push((pts[i], pts[j]));
            }
        }
        out
    }
}

/// `A_s(x, y) = s x + (1 - s) y`; `A_1 = min`, `A_0 = max`.
pub fn weighted_arithmetic(s: f64) -> Result<Mean> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::ParamOutOfRange(format!("weight must lie in [0, 1], got {s}")));
    }
    let strict = s > 0.0 && s < 1.0;
    let generators = if strict {
        let id = MonotoneFn::identity();
        Some(Generators { f: id.scaled(s)?, g: id.scaled(1.0 - s)? })
    } else {
        None
    };
    Ok(Mean {
        label: format!("A({s})"),
        domain: Interval::real_line(),
        eval: Arc::new(move |x, y| Ok((s * x + (1.0 - s) * y).clamp(x, y))),
        strict,
        continuous: true,
        generators,
    })
}

pub fn min_mean() -> Mean {
    weighted_arithmetic(1.0).expect("valid weight").with_label("min")
}

pub fn max_mean() -> Mean {
    weighted_arithmetic(0.0).expect("valid weight").with_label("max")
}

/// `M_{f,g}(x, y) = (f+g)^{-1}(f(x) + g(y))`, inverted by bisection on `[x, y]`.
pub fn matkowski(f: &MonotoneFn, g: &MonotoneFn) -> Result<Mean> {
    let sum = f.plus(g)?;
    let domain = sum.domain();
    let (fe, ge) = (f.clone(), g.clone());
    let label = format!("MK({}, {})", f.label(), g.label());
    Ok(Mean {
        label,
        domain,
        eval: Arc::new(move |x, y| sum.inverse_within(fe.eval(x) + ge.eval(y), x, y)),
        strict: true,
        continuous: true,
        generators: Some(Generators { f: f.clone(), g: g.clone() }),
    })
}

/// `h^{-1}(s h(x) + (1 - s) h(y))`, equal to `M_{s h, (1-s) h}`.
pub fn quasi_arithmetic(h: &MonotoneFn, s: f64) -> Result<Mean> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::ParamOutOfRange(format!("weight must lie in ]0, 1[, got {s}")));
    }
    let generators = Generators { f: h.scaled(s)?, g: h.scaled(1.0 - s)? };
    let hh = h.clone();
    Ok(Mean {
        label: format!("QA({}, {s})", h.label()),
        domain: h.domain(),
        eval: Arc::new(move |x, y| hh.inverse_within(s * hh.eval(x) + (1.0 - s) * hh.eval(y), x, y)),
        strict: true,
        continuous: true,
        generators: Some(generators),
    })
}

/// Geometric mean `sqrt(x y)` as the quasi-arithmetic mean of `ln`.
pub fn geometric() -> Mean {
    quasi_arithmetic(&MonotoneFn::ln(), 0.5).expect("valid weight").with_label("G")
}

const COMPOSE_CHECK_POINTS: usize = 16;

/// `M∘(N1, N2)(x, y) = M(N1(x, y), N2(x, y))`.
///
/// `N1 <= N2` is checked on a sample grid here and again at every
/// evaluation. The result is flagged strict when `M` is strict and no sampled
/// pair had `N1 = N2`.
pub fn compose(m: &Mean, n1: &Mean, n2: &Mean) -> Result<Mean> {
    let domain = n1
        .domain
        .intersect(&n2.domain)
        .and_then(|d| d.intersect(&m.domain))
        .ok_or_else(|| Error::DomainViolation("composed means have disjoint domains".into()))?;
    let probe = Mean::new("", domain, false, false, |x, _| Ok(x));
    let mut ties = false;
    for (x, y) in probe.sample_pairs(COMPOSE_CHECK_POINTS) {
        let (a, b) = (n1.eval(x, y)?, n2.eval(x, y)?);
        if a > b {
            return Err(Error::OrderViolation { x, y, lower: a, upper: b });
        }
        ties |= a == b;
    }
    let (mm, inner1, inner2) = (m.clone(), n1.clone(), n2.clone());
    Ok(Mean {
        label: format!("{}∘({}, {})", m.label, n1.label, n2.label),
        domain,
        eval: Arc::new(move |x, y| {
            let (a, b) = (inner1.eval(x, y)?, inner2.eval(x, y)?);
            if a > b {
                return Err(Error::OrderViolation { x, y, lower: a, upper: b });
            }
            mm.eval(a, b)
        }),
        strict: m.strict && !ties,
        continuous: m.continuous && n1.continuous && n2.continuous,
        generators: None,
    })
}

/// `U_0 = max`, `U_k = M∘(M, U_{k-1})` for `k = 1..=n`; decreases to `M`.
pub fn squeeze_sequence(m: &Mean, n: usize) -> Result<Vec<Mean>> {
    if !(m.strict && m.continuous) {
        return Err(Error::PreconditionViolation(format!("{} must be strict and continuous", m.label)));
    }
    let mut seq = vec![max_mean()];
    for k in 1..=n {
        let next = compose(m, m, &seq[k - 1])?.with_label(format!("U{k}[{}]", m.label));
        seq.push(next);
    }
    Ok(seq)
}
