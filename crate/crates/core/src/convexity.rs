//! Lower and upper M-convexity of extended-real functions, checked through
//! the divided differences `⌊x, M(x,y), y; f⌋` and `⌈x, M(x,y), y; f⌉`, both
//! on sampled float pairs and decision-exactly on rational grids; closure of
//! convexity parameter sets; and the rational family separating `A_t` from
//! `A_{1-t}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::descend::{solve_fixed_point, DescendantProblem, SolveOptions};
use crate::error::{Error, Result};
use crate::means::{Interval, Mean};
use crate::rational::{from_f64, is_in_open_unit_interval, ExactRational};
use crate::xreal::{
    fold_lower, fold_upper, leq_within, lower_sum, terms_from_values, upper_sum, ExtScalar, Extended, XRational, XReal,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Convexity {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    NoViolation,
    Counterexample,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::NoViolation => "NO_VIOLATION",
            Verdict::Counterexample => "COUNTEREXAMPLE",
        })
    }
}

/// A triple `(x, m, y)` with `m = M(x, y)` where the divided difference is
/// negative. `lhs`/`rhs` are the two sides of the equivalent inequality
/// `f(m) <= (y-m)/(y-x) f(x) ± (m-x)/(y-x) f(y)`, with the upper or lower sum.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness<T> {
    pub x: T,
    pub m: T,
    pub y: T,
    pub dd: Extended<T>,
    pub lhs: Extended<T>,
    pub rhs: Extended<T>,
}

impl<T: ExtScalar> Witness<T> {
    /// Re-evaluates `f` at the triple and reports whether the violation stands.
    pub fn reverify<F: Fn(&T) -> Extended<T>>(&self, f: F, kind: Convexity) -> Result<bool> {
        Ok(judge(&self.x, &self.m, &self.y, &f(&self.x), &f(&self.m), &f(&self.y), kind)?.is_some())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityReport<T> {
    pub kind: Convexity,
    pub verdict: Verdict,
    pub samples_checked: usize,
    pub witness: Option<Witness<T>>,
    /// Seed of a random sampler, if one was used.
    pub seed: Option<u64>,
}

/// An interval with exact rational endpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalInterval {
    pub lo: ExactRational,
    pub hi: ExactRational,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl RationalInterval {
    pub fn new(lo: ExactRational, hi: ExactRational, lo_closed: bool, hi_closed: bool) -> Result<Self> {
        if lo > hi || (lo == hi && !(lo_closed && hi_closed)) {
            return Err(Error::ParamOutOfRange(format!("empty interval ({lo}, {hi})")));
        }
        Ok(RationalInterval { lo, hi, lo_closed, hi_closed })
    }

    pub fn closed(lo: ExactRational, hi: ExactRational) -> Result<Self> {
        Self::new(lo, hi, true, true)
    }

    pub fn contains(&self, q: &ExactRational) -> bool {
        let above = if self.lo_closed { q >= &self.lo } else { q > &self.lo };
        let below = if self.hi_closed { q <= &self.hi } else { q < &self.hi };
        above && below
    }

    pub fn to_interval(&self) -> Interval {
        let lo = self.lo.to_f64().unwrap_or(f64::NEG_INFINITY);
        let hi = self.hi.to_f64().unwrap_or(f64::INFINITY);
        Interval { lo, hi, lo_closed: self.lo_closed, hi_closed: self.hi_closed }
    }
}

impl fmt::Display for RationalInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lo_closed { '[' } else { '(' };
        let r = if self.hi_closed { ']' } else { ')' };
        write!(f, "{l}{}, {}{r}", self.lo, self.hi)
    }
}

type RealEval = Arc<dyn Fn(f64) -> XReal + Send + Sync>;
type ExactEval = Arc<dyn Fn(&ExactRational) -> XRational + Send + Sync>;

/// `f: I -> [-inf, +inf]`, optionally with an exact evaluator on rationals.
#[derive(Clone)]
pub struct ExtendedFunction {
    label: String,
    domain: Interval,
    eval: RealEval,
    exact: Option<(RationalInterval, ExactEval)>,
}

impl fmt::Debug for ExtendedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExtendedFunction")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("exact_domain", &self.exact.as_ref().map(|e| &e.0))
            .finish()
    }
}

impl ExtendedFunction {
    pub fn new<F>(label: impl Into<String>, domain: Interval, eval: F) -> Self
    where
        F: Fn(f64) -> XReal + Send + Sync + 'static,
    {
        ExtendedFunction { label: label.into(), domain, eval: Arc::new(eval), exact: None }
    }

    /// Wraps a real function; overflow to `±inf` becomes the infinite tags.
    pub fn from_real<F>(label: impl Into<String>, domain: Interval, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(label, domain, move |t| XReal::new(f(t)))
    }

    /// A function given only on rationals; floats are converted exactly.
    pub fn from_exact<F>(label: impl Into<String>, domain: RationalInterval, exact: F) -> Self
    where
        F: Fn(&ExactRational) -> XRational + Send + Sync + 'static,
    {
        let exact: ExactEval = Arc::new(exact);
        let inner = exact.clone();
        ExtendedFunction {
            label: label.into(),
            domain: domain.to_interval(),
            eval: Arc::new(move |t| match from_f64(t) {
                Some(q) => inner(&q).to_xreal(),
                None => XReal::new(t),
            }),
            exact: Some((domain, exact)),
        }
    }

    pub fn with_exact<F>(mut self, domain: RationalInterval, exact: F) -> Self
    where
        F: Fn(&ExactRational) -> XRational + Send + Sync + 'static,
    {
        self.exact = Some((domain, Arc::new(exact)));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn eval(&self, t: f64) -> XReal {
        (self.eval)(t)
    }

    pub fn exact_domain(&self) -> Option<&RationalInterval> {
        self.exact.as_ref().map(|e| &e.0)
    }

    pub fn eval_exact(&self, q: &ExactRational) -> Option<XRational> {
        self.exact.as_ref().map(|(_, e)| e(q))
    }

    /// `-f`, exact evaluator included.
    pub fn negated(&self) -> Self {
        let f = self.eval.clone();
        ExtendedFunction {
            label: format!("-({})", self.label),
            domain: self.domain,
            eval: Arc::new(move |t| -f(t)),
            exact: self.exact.as_ref().map(|(d, e)| {
                let e = e.clone();
                (d.clone(), Arc::new(move |q: &ExactRational| -e(q)) as ExactEval)
            }),
        }
    }
}

/// Source of ordered sample pairs `x < y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    /// All ordered pairs of `points` cell midpoints of the domain window.
    Grid { points: usize },
    /// `count` uniform pairs from a ChaCha8 stream seeded with `seed`.
    Random { count: usize, seed: u64 },
}

impl Sampler {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Sampler::Grid { .. } => None,
            Sampler::Random { seed, .. } => Some(*seed),
        }
    }

    pub fn pairs(&self, domain: &Interval) -> Vec<(f64, f64)> {
        match *self {
            Sampler::Grid { points } => {
                let pts = domain.sample_midpoints(points);
                let mut out = Vec::new();
                for i in 0..pts.len() {
                    for j in i + 1..pts.len() {
                        out.push((pts[i], pts[j]));
                    }
                }
                out
            }
            Sampler::Random { count, seed } => {
                let (lo, hi) = domain.window();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = Vec::with_capacity(count);
                while out.len() < count {
                    let a: f64 = rng.random_range(lo..hi);
                    let b: f64 = rng.random_range(lo..hi);
                    if a != b && domain.contains(a) && domain.contains(b) {
                        out.push((a.min(b), a.max(b)));
                    }
                }
                out
            }
        }
    }
}

fn max_abs<'a, T: ExtScalar + 'a>(values: impl IntoIterator<Item = &'a Extended<T>>) -> T {
    let mut scale = T::zero();
    for v in values {
        if let Extended::Finite(q) = v {
            if q.abs() > scale {
                scale = q.abs();
            }
        }
    }
    scale
}

/// The inequality form `f(m) <= α f(x) ⊎/∔ β f(y)`; for the lower kind also
/// `f(x), f(y) > -inf` and `f(m) < +inf`. Returns `(violated, lhs, rhs)`.
fn efc_judge<T: ExtScalar>(
    x: &T,
    m: &T,
    y: &T,
    fx: &Extended<T>,
    fm: &Extended<T>,
    fy: &Extended<T>,
    kind: Convexity,
) -> (bool, Extended<T>, Extended<T>) {
    let w = y.clone() - x.clone();
    let alpha = (y.clone() - m.clone()) / w.clone();
    let beta = (m.clone() - x.clone()) / w;
    let (a, b) = (fx.scale(&alpha), fy.scale(&beta));
    let rhs = match kind {
        Convexity::Upper => upper_sum(&a, &b),
        Convexity::Lower => lower_sum(&a, &b),
    };
    let slack = T::comparison_slack(&max_abs([&a, fm, &b]));
    let fails = !leq_within(fm, &rhs, &slack);
    let violated = match kind {
        Convexity::Upper => fails,
        Convexity::Lower => fails || *fx == Extended::NegInf || *fy == Extended::NegInf || *fm == Extended::PosInf,
    };
    (violated, fm.clone(), rhs)
}

/// Divided-difference verdict at `(x, m, y)`; a witness when negative beyond
/// the comparison slack.
fn judge<T: ExtScalar>(
    x: &T,
    m: &T,
    y: &T,
    fx: &Extended<T>,
    fm: &Extended<T>,
    fy: &Extended<T>,
    kind: Convexity,
) -> Result<Option<Witness<T>>> {
    let terms = terms_from_values(x, m, y, fx, fm, fy)?;
    let dd = match kind {
        Convexity::Lower => fold_lower(&terms),
        Convexity::Upper => fold_upper(&terms),
    };
    let slack = T::comparison_slack(&max_abs(terms.iter()));
    if leq_within(&Extended::zero(), &dd, &slack) {
        return Ok(None);
    }
    let (_, lhs, rhs) = efc_judge(x, m, y, fx, fm, fy, kind);
    Ok(Some(Witness { x: x.clone(), m: m.clone(), y: y.clone(), dd, lhs, rhs }))
}

fn common_domain(f: &ExtendedFunction, means: &[&Mean]) -> Result<Interval> {
    let mut d = f.domain();
    for m in means {
        d = d.intersect(&m.domain()).ok_or_else(|| {
            Error::DomainViolation(format!("domains of {} and {} are disjoint", f.label(), m.label()))
        })?;
    }
    Ok(d)
}

/// Samples `(x, M(x, y), y)` and stops at the first negative divided
/// difference. Pairs where `M(x, y)` rounds onto an endpoint are skipped.
pub fn check_convex(
    f: &ExtendedFunction,
    m: &Mean,
    sampler: &Sampler,
    kind: Convexity,
) -> Result<ConvexityReport<f64>> {
    if !m.is_strict() {
        return Err(Error::PreconditionViolation(format!("{} is not a strict mean", m.label())));
    }
    let domain = common_domain(f, &[m])?;
    let mut checked = 0;
    for (x, y) in sampler.pairs(&domain) {
        let mid = m.eval(x, y)?;
        if !(x < mid && mid < y) {
            continue;
        }
        checked += 1;
        if let Some(w) = judge(&x, &mid, &y, &f.eval(x), &f.eval(mid), &f.eval(y), kind)? {
            return Ok(ConvexityReport {
                kind,
                verdict: Verdict::Counterexample,
                samples_checked: checked,
                witness: Some(w),
                seed: sampler.seed(),
            });
        }
    }
    Ok(ConvexityReport {
        kind,
        verdict: Verdict::NoViolation,
        samples_checked: checked,
        witness: None,
        seed: sampler.seed(),
    })
}

pub fn check_lower_convex(f: &ExtendedFunction, m: &Mean, sampler: &Sampler) -> Result<ConvexityReport<f64>> {
    check_convex(f, m, sampler, Convexity::Lower)
}

pub fn check_upper_convex(f: &ExtendedFunction, m: &Mean, sampler: &Sampler) -> Result<ConvexityReport<f64>> {
    check_convex(f, m, sampler, Convexity::Upper)
}

/// Whether the divided-difference verdict and the inequality-form verdict
/// agree on every sampled pair.
pub fn efc_equivalent_check(f: &ExtendedFunction, m: &Mean, sampler: &Sampler, kind: Convexity) -> Result<bool> {
    if !m.is_strict() {
        return Err(Error::PreconditionViolation(format!("{} is not a strict mean", m.label())));
    }
    let domain = common_domain(f, &[m])?;
    for (x, y) in sampler.pairs(&domain) {
        let mid = m.eval(x, y)?;
        if !(x < mid && mid < y) {
            continue;
        }
        let (fx, fm, fy) = (f.eval(x), f.eval(mid), f.eval(y));
        let by_dd = judge(&x, &mid, &y, &fx, &fm, &fy, kind)?.is_some();
        let (by_efc, _, _) = efc_judge(&x, &mid, &y, &fx, &fm, &fy, kind);
        if by_dd != by_efc {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All `p/q` in the interval with `1 <= q <= max_den`, ascending.
pub fn farey_grid(interval: &RationalInterval, max_den: u64) -> Vec<ExactRational> {
    let mut out = BTreeSet::new();
    for q in 1..=max_den {
        let qb = BigInt::from(q);
        let lo = (&interval.lo * &qb).ceil().to_integer();
        let hi = (&interval.hi * &qb).floor().to_integer();
        let mut p = lo;
        while p <= hi {
            let r = ExactRational::new(p.clone(), qb.clone());
            if interval.contains(&r) {
                out.insert(r);
            }
            p += 1;
        }
    }
    out.into_iter().collect()
}

fn exact_parts(f: &ExtendedFunction, t: &ExactRational, grid: &[ExactRational]) -> Result<Vec<XRational>> {
    let domain = f
        .exact_domain()
        .ok_or_else(|| Error::PreconditionViolation(format!("{} has no exact evaluator", f.label())))?;
    if !is_in_open_unit_interval(t) {
        return Err(Error::ParamOutOfRange(format!("weight must lie in ]0, 1[, got {t}")));
    }
    if let Some(bad) = grid.iter().find(|q| !domain.contains(q)) {
        return Err(Error::DomainViolation(format!("{bad} outside {domain}")));
    }
    Ok(grid.iter().map(|q| f.eval_exact(q).expect("exact evaluator present")).collect())
}

fn sorted_unique(grid: &[ExactRational]) -> Vec<ExactRational> {
    grid.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Decision-exact check of `A_t`-convexity, `A_t(x, y) = t x + (1 - t) y`,
/// over every ordered pair of the grid.
pub fn check_convex_exact(
    f: &ExtendedFunction,
    t: &ExactRational,
    grid: &[ExactRational],
    kind: Convexity,
) -> Result<ConvexityReport<ExactRational>> {
    let grid = sorted_unique(grid);
    let values = exact_parts(f, t, &grid)?;
    let co = ExactRational::one() - t;
    let mut checked = 0;
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            checked += 1;
            // An infinite endpoint makes the upper difference +inf.
            if kind == Convexity::Upper && (values[i] == Extended::PosInf || values[j] == Extended::PosInf) {
                continue;
            }
            let (x, y) = (&grid[i], &grid[j]);
            let m = t * x + &co * y;
            let fm = f.eval_exact(&m).expect("exact evaluator present");
            if let Some(w) = judge(x, &m, y, &values[i], &fm, &values[j], kind)? {
                return Ok(ConvexityReport {
                    kind,
                    verdict: Verdict::Counterexample,
                    samples_checked: checked,
                    witness: Some(w),
                    seed: None,
                });
            }
        }
    }
    Ok(ConvexityReport { kind, verdict: Verdict::NoViolation, samples_checked: checked, witness: None, seed: None })
}

/// Exact counterpart of [`efc_equivalent_check`] for `A_t`.
pub fn efc_equivalent_check_exact(
    f: &ExtendedFunction,
    t: &ExactRational,
    grid: &[ExactRational],
    kind: Convexity,
) -> Result<bool> {
    let grid = sorted_unique(grid);
    let values = exact_parts(f, t, &grid)?;
    let co = ExactRational::one() - t;
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let (x, y) = (&grid[i], &grid[j]);
            let m = t * x + &co * y;
            let fm = f.eval_exact(&m).expect("exact evaluator present");
            let by_dd = judge(x, &m, y, &values[i], &fm, &values[j], kind)?.is_some();
            let (by_efc, _, _) = efc_judge(x, &m, y, &values[i], &fm, &values[j], kind);
            if by_dd != by_efc {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InheritanceReport {
    /// Lower convexity of `f` for each input mean.
    pub premise: Vec<ConvexityReport<f64>>,
    /// Lower convexity of `f` for each descendant, on the same pairs.
    pub descendants: Vec<ConvexityReport<f64>>,
}

impl InheritanceReport {
    pub fn all_pass(&self) -> bool {
        self.descendants.iter().all(|r| r.verdict == Verdict::NoViolation)
    }
}

/// Checks that lower M_i-convexity of `f` for every input mean carries over to
/// each descendant. One fixed-point solve per pair serves all descendants.
pub fn inheritance_check(
    f: &ExtendedFunction,
    means: &[Mean],
    sampler: &Sampler,
    opts: &SolveOptions,
) -> Result<InheritanceReport> {
    let mut premise = Vec::with_capacity(means.len());
    for m in means {
        let r = check_lower_convex(f, m, sampler)?;
        if r.verdict == Verdict::Counterexample {
            return Err(Error::PreconditionViolation(format!("{} is not lower {}-convex", f.label(), m.label())));
        }
        premise.push(r);
    }
    let refs: Vec<&Mean> = means.iter().collect();
    let domain = common_domain(f, &refs)?;
    let n = means.len();
    let mut checked = vec![0usize; n];
    let mut witness: Vec<Option<Witness<f64>>> = vec![None; n];
    let solve = SolveOptions { certify: false, ..*opts };
    for (x, y) in sampler.pairs(&domain) {
        let problem = DescendantProblem::new(means.to_vec(), x, y)?;
        let r = solve_fixed_point(&problem, &solve)?;
        if !r.converged {
            return Err(Error::NonConvergence { iterations: r.iterations, residual: r.residual });
        }
        let (fx, fy) = (f.eval(x), f.eval(y));
        for i in 0..n {
            let mid = r.xi[i];
            if witness[i].is_some() || !(x < mid && mid < y) {
                continue;
            }
            checked[i] += 1;
            witness[i] = judge(&x, &mid, &y, &fx, &f.eval(mid), &fy, Convexity::Lower)?;
        }
        if witness.iter().all(Option::is_some) {
            break;
        }
    }
    let descendants = (0..n)
        .map(|i| ConvexityReport {
            kind: Convexity::Lower,
            verdict: if witness[i].is_some() { Verdict::Counterexample } else { Verdict::NoViolation },
            samples_checked: checked[i],
            witness: witness[i].clone(),
            seed: sampler.seed(),
        })
        .collect();
    Ok(InheritanceReport { premise, descendants })
}

fn check_unit(q: &ExactRational, name: &str) -> Result<()> {
    if is_in_open_unit_interval(q) {
        Ok(())
    } else {
        Err(Error::ParamOutOfRange(format!("{name} must lie in ]0, 1[, got {q}")))
    }
}

/// Products and co-products `t s`, `1 - (1 - t)(1 - s)`, tagged with their
/// provenance.
fn pair_ops(t: &ExactRational, s: &ExactRational) -> [(ExactRational, String); 2] {
    let one = ExactRational::one();
    [(t * s, format!("{t}*{s}")), (&one - (&one - t) * (&one - s), format!("1-(1-{t})(1-{s})"))]
}

/// `t s2 + (1 - t) s1` for `s1 < s2`.
fn affine_op(t: &ExactRational, s1: &ExactRational, s2: &ExactRational) -> (ExactRational, String) {
    (t * s2 + (ExactRational::one() - t) * s1, format!("{t}*{s2}+(1-{t})*{s1}"))
}

/// `{t s2 + (1-t) s1, t s1, t s2, 1-(1-t)(1-s1), 1-(1-t)(1-s2)}`.
pub fn ac_closure_ops(t: &ExactRational, s1: &ExactRational, s2: &ExactRational) -> Result<BTreeSet<ExactRational>> {
    check_unit(t, "t")?;
    check_unit(s1, "s1")?;
    check_unit(s2, "s2")?;
    if s1 >= s2 {
        return Err(Error::ParamOutOfRange(format!("need s1 < s2, got {s1} and {s2}")));
    }
    let mut out = BTreeSet::new();
    out.insert(affine_op(t, s1, s2).0);
    for s in [s1, s2] {
        for (v, _) in pair_ops(t, s) {
            out.insert(v);
        }
    }
    Ok(out)
}

/// A finite explored part of a convexity parameter set, with the rule that
/// produced each element.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RationalParamSet {
    elements: BTreeMap<ExactRational, String>,
}

impl RationalParamSet {
    pub fn from_seeds<I: IntoIterator<Item = ExactRational>>(seeds: I) -> Result<Self> {
        let mut set = RationalParamSet::default();
        for q in seeds {
            set.insert(q, "seed".into())?;
        }
        Ok(set)
    }

    /// Adds `q` unless present; returns whether it was new.
    pub fn insert(&mut self, q: ExactRational, provenance: String) -> Result<bool> {
        check_unit(&q, "parameter")?;
        if self.elements.contains_key(&q) {
            return Ok(false);
        }
        self.elements.insert(q, provenance);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, q: &ExactRational) -> bool {
        self.elements.contains_key(q)
    }

    pub fn provenance(&self, q: &ExactRational) -> Option<&str> {
        self.elements.get(q).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ExactRational, &str)> {
        self.elements.iter().map(|(q, p)| (q, p.as_str()))
    }

    /// Applies every closure operation to every combination of current
    /// elements once. With `max_den`, results with a larger denominator are
    /// dropped. Returns the number of new elements.
    pub fn closure_step(&mut self, max_den: Option<&BigInt>) -> usize {
        let current: Vec<ExactRational> = self.elements.keys().cloned().collect();
        let keep = |q: &ExactRational| max_den.is_none_or(|d| q.denom() <= d);
        let mut fresh: BTreeMap<ExactRational, String> = BTreeMap::new();
        let mut offer = |q: ExactRational, p: String| {
            if keep(&q) && !self.elements.contains_key(&q) {
                fresh.entry(q).or_insert(p);
            }
        };
        for t in &current {
            for (i, s1) in current.iter().enumerate() {
                for (v, p) in pair_ops(t, s1) {
                    offer(v, p);
                }
                for s2 in &current[i + 1..] {
                    let (v, p) = affine_op(t, s1, s2);
                    offer(v, p);
                }
            }
        }
        let added = fresh.len();
        self.elements.extend(fresh);
        added
    }

    /// Largest gap between consecutive points of `{0} ∪ set ∪ {1}`.
    pub fn mesh(&self) -> ExactRational {
        let mut prev = ExactRational::zero();
        let mut gap = ExactRational::zero();
        for q in self.elements.keys().chain(std::iter::once(&ExactRational::one())) {
            let d = q - &prev;
            if d > gap {
                gap = d;
            }
            prev = q.clone();
        }
        gap
    }
}

/// `r_i = (l^{n+1} - l^i (m-l)^{n+1-i}) / (l^{n+1} - (m-l)^{n+1})`, `i = 1..n`.
pub fn generate_r_fractions(l: u64, m: u64, n: usize) -> Result<Vec<ExactRational>> {
    if !(0 < l && l < m) || 2 * l == m || n < 2 {
        return Err(Error::ParamOutOfRange(format!("need 0 < l < m, 2l != m, n >= 2; got l={l}, m={m}, n={n}")));
    }
    let (lb, kb) = (BigInt::from(l), BigInt::from(m - l));
    let pow = |b: &BigInt, e: usize| num_traits::pow(b.clone(), e);
    let top = pow(&lb, n + 1);
    let denom = &top - pow(&kb, n + 1);
    Ok((1..=n).map(|i| ExactRational::new(&top - pow(&lb, i) * pow(&kb, n + 1 - i), denom.clone())).collect())
}

/// Membership in `Q0 = {2k/(2n-1)}` or `Q1 = {(2k-1)/(2n-1)}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RationalClass {
    Q0,
    Q1,
    Neither,
}

impl fmt::Display for RationalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RationalClass::Q0 => "Q0",
            RationalClass::Q1 => "Q1",
            RationalClass::Neither => "NEITHER",
        })
    }
}

/// In lowest terms: odd denominator and even numerator is `Q0`, odd
/// denominator and odd numerator is `Q1`, even denominator is neither.
pub fn classify_rational(r: &ExactRational) -> RationalClass {
    if r.denom().is_even() {
        RationalClass::Neither
    } else if r.numer().is_even() {
        RationalClass::Q0
    } else {
        RationalClass::Q1
    }
}

/// Trials of the midpoint-convexity guard in [`build_x1_function`].
const CONVEXITY_TRIALS: usize = 1000;

/// `f = h` on `(I ∩ Q0) ∪ {a}` and `+inf` elsewhere on `I`, where `a = sup I`
/// belongs to `I ∩ Q1`. Upper `A_t`-convex for every `t ∈ ]0,1[ ∩ Q1`, but
/// not upper `A_{1-t}`-convex.
///
/// `h` must be convex on `I`; this is guarded by a midpoint test on 1000
/// exact random pairs.
pub fn build_x1_function<H>(label: impl Into<String>, h: H, interval: RationalInterval) -> Result<ExtendedFunction>
where
    H: Fn(&ExactRational) -> ExactRational + Send + Sync + 'static,
{
    if !interval.hi_closed {
        return Err(Error::PreconditionViolation(format!("the right endpoint must belong to {interval}")));
    }
    let a = interval.hi.clone();
    if classify_rational(&a) != RationalClass::Q1 {
        return Err(Error::ClassificationError(format!("right endpoint {a} is not in Q1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let width = &interval.hi - &interval.lo;
    let first = if interval.lo_closed { 0 } else { 1 };
    for _ in 0..CONVEXITY_TRIALS {
        let (i, j): (i64, i64) = (rng.random_range(first..=1000), rng.random_range(first..=1000));
        let p = &interval.lo + &width * ExactRational::new(i.into(), 1000.into());
        let q = &interval.lo + &width * ExactRational::new(j.into(), 1000.into());
        let two = ExactRational::from_integer(2.into());
        let mid = (&p + &q) / &two;
        if h(&mid) > (h(&p) + h(&q)) / two {
            return Err(Error::PreconditionViolation(format!("h fails midpoint convexity between {p} and {q}")));
        }
    }
    let domain = interval.clone();
    Ok(ExtendedFunction::from_exact(label, interval, move |q| {
        if domain.contains(q) && (q == &a || classify_rational(q) == RationalClass::Q0) {
            Extended::Finite(h(q))
        } else {
            Extended::PosInf
        }
    }))
}

/// Evidence that `s, t` upper-convexity parameters do not give `s + t`:
/// `f(u) > (s+t) f(x) + (1-(s+t)) f(y)` with `u = (s+t) x + (1-(s+t)) y`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditionWitness {
    pub s: ExactRational,
    pub t: ExactRational,
    pub sum: ExactRational,
    pub x: ExactRational,
    pub y: ExactRational,
    pub u: ExactRational,
    pub lhs: XRational,
    pub rhs: XRational,
}

impl AdditionWitness {
    /// Recomputes both sides with `f` and checks the strict inequality.
    pub fn verify(&self, f: &ExtendedFunction) -> bool {
        let one = ExactRational::one();
        let (Some(fu), Some(fx), Some(fy)) = (f.eval_exact(&self.u), f.eval_exact(&self.x), f.eval_exact(&self.y))
        else {
            return false;
        };
        let u = &self.sum * &self.x + (&one - &self.sum) * &self.y;
        let rhs = upper_sum(&fx.scale(&self.sum), &fy.scale(&(&one - &self.sum)));
        u == self.u && self.x < self.y && fu > rhs
    }
}

/// For `s, t ∈ Q1` with `s + t < 1` and `f` from [`build_x1_function`],
/// searches `x ∈ I ∩ Q0` (odd denominators in increasing order) with `y = sup I`
/// for a violation of the `A_{s+t}` inequality.
pub fn addition_nonclosure_witness(
    s: &ExactRational,
    t: &ExactRational,
    f: &ExtendedFunction,
) -> Result<AdditionWitness> {
    let one = ExactRational::one();
    for (name, v) in [("s", s), ("t", t)] {
        if !is_in_open_unit_interval(v) || classify_rational(v) != RationalClass::Q1 {
            return Err(Error::PreconditionViolation(format!("{name} = {v} must lie in ]0, 1[ ∩ Q1")));
        }
    }
    let sum = s + t;
    if sum >= one {
        return Err(Error::PreconditionViolation(format!("s + t = {sum} must be below 1")));
    }
    let domain = f
        .exact_domain()
        .ok_or_else(|| Error::PreconditionViolation(format!("{} has no exact evaluator", f.label())))?
        .clone();
    if !domain.hi_closed {
        return Err(Error::PreconditionViolation("the right endpoint must belong to the domain".into()));
    }
    let y = domain.hi.clone();
    for q in (1u64..2000).step_by(2) {
        let qb = BigInt::from(q);
        let lo = (&domain.lo * &qb).ceil().to_integer();
        let mut p = lo;
        loop {
            let x = ExactRational::new(p.clone(), qb.clone());
            if x >= y {
                break;
            }
            if x.denom() == &qb && p.is_even() && domain.contains(&x) {
                let u = &sum * &x + (&one - &sum) * &y;
                let lhs = f.eval_exact(&u).expect("exact evaluator present");
                let fx = f.eval_exact(&x).expect("exact evaluator present");
                let fy = f.eval_exact(&y).expect("exact evaluator present");
                let rhs = upper_sum(&fx.scale(&sum), &fy.scale(&(&one - &sum)));
                if lhs > rhs {
                    return Ok(AdditionWitness { s: s.clone(), t: t.clone(), sum, x, y, u, lhs, rhs });
                }
            }
            p += 1;
        }
    }
    Err(Error::PreconditionViolation("no witness with denominator below 2000".into()))
}
