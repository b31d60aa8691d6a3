//! Descendants of an n-tuple of means. For `x <= y` the map
//!
//! `phi(t) = (M_1(x, t_2), ..., M_i(t_{i-1}, t_{i+1}), ..., M_n(t_{n-1}, y))`
//!
//! maps the ordered box `[x, y]^n_<=` into `[x, y]^n` and is weakly inward on
//! it: `x <= phi_1`, `phi_n <= y`, and `t_{k-1} = t_k` forces
//! `phi_{k-1} <= phi_k`. Its fixed points are the descendant values. Uniqueness is certified through Lipschitz moduli of the
//! Matkowski generators and the spectrum of `A(a, b)`.

use std::collections::HashMap;
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::means::{Interval, Mean, MonotoneFn};
use crate::rational::ExactRational;
use crate::spectral::TwoDiagonalMatrix;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Damping is never halved below this value.
pub const MIN_DAMPING: f64 = 1.0 / 16.0;
/// Residual increases tolerated before the damping is halved.
const OSCILLATION_LIMIT: usize = 10;

#[derive(Clone, Debug)]
pub struct DescendantProblem {
    means: Vec<Mean>,
    x: f64,
    y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping `alpha` in `]0, 1]`.
    pub damping: f64,
    /// Halve `alpha` on oscillation when no certificate is available.
    pub adaptive: bool,
    /// Compute a contraction certificate over `[x, y]` when generators allow.
    pub certify: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, damping: 1.0, adaptive: true, certify: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointResult {
    pub xi: Vec<f64>,
    /// `‖phi(xi) − xi‖∞`
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub certificate: Option<ContractionCertificate>,
    /// Damping in effect when the iteration stopped.
    pub damping: f64,
}

impl FixedPointResult {
    pub fn certified(&self) -> bool {
        self.certificate.as_ref().is_some_and(|c| c.valid)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionCertificate {
    /// `a_2..a_n`
    pub a: Vec<f64>,
    /// `b_1..b_{n-1}`
    pub b: Vec<f64>,
    /// `w_1..w_{n-1}`
    pub w: Vec<f64>,
    pub valid: bool,
    /// Positive weights `c_1..c_n` summing to 1, present when valid.
    pub c: Option<Vec<f64>>,
    pub lambda: Option<f64>,
}

impl DescendantProblem {
    pub fn new(means: Vec<Mean>, x: f64, y: f64) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::ParamOutOfRange(format!("need at least 2 means, got {}", means.len())));
        }
        if !(x.is_finite() && y.is_finite()) || x > y {
            return Err(Error::DomainViolation(format!("need finite x <= y, got ({x}, {y})")));
        }
        for m in &means {
            let d = m.domain();
            if !(d.contains(x) && d.contains(y)) {
                return Err(Error::DomainViolation(format!("[{x}, {y}] not inside the domain {d} of {}", m.label())));
            }
        }
        Ok(DescendantProblem { means, x, y })
    }

    pub fn n(&self) -> usize {
        self.means.len()
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn means(&self) -> &[Mean] {
        &self.means
    }

    /// Equally spaced interior points `x + i (y - x) / (n + 1)`.
    pub fn start_vector(&self) -> Vec<f64> {
        let n = self.n();
        let h = (self.y - self.x) / (n + 1) as f64;
        (1..=n).map(|i| self.x + i as f64 * h).collect()
    }

    /// `phi(t)` for `t` in the ordered box. The image lies in `[x, y]^n` but
    /// need not be ordered.
    pub fn phi_apply(&self, t: &[f64]) -> Result<Vec<f64>> {
        if t.len() != self.n() {
            return Err(Error::ShapeMismatch(format!("t has {} entries, expected {}", t.len(), self.n())));
        }
        if t.iter().any(|&ti| !(self.x <= ti && ti <= self.y)) || t.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::DomainViolation(format!("{t:?} is not an ordered point of [{}, {}]^n", self.x, self.y)));
        }
        self.phi(t)
    }

    fn phi(&self, t: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let left = if i == 0 { self.x } else { t[i - 1] };
                let right = if i + 1 == n { self.y } else { t[i + 1] };
                self.means[i].eval(left, right)
            })
            .collect()
    }

    /// `‖phi(t) − t‖∞`
    pub fn residual(&self, t: &[f64]) -> Result<f64> {
        let p = self.phi_apply(t)?;
        Ok(sup_dist(&p, t))
    }

    /// Clamp into `[x, y]` and restore order by running maxima.
    fn admissible(&self, t: &mut [f64]) {
        let mut floor = self.x;
        for ti in t.iter_mut() {
            *ti = ti.clamp(floor, self.y);
            floor = *ti;
        }
    }

    /// Generator pairs of all means, if every one is a Matkowski mean.
    pub fn generators(&self) -> Option<(Vec<MonotoneFn>, Vec<MonotoneFn>)> {
        let mut fs = Vec::with_capacity(self.n());
        let mut gs = Vec::with_capacity(self.n());
        for m in &self.means {
            let g = m.generators()?;
            fs.push(g.f.clone());
            gs.push(g.g.clone());
        }
        Some((fs, gs))
    }
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Certificate of the problem's generators over `[x, y]`, if derivatives exist.
fn problem_certificate(problem: &DescendantProblem) -> Result<Option<ContractionCertificate>> {
    let Some((fs, gs)) = problem.generators() else {
        return Ok(None);
    };
    if problem.x == problem.y {
        return Ok(None);
    }
    match contraction_certificate(&fs, &gs, problem.x, problem.y, &LipschitzOptions::default()) {
        Ok(c) => Ok(Some(c)),
        Err(Error::MissingDerivative(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Iterates `t <- (1 - alpha) t + alpha phi(t)` from the start vector.
pub fn solve_fixed_point(problem: &DescendantProblem, opts: &SolveOptions) -> Result<FixedPointResult> {
    let certificate = if opts.certify { problem_certificate(problem)? } else { None };
    let certified = certificate.as_ref().is_some_and(|c| c.valid);
    let mut result = iterate(problem, opts, certified)?;
    result.certificate = certificate;
    Ok(result)
}

fn iterate(problem: &DescendantProblem, opts: &SolveOptions, certified: bool) -> Result<FixedPointResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::ParamOutOfRange(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::ParamOutOfRange(format!("damping must lie in ]0, 1], got {}", opts.damping)));
    }
    let n = problem.n();
    if problem.x == problem.y {
        return Ok(FixedPointResult {
            xi: vec![problem.x; n],
            residual: 0.0,
            iterations: 0,
            converged: true,
            certificate: None,
            damping: opts.damping,
        });
    }
    for m in problem.means() {
        if !m.is_continuous() {
            return Err(Error::PreconditionViolation(format!("{} is not continuous", m.label())));
        }
    }
    let mut alpha = opts.damping;
    let mut t = problem.start_vector();
    let mut best = (f64::INFINITY, t.clone());
    let mut prev_res = f64::INFINITY;
    let mut increases = 0;
    for k in 0..=opts.max_iter {
        let p = problem.phi(&t)?;
        let res = sup_dist(&p, &t);
        if res < best.0 {
            best = (res, t.clone());
        }
        if res <= opts.tol {
            return Ok(FixedPointResult {
                xi: t,
                residual: res,
                iterations: k,
                converged: true,
                certificate: None,
                damping: alpha,
            });
        }
        if k == opts.max_iter {
            break;
        }
        if res > prev_res {
            increases += 1;
            if opts.adaptive && !certified && increases >= OSCILLATION_LIMIT && alpha > MIN_DAMPING {
                alpha = (alpha / 2.0).max(MIN_DAMPING);
                increases = 0;
            }
        }
        prev_res = res;
        for (ti, pi) in t.iter_mut().zip(&p) {
            *ti = if alpha == 1.0 { *pi } else { (1.0 - alpha) * *ti + alpha * pi };
        }
        problem.admissible(&mut t);
    }
    Ok(FixedPointResult {
        xi: best.1,
        residual: best.0,
        iterations: opts.max_iter,
        converged: false,
        certificate: None,
        damping: alpha,
    })
}

/// Approximate fixed points found by scanning the ordered grid cells of
/// `[x, y]^n` (`n <= 4`), refining each candidate by iteration and merging
/// candidates closer than a quarter cell.
pub fn brute_force_fixed_points(problem: &DescendantProblem, grid: usize) -> Result<Vec<Vec<f64>>> {
    let n = problem.n();
    if n > 4 {
        return Err(Error::ParamOutOfRange(format!("brute force is limited to n <= 4, got {n}")));
    }
    if grid < 8 {
        return Err(Error::ParamOutOfRange(format!("grid resolution must be at least 8, got {grid}")));
    }
    if problem.x == problem.y {
        return Ok(vec![vec![problem.x; n]]);
    }
    let h = (problem.y - problem.x) / grid as f64;
    let center = |k: &[usize]| -> Vec<f64> { k.iter().map(|&ki| problem.x + (ki as f64 + 0.5) * h).collect() };

    let mut candidates = Vec::new();
    let mut fallback = (f64::INFINITY, Vec::new());
    let mut idx = vec![0usize; n];
    loop {
        let c = center(&idx);
        let res = sup_dist(&problem.phi(&c)?, &c);
        if res <= h {
            candidates.push(c);
        } else if res < fallback.0 {
            fallback = (res, c);
        }
        if !next_ordered_index(&mut idx, grid) {
            break;
        }
    }
    if candidates.is_empty() {
        candidates.push(fallback.1);
    }

    let refine = SolveOptions { tol: 1e-6 * h, max_iter: 500, damping: 1.0, adaptive: false, certify: false };
    let mut refined: Vec<(f64, Vec<f64>)> = Vec::with_capacity(candidates.len());
    for c in candidates {
        refined.push(refine_from(problem, c, &refine)?);
    }

    let link = h / 4.0;
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut owner: Vec<Option<usize>> = vec![None; refined.len()];
    let order = sort_lex(&refined);
    // Single linkage over a lexicographic sweep; buckets keep it near linear.
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|v| ((v - problem.x) / link).floor() as i64).collect() };
    for &i in &order {
        let k = key(&refined[i].1);
        let mut touching: Vec<usize> = Vec::new();
        for nb in neighbours(&k) {
            if let Some(list) = buckets.get(&nb) {
                for &j in list {
                    if sup_dist(&refined[i].1, &refined[j].1) <= link {
                        let cl = owner[j].expect("indexed points are assigned");
                        if !touching.contains(&cl) {
                            touching.push(cl);
                        }
                    }
                }
            }
        }
        match touching.split_first() {
            None => {
                owner[i] = Some(clusters.len());
                clusters.push(vec![i]);
            }
            Some((&first, rest)) => {
                for &other in rest {
                    let moved = std::mem::take(&mut clusters[other]);
                    for &m in &moved {
                        owner[m] = Some(first);
                    }
                    clusters[first].extend(moved);
                }
                owner[i] = Some(first);
                clusters[first].push(i);
            }
        }
        buckets.entry(k).or_default().push(i);
    }

    let mut out = Vec::new();
    for members in clusters.into_iter().filter(|c| !c.is_empty()) {
        let diameter = members
            .iter()
            .flat_map(|&a| members.iter().map(move |&b| (a, b)))
            .map(|(a, b)| sup_dist(&refined[a].1, &refined[b].1))
            .fold(0.0, f64::max);
        if diameter > h {
            return Err(Error::GridTooCoarse(grid));
        }
        let rep = members.iter().min_by(|&&a, &&b| refined[a].0.total_cmp(&refined[b].0)).copied().unwrap();
        out.push(refined[rep].1.clone());
    }
    out.sort_by(|a, b| {
        a.iter().zip(b).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(out)
}

fn refine_from(problem: &DescendantProblem, mut t: Vec<f64>, opts: &SolveOptions) -> Result<(f64, Vec<f64>)> {
    let mut res = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let p = problem.phi(&t)?;
        res = sup_dist(&p, &t);
        if res <= opts.tol {
            break;
        }
        t = p;
        problem.admissible(&mut t);
    }
    Ok((res, t))
}

fn sort_lex(points: &[(f64, Vec<f64>)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .1
            .iter()
            .zip(&points[b].1)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

fn neighbours(k: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(k.len())];
    for &ki in k {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-1..=1).map(move |d| {
                    let mut p = prefix.clone();
                    p.push(ki + d);
                    p
                })
            })
            .collect();
    }
    out
}

/// Advances `idx` to the next non-decreasing multi-index below `grid`.
fn next_ordered_index(idx: &mut [usize], grid: usize) -> bool {
    let n = idx.len();
    let mut i = n;
    while i > 0 {
        i -= 1;
        if idx[i] + 1 < grid {
            let v = idx[i] + 1;
            for slot in &mut idx[i..] {
                *slot = v;
            }
            return true;
        }
    }
    false
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzOptions {
    pub grid: usize,
    /// The sampled supremum is raised by `(safety - 1)` times the sampled
    /// oscillation of `f'/g'`.
    pub safety: f64,
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        LipschitzOptions { grid: 1024, safety: 1.05 }
    }
}

/// Estimate of `lip(f∘g^{-1}) = sup |f'/g'|` from `grid` equally spaced
/// points of `[lo, hi]`, endpoints included. With `sup` and `inf` the sampled
/// extremes the result is `sup + (safety - 1) (sup - inf)`, so ratios that
/// are constant are returned exactly.
pub fn lipschitz_modulus(f: &MonotoneFn, g: &MonotoneFn, lo: f64, hi: f64, opts: &LipschitzOptions) -> Result<f64> {
    if !f.has_derivative() {
        return Err(Error::MissingDerivative(f.label().to_string()));
    }
    if !g.has_derivative() {
        return Err(Error::MissingDerivative(g.label().to_string()));
    }
    if !(lo <= hi) || opts.grid < 2 {
        return Err(Error::ParamOutOfRange(format!("bad sampling interval [{lo}, {hi}] with {} points", opts.grid)));
    }
    let mut sup: f64 = 0.0;
    let mut inf = f64::INFINITY;
    for k in 0..opts.grid {
        let t = lo + (hi - lo) * k as f64 / (opts.grid - 1) as f64;
        let (df, dg) = (f.deriv(t).unwrap(), g.deriv(t).unwrap());
        if !(dg > 0.0) || !df.is_finite() {
            return Err(Error::ParamOutOfRange(format!(
                "derivative of `{}` vanishes or is undefined at {t}",
                g.label()
            )));
        }
        let r = (df / dg).abs();
        sup = sup.max(r);
        inf = inf.min(r);
    }
    Ok(sup + (opts.safety - 1.0) * (sup - inf))
}

/// Lipschitz data `a_i = lip(f_i, f_{i-1} + g_{i-1})`,
/// `b_i = lip(g_i, f_{i+1} + g_{i+1})` over `[lo, hi]`, the recursion
/// `w_i = w_{i-1} - a_{i+1} b_i w_{i-2}`, and when all `w_i > 0` the positive
/// eigenpair `(c, lambda)` of `A(a, b)`.
pub fn contraction_certificate(
    fs: &[MonotoneFn],
    gs: &[MonotoneFn],
    lo: f64,
    hi: f64,
    opts: &LipschitzOptions,
) -> Result<ContractionCertificate> {
    let n = fs.len();
    if n < 2 || gs.len() != n {
        return Err(Error::ShapeMismatch(format!("need n >= 2 generator pairs, got {} and {}", fs.len(), gs.len())));
    }
    let sums: Vec<MonotoneFn> = fs.iter().zip(gs).map(|(f, g)| f.plus(g)).collect::<Result<_>>()?;
    let a: Vec<f64> = (1..n).map(|k| lipschitz_modulus(&fs[k], &sums[k - 1], lo, hi, opts)).collect::<Result<_>>()?;
    let b: Vec<f64> =
        (0..n - 1).map(|k| lipschitz_modulus(&gs[k], &sums[k + 1], lo, hi, opts)).collect::<Result<_>>()?;
    certificate_from_moduli(a, b)
}

/// Certificate from given moduli `a_2..a_n`, `b_1..b_{n-1}`.
pub fn certificate_from_moduli(a: Vec<f64>, b: Vec<f64>) -> Result<ContractionCertificate> {
    let m = TwoDiagonalMatrix::new(a.clone(), b.clone())?;
    let w = m.w_sequence();
    if !w.iter().all(|&wi| wi > 0.0) {
        return Ok(ContractionCertificate { a, b, w, valid: false, c: None, lambda: None });
    }
    let pair = m.positive_eigenvector(1e-12)?;
    let valid = pair.lambda < 1.0;
    Ok(ContractionCertificate { a, b, w, valid, c: Some(pair.c), lambda: Some(pair.lambda) })
}

/// `D_c(t, s) = sum_i c_i |(f_i + g_i)(t_i) − (f_i + g_i)(s_i)|`
pub fn weighted_semimetric(fs: &[MonotoneFn], gs: &[MonotoneFn], c: &[f64], t: &[f64], s: &[f64]) -> f64 {
    (0..c.len())
        .map(|i| {
            let h = |z: f64| fs[i].eval(z) + gs[i].eval(z);
            c[i] * (h(t[i]) - h(s[i])).abs()
        })
        .sum()
}

fn check_weight<T: PartialOrd + Zero + One>(s: &[T]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::ParamOutOfRange("weight vector is empty".into()));
    }
    if s.iter().any(|sk| !(*sk > T::zero() && *sk < T::one())) {
        return Err(Error::ParamOutOfRange("weights must lie in ]0, 1[".into()));
    }
    Ok(())
}

fn sigma_generic<T>(s: &[T]) -> Vec<T>
where
    T: Clone + Zero + One + std::ops::Sub<Output = T> + std::ops::Div<Output = T> + std::ops::Mul<Output = T>,
{
    let mut prods = Vec::with_capacity(s.len() + 1);
    let mut p = T::one();
    prods.push(p.clone());
    for sk in s {
        p = p * (sk.clone() / (T::one() - sk.clone()));
        prods.push(p.clone());
    }
    let total = prods.iter().cloned().fold(T::zero(), |a, b| a + b);
    let mut tail = T::zero();
    let mut out = vec![T::zero(); s.len()];
    for i in (1..=s.len()).rev() {
        tail = tail + prods[i].clone();
        out[i - 1] = tail.clone() / total.clone();
    }
    out
}

/// `sigma_i = (sum_{j=i}^n P_j) / (sum_{j=0}^n P_j)`, `P_j = prod_{k<=j} s_k / (1 - s_k)`.
pub fn sigma_weights(s: &[f64]) -> Result<Vec<f64>> {
    check_weight(s)?;
    Ok(sigma_generic(s))
}

/// Exact-rational version of [`sigma_weights`].
pub fn sigma_weights_exact(s: &[ExactRational]) -> Result<Vec<ExactRational>> {
    check_weight(s)?;
    Ok(sigma_generic(s))
}

fn check_pair_in(h: &MonotoneFn, x: f64, y: f64) -> Result<()> {
    if !(x <= y) {
        return Err(Error::DomainViolation(format!("need x <= y, got ({x}, {y})")));
    }
    let d = h.domain();
    if !(d.contains(x) && d.contains(y)) {
        return Err(Error::DomainViolation(format!("[{x}, {y}] not inside the domain {d} of {}", h.label())));
    }
    Ok(())
}

/// Fixed point of the quasi-arithmetic tuple `(h^{-1}(s_i h(.) + (1-s_i) h(.)))_i`:
/// `xi_i = h^{-1}(sigma_i h(x) + (1 - sigma_i) h(y))`.
pub fn closed_form_quasiarithmetic(h: &MonotoneFn, s: &[f64], x: f64, y: f64) -> Result<Vec<f64>> {
    let sigma = sigma_weights(s)?;
    check_pair_in(h, x, y)?;
    if x == y {
        return Ok(vec![x; s.len()]);
    }
    let (hx, hy) = (h.eval(x), h.eval(y));
    sigma.iter().map(|&sg| h.inverse_within(sg * hx + (1.0 - sg) * hy, x, y)).collect()
}

/// `M_{f,g}(a, b) = (f+g)^{-1}(f(a) + g(b))` for `a <= b`.
fn matkowski_value(f: &MonotoneFn, g: &MonotoneFn, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(a);
    }
    f.plus(g)?.inverse_within(f.eval(a) + g.eval(b), a, b)
}

/// Fixed point for the tuple built by [`rmat_problem`]:
/// `xi_j = M_{p,q}(x, y)`, `xi_i = M_{p,h_i}(x, xi_{i+1})` for `i < j` and
/// `xi_i = M_{h_{i-1},q}(xi_{i-1}, y)` for `i > j`. `j` is 1-based.
pub fn closed_form_rmat(
    p: &MonotoneFn,
    q: &MonotoneFn,
    hs: &[MonotoneFn],
    j: usize,
    x: f64,
    y: f64,
) -> Result<Vec<f64>> {
    let n = hs.len() + 1;
    if j == 0 || j > n {
        return Err(Error::IndexOutOfRange { index: j, max: n });
    }
    for g in std::iter::once(p).chain(std::iter::once(q)).chain(hs) {
        check_pair_in(g, x, y)?;
    }
    let mut xi = vec![0.0; n];
    xi[j - 1] = matkowski_value(p, q, x, y)?;
    for i in (1..j).rev() {
        xi[i - 1] = matkowski_value(p, &hs[i - 1], x, xi[i])?;
    }
    for i in j + 1..=n {
        xi[i - 1] = matkowski_value(&hs[i - 2], q, xi[i - 2], y)?;
    }
    Ok(xi)
}

/// The tuple `M_i = M_{p+h_{i-1}, h_i}` (`i < j`), `M_{p+h_{j-1}, h_j+q}`
/// (`i = j`), `M_{h_{i-1}, h_i+q}` (`i > j`) with `h_0 = h_n = 0`.
pub fn rmat_means(p: &MonotoneFn, q: &MonotoneFn, hs: &[MonotoneFn], j: usize) -> Result<Vec<Mean>> {
    let n = hs.len() + 1;
    if j == 0 || j > n {
        return Err(Error::IndexOutOfRange { index: j, max: n });
    }
    let h = |k: usize| -> Option<&MonotoneFn> {
        if k == 0 || k == n {
            None
        } else {
            Some(&hs[k - 1])
        }
    };
    let add = |a: &MonotoneFn, b: Option<&MonotoneFn>| -> Result<MonotoneFn> {
        match b {
            Some(b) => a.plus(b),
            None => Ok(a.clone()),
        }
    };
    (1..=n)
        .map(|i| {
            let (f, g) = if i < j {
                (add(p, h(i - 1))?, hs[i - 1].clone())
            } else if i == j {
                (add(p, h(j - 1))?, add(q, h(j))?)
            } else {
                (hs[i - 2].clone(), add(q, h(i))?)
            };
            crate::means::matkowski(&f, &g)
        })
        .collect()
}

pub fn rmat_problem(
    p: &MonotoneFn,
    q: &MonotoneFn,
    hs: &[MonotoneFn],
    j: usize,
    x: f64,
    y: f64,
) -> Result<DescendantProblem> {
    DescendantProblem::new(rmat_means(p, q, hs, j)?, x, y)
}

/// A descendant mean together with the certificate computed over its domain
/// window; `None` when the generators do not allow one.
#[derive(Clone, Debug)]
pub struct Descendant {
    pub mean: Mean,
    pub certificate: Option<ContractionCertificate>,
}

impl Descendant {
    pub fn certified(&self) -> bool {
        self.certificate.as_ref().is_some_and(|c| c.valid)
    }
}

/// The `i`-th descendant (1-based): `(x, y) -> xi_i` from the solver, and `x`
/// when `x = y`. Evaluation fails with `NonConvergence` if the solver does.
pub fn descendant_mean(means: &[Mean], i: usize, opts: &SolveOptions) -> Result<Descendant> {
    let n = means.len();
    if n < 2 {
        return Err(Error::ParamOutOfRange(format!("need at least 2 means, got {n}")));
    }
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, max: n });
    }
    let mut domain = means[0].domain();
    for m in &means[1..] {
        domain = domain
            .intersect(&m.domain())
            .ok_or_else(|| Error::DomainViolation("means have disjoint domains".into()))?;
    }
    let certificate = window_certificate(means, domain)?;
    let certified = certificate.as_ref().is_some_and(|c| c.valid);
    let tuple: Arc<Vec<Mean>> = Arc::new(means.to_vec());
    let solve = SolveOptions { certify: false, ..*opts };
    let label = format!("D{i}({})", means.iter().map(|m| m.label()).collect::<Vec<_>>().join(", "));
    let strict = means.iter().all(|m| m.is_strict());
    let mean = Mean::new(label, domain, strict, certified, move |x, y| {
        let problem = DescendantProblem::new(tuple.to_vec(), x, y)?;
        let r = iterate(&problem, &solve, certified)?;
        if !r.converged {
            return Err(Error::NonConvergence { iterations: r.iterations, residual: r.residual });
        }
        Ok(r.xi[i - 1])
    });
    Ok(Descendant { mean, certificate })
}

fn window_certificate(means: &[Mean], domain: Interval) -> Result<Option<ContractionCertificate>> {
    let (mut lo, mut hi) = domain.window();
    let nudge = 1e-6 * (hi - lo);
    if !domain.lo_closed {
        lo += nudge;
    }
    if !domain.hi_closed {
        hi -= nudge;
    }
    let pairs: Option<Vec<_>> = means.iter().map(|m| m.generators().cloned()).collect();
    let Some(pairs) = pairs else { return Ok(None) };
    let fs: Vec<_> = pairs.iter().map(|g| g.f.clone()).collect();
    let gs: Vec<_> = pairs.iter().map(|g| g.g.clone()).collect();
    match contraction_certificate(&fs, &gs, lo, hi, &LipschitzOptions::default()) {
        Ok(c) => Ok(Some(c)),
        Err(Error::MissingDerivative(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::means::{geometric, matkowski, max_mean, min_mean, quasi_arithmetic, weighted_arithmetic};
    use crate::rational::rat;
    use proptest::prelude::*;

    fn half() -> Mean {
        weighted_arithmetic(0.5).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn problem_validation() {
        assert!(matches!(DescendantProblem::new(vec![half()], 0.0, 1.0), Err(Error::ParamOutOfRange(_))));
        assert!(matches!(DescendantProblem::new(vec![half(), half()], 1.0, 0.0), Err(Error::DomainViolation(_))));
        assert!(matches!(DescendantProblem::new(vec![geometric(), half()], -1.0, 1.0), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn phi_examples() {
        let p = DescendantProblem::new(vec![half(), half()], 0.0, 1.0).unwrap();
        let out = p.phi_apply(&[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(close(out[0], 1.0 / 3.0, 1e-15) && close(out[1], 2.0 / 3.0, 1e-15));
        assert!(matches!(p.phi_apply(&[0.7, 0.2]), Err(Error::DomainViolation(_))));
        assert!(matches!(p.phi_apply(&[0.2, 1.5]), Err(Error::DomainViolation(_))));
        assert!(matches!(p.phi_apply(&[0.2]), Err(Error::ShapeMismatch(_))));

        let p = DescendantProblem::new(vec![max_mean(), min_mean()], 0.0, 1.0).unwrap();
        for a in [0.0, 0.25, 1.0] {
            assert_eq!(p.phi_apply(&[a, a]).unwrap(), vec![a, a]);
        }

        let p = DescendantProblem::new(vec![half(), half(), half()], 2.0, 2.0).unwrap();
        assert_eq!(p.phi_apply(&[2.0; 3]).unwrap(), vec![2.0; 3]);
    }

    #[test]
    fn solver_examples() {
        let p = DescendantProblem::new(vec![half(), half()], 0.0, 1.0).unwrap();
        let r = solve_fixed_point(&p, &SolveOptions::default()).unwrap();
        assert!(r.converged && r.certified());
        assert!(close(r.xi[0], 1.0 / 3.0, 1e-9) && close(r.xi[1], 2.0 / 3.0, 1e-9));

        let p = DescendantProblem::new(vec![half(), half(), half()], 5.0, 5.0).unwrap();
        let r = solve_fixed_point(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.xi, vec![5.0; 3]);
        assert_eq!(r.residual, 0.0);

        let p = DescendantProblem::new(vec![geometric(), geometric()], 1.0, 16.0).unwrap();
        let r = solve_fixed_point(&p, &SolveOptions::default()).unwrap();
        assert!(close(r.xi[0], 2f64.powf(4.0 / 3.0), 1e-8) && close(r.xi[1], 2f64.powf(8.0 / 3.0), 1e-8));
    }

    #[test]
    fn solver_reports_non_convergence_without_failing() {
        let m = weighted_arithmetic(0.3).unwrap();
        let p = DescendantProblem::new(vec![m.clone(), m.clone(), m.clone(), m], 0.0, 1.0).unwrap();
        let r = solve_fixed_point(&p, &SolveOptions { max_iter: 3, ..SolveOptions::default() }).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
        assert!(r.residual > 0.0);
    }

    #[test]
    fn near_swap_map_converges() {
        let upper = Mean::new("upper", Interval::real_line(), true, true, |x, y| Ok(y - 0.01 * (y - x)));
        let lower = Mean::new("lower", Interval::real_line(), true, true, |x, y| Ok(x + 0.01 * (y - x)));
        let p = DescendantProblem::new(vec![upper, lower], 0.0, 1.0).unwrap();
        let r = solve_fixed_point(&p, &SolveOptions::default()).unwrap();
        assert!(r.converged && r.certificate.is_none());
        assert!(r.xi[0] < r.xi[1]);
    }

    #[test]
    fn brute_force_examples() {
        let p = DescendantProblem::new(vec![half(), half()], 0.0, 1.0).unwrap();
        let pts = brute_force_fixed_points(&p, 32).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(close(pts[0][0], 1.0 / 3.0, 1e-6) && close(pts[0][1], 2.0 / 3.0, 1e-6));

        let p = DescendantProblem::new(vec![max_mean(), min_mean()], 0.0, 1.0).unwrap();
        let pts = brute_force_fixed_points(&p, 64).unwrap();
        assert!(pts.len() >= 64);
        assert!(pts.iter().all(|t| t[0] == t[1]));

        let p = DescendantProblem::new(vec![half(), half()], 3.0, 3.0).unwrap();
        assert_eq!(brute_force_fixed_points(&p, 8).unwrap(), vec![vec![3.0, 3.0]]);
        assert!(matches!(brute_force_fixed_points(&p, 4), Err(Error::ParamOutOfRange(_))));
        let five = DescendantProblem::new(vec![half(); 5], 0.0, 1.0).unwrap();
        assert!(matches!(brute_force_fixed_points(&five, 8), Err(Error::ParamOutOfRange(_))));
    }

    #[test]
    fn brute_force_reports_merging_clusters() {
        // Refinement creeps towards (1, 1) too slowly to separate the
        // candidates, which end up chained closer than a quarter cell.
        let creep = Mean::new("creep", Interval::real_line(), true, true, |x, y| Ok(x + 6e-3 * (y - x)));
        let p = DescendantProblem::new(vec![max_mean(), creep], 0.0, 1.0).unwrap();
        assert!(matches!(brute_force_fixed_points(&p, 64), Err(Error::GridTooCoarse(64))));
    }

    #[test]
    fn lipschitz_examples() {
        let h = MonotoneFn::ln();
        let exact = LipschitzOptions { grid: 2048, safety: 1.0 };
        assert!(close(lipschitz_modulus(&h.scaled(0.3).unwrap(), &h, 0.5, 4.0, &exact).unwrap(), 0.3, 1e-15));
        assert!(close(lipschitz_modulus(&h, &h, 0.5, 4.0, &exact).unwrap(), 1.0, 1e-15));
        let e = lipschitz_modulus(&MonotoneFn::exp(), &MonotoneFn::identity(), 0.0, 1.0, &exact).unwrap();
        assert!(close(e, std::f64::consts::E, 1e-15));
        assert!(close(lipschitz_modulus(&h, &h, 0.5, 4.0, &LipschitzOptions::default()).unwrap(), 1.0, 1e-15));
        let padded =
            lipschitz_modulus(&MonotoneFn::exp(), &MonotoneFn::identity(), 0.0, 1.0, &LipschitzOptions::default());
        assert!(close(padded.unwrap(), std::f64::consts::E + 0.05 * (std::f64::consts::E - 1.0), 1e-12));

        let nd = MonotoneFn::new("t", Interval::real_line(), |t| t, None::<fn(f64) -> f64>).unwrap();
        assert!(matches!(lipschitz_modulus(&nd, &h, 0.5, 4.0, &exact), Err(Error::MissingDerivative(_))));
    }

    #[test]
    fn certificate_examples() {
        let h = MonotoneFn::cube();
        let s = [0.2, 0.6, 0.35];
        let fs: Vec<_> = s.iter().map(|&si| h.scaled(si).unwrap()).collect();
        let gs: Vec<_> = s.iter().map(|&si| h.scaled(1.0 - si).unwrap()).collect();
        let opts = LipschitzOptions { grid: 256, safety: 1.0 };
        let c = contraction_certificate(&fs, &gs, 0.5, 2.0, &opts).unwrap();
        for (a, want) in c.a.iter().zip(&s[1..]) {
            assert!(close(*a, *want, 1e-12));
        }
        for (b, want) in c.b.iter().zip(&s[..2]) {
            assert!(close(*b, 1.0 - want, 1e-12));
        }
        assert!(c.valid && c.lambda.unwrap() < 1.0);

        let c = certificate_from_moduli(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(c.w, vec![0.0]);
        assert!(!c.valid);

        let p = DescendantProblem::new(vec![half(), half()], 0.0, 1.0).unwrap();
        let r = solve_fixed_point(&p, &SolveOptions::default()).unwrap();
        let cert = r.certificate.unwrap();
        let (cv, lambda) = (cert.c.unwrap(), cert.lambda.unwrap());
        assert!(lambda < 1.0);
        // a_2 c_2 = lambda c_1 and b_1 c_1 = lambda c_2
        assert!((cert.a[0] * cv[1] - lambda * cv[0]).abs() <= 1e-10);
        assert!((cert.b[0] * cv[0] - lambda * cv[1]).abs() <= 1e-10);
    }

    #[test]
    fn sigma_examples() {
        for n in 1..=10usize {
            let s = vec![rat(1, 2); n];
            let sigma = sigma_weights_exact(&s).unwrap();
            for (i, sg) in sigma.iter().enumerate() {
                assert_eq!(*sg, rat((n - i) as i64, (n + 1) as i64));
            }
        }
        let sg = sigma_weights(&[0.5, 0.5]).unwrap();
        assert!(close(sg[0], 2.0 / 3.0, 1e-15) && close(sg[1], 1.0 / 3.0, 1e-15));
        assert!(matches!(sigma_weights(&[0.5, 1.0]), Err(Error::ParamOutOfRange(_))));
        assert!(matches!(sigma_weights(&[]), Err(Error::ParamOutOfRange(_))));
    }

    #[test]
    fn sigma_matches_power_formula() {
        for (l, m, n) in [(1i64, 3i64, 2usize), (2, 5, 4), (3, 4, 3)] {
            let sigma = sigma_weights_exact(&vec![rat(l, m); n]).unwrap();
            let np1 = n as u32 + 1;
            let (lp, rp) = (l.pow(np1), (m - l).pow(np1));
            for (k, sg) in sigma.iter().enumerate() {
                let i = k as u32 + 1;
                assert_eq!(*sg, rat(lp - l.pow(i) * (m - l).pow(np1 - i), lp - rp));
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let xi = closed_form_quasiarithmetic(&MonotoneFn::identity(), &[0.5, 0.5], 0.0, 1.0).unwrap();
        assert!(close(xi[0], 1.0 / 3.0, 1e-14) && close(xi[1], 2.0 / 3.0, 1e-14));
        assert_eq!(closed_form_quasiarithmetic(&MonotoneFn::ln(), &[0.3, 0.4], 2.0, 2.0).unwrap(), vec![2.0, 2.0]);
        let xi = closed_form_quasiarithmetic(&MonotoneFn::ln(), &[0.5, 0.5], 1.0, 16.0).unwrap();
        assert!(close(xi[0], 16f64.powf(1.0 / 3.0), 1e-13) && close(xi[1], 16f64.powf(2.0 / 3.0), 1e-13));
        assert!(matches!(
            closed_form_quasiarithmetic(&MonotoneFn::ln(), &[0.5, 0.5], -1.0, 1.0),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn rmat_examples() {
        let id = MonotoneFn::identity();
        let xi = closed_form_rmat(&id, &id, std::slice::from_ref(&id), 1, 0.0, 1.0).unwrap();
        assert!(close(xi[0], 0.5, 1e-14) && close(xi[1], 0.75, 1e-14));

        let two_id = id.scaled(2.0).unwrap();
        let p = DescendantProblem::new(vec![matkowski(&id, &two_id).unwrap(), matkowski(&id, &id).unwrap()], 0.0, 1.0)
            .unwrap();
        let r = solve_fixed_point(&p, &SolveOptions { tol: 1e-13, ..SolveOptions::default() }).unwrap();
        assert!(close(r.xi[0], 0.5, 1e-10) && close(r.xi[1], 0.75, 1e-10));

        let xi = closed_form_rmat(&id, &id, std::slice::from_ref(&id), 2, 4.0, 4.0).unwrap();
        assert_eq!(xi, vec![4.0, 4.0]);
        assert!(matches!(
            closed_form_rmat(&id, &id, std::slice::from_ref(&id), 3, 0.0, 1.0),
            Err(Error::IndexOutOfRange { .. })
        ));

        let (pp, qq) = (MonotoneFn::ln(), MonotoneFn::power(1.5).unwrap());
        let hs = vec![MonotoneFn::exp(), MonotoneFn::cube().scaled(0.2).unwrap()];
        for j in 1..=3 {
            let xi = closed_form_rmat(&pp, &qq, &hs, j, 0.5, 3.0).unwrap();
            let prob = rmat_problem(&pp, &qq, &hs, j, 0.5, 3.0).unwrap();
            assert!(prob.residual(&xi).unwrap() <= 1e-10, "j={j}");
        }
    }

    #[test]
    fn descendant_examples() {
        let d = descendant_mean(&[half(), half()], 1, &SolveOptions::default()).unwrap();
        assert!(d.certified() && d.mean.is_strict() && d.mean.is_continuous());
        let a23 = weighted_arithmetic(2.0 / 3.0).unwrap();
        for (x, y) in d.mean.sample_pairs(6) {
            assert!(close(d.mean.eval(x, y).unwrap(), a23.eval(x, y).unwrap(), 1e-8));
        }
        assert_eq!(d.mean.eval(1.5, 1.5).unwrap(), 1.5);

        let half_ln = MonotoneFn::ln().scaled(0.5).unwrap();
        let g = matkowski(&half_ln, &half_ln).unwrap();
        let d = descendant_mean(&[g.clone(), g], 2, &SolveOptions::default()).unwrap();
        assert!(d.certified());
        let qa = quasi_arithmetic(&MonotoneFn::ln(), 1.0 / 3.0).unwrap();
        for (x, y) in [(1.0, 16.0), (0.5, 2.0), (3.0, 40.0)] {
            assert!(close(d.mean.eval(x, y).unwrap(), qa.eval(x, y).unwrap(), 1e-8));
        }

        let d = descendant_mean(&[max_mean(), min_mean()], 1, &SolveOptions::default()).unwrap();
        assert!(!d.certified());
        assert!(matches!(
            descendant_mean(&[half(), half()], 3, &SolveOptions::default()),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    fn s_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.05f64..0.95, n)
    }

    fn generator() -> impl Strategy<Value = MonotoneFn> {
        prop_oneof![
            Just(MonotoneFn::identity()),
            Just(MonotoneFn::ln()),
            Just(MonotoneFn::exp()),
            Just(MonotoneFn::cube()),
            (0.5f64..3.0).prop_map(|p| MonotoneFn::power(p).unwrap()),
        ]
        .prop_flat_map(|f| (0.2f64..3.0).prop_map(move |c| f.scaled(c).unwrap()))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn phi_is_weakly_inward_on_the_ordered_box(
            s in s_vec(4),
            raw in prop::collection::vec(0.0f64..1.0, 4),
            (x, d) in (0.1f64..5.0, 0.0f64..5.0),
        ) {
            let means: Vec<Mean> = s.iter().map(|&si| quasi_arithmetic(&MonotoneFn::ln(), si).unwrap()).collect();
            let y = x + d;
            let p = DescendantProblem::new(means, x, y).unwrap();
            let mut t: Vec<f64> = raw.iter().map(|r| x + r * d).collect();
            t.sort_by(f64::total_cmp);
            let out = p.phi_apply(&t).unwrap();
            prop_assert!(out.iter().all(|&o| x <= o && o <= y));
            for k in 1..t.len() {
                if t[k - 1] == t[k] {
                    prop_assert!(out[k - 1] <= out[k]);
                }
            }
        }

        #[test]
        fn certified_phi_contracts_the_semimetric(
            s in s_vec(3),
            r1 in prop::collection::vec(0.0f64..1.0, 3),
            r2 in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            let h = MonotoneFn::exp();
            let means: Vec<Mean> = s.iter().map(|&si| quasi_arithmetic(&h, si).unwrap()).collect();
            let (x, y) = (-1.0, 2.0);
            let p = DescendantProblem::new(means, x, y).unwrap();
            let (fs, gs) = p.generators().unwrap();
            let cert = contraction_certificate(&fs, &gs, x, y, &LipschitzOptions::default()).unwrap();
            prop_assert!(cert.valid);
            let (c, lambda) = (cert.c.unwrap(), cert.lambda.unwrap());
            let mut t: Vec<f64> = r1.iter().map(|r| x + r * (y - x)).collect();
            let mut u: Vec<f64> = r2.iter().map(|r| x + r * (y - x)).collect();
            t.sort_by(f64::total_cmp);
            u.sort_by(f64::total_cmp);
            let before = weighted_semimetric(&fs, &gs, &c, &t, &u);
            let after = weighted_semimetric(&fs, &gs, &c, &p.phi_apply(&t).unwrap(), &p.phi_apply(&u).unwrap());
            prop_assert!(after <= lambda * before * (1.0 + 1e-10) + 1e-12);
        }

        #[test]
        fn closed_form_matches_solver(
            s in (2usize..=5).prop_flat_map(s_vec),
            pick in 0usize..4,
            (a, b) in (0.0f64..1.0, 0.0f64..1.0),
        ) {
            let (h, lo, hi) = [
                (MonotoneFn::identity(), -5.0, 5.0),
                (MonotoneFn::ln(), 0.1, 10.0),
                (MonotoneFn::exp(), -3.0, 3.0),
                (MonotoneFn::cube(), -2.0, 2.0),
            ][pick].clone();
            let (x, y) = { let (p, q) = (lo + a * (hi - lo), lo + b * (hi - lo)); (p.min(q), p.max(q)) };
            let xi = closed_form_quasiarithmetic(&h, &s, x, y).unwrap();
            let means: Vec<Mean> = s.iter().map(|&si| quasi_arithmetic(&h, si).unwrap()).collect();
            let p = DescendantProblem::new(means, x, y).unwrap();
            prop_assert!(p.residual(&xi).unwrap() <= 1e-10);
            let r = solve_fixed_point(&p, &SolveOptions { tol: 1e-12, ..SolveOptions::default() }).unwrap();
            prop_assert!(r.converged);
            prop_assert!(sup_dist(&r.xi, &xi) <= 1e-8);
            if x < y {
                prop_assert!(x < xi[0] && xi.windows(2).all(|w| w[0] < w[1]) && xi[xi.len() - 1] < y);
            }
        }

        #[test]
        fn rmat_closed_form_is_fixed(
            p in generator(), q in generator(), hs in prop::collection::vec(generator(), 1..4),
            j_raw in 0usize..8, (a, d) in (0.3f64..2.0, 0.0f64..2.0),
        ) {
            let n = hs.len() + 1;
            let j = 1 + j_raw % n;
            let (x, y) = (a, a + d);
            let xi = closed_form_rmat(&p, &q, &hs, j, x, y).unwrap();
            let prob = rmat_problem(&p, &q, &hs, j, x, y).unwrap();
            prop_assert!(prob.residual(&xi).unwrap() <= 1e-10);
            let lhs = p.eval(xi[j - 1]) + q.eval(xi[j - 1]);
            let rhs = p.eval(x) + q.eval(y);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }

        #[test]
        fn sigma_satisfies_its_linear_system(num in prop::collection::vec(1i64..20, 1..7)) {
            let s: Vec<ExactRational> = num.iter().map(|&k| rat(k, 21)).collect();
            let sg = sigma_weights_exact(&s).unwrap();
            let n = s.len();
            let one = ExactRational::one();
            if n == 1 {
                prop_assert_eq!(&sg[0], &s[0]);
            } else {
                prop_assert_eq!(&sg[0], &(&s[0] + (&one - &s[0]) * &sg[1]));
                for i in 1..n - 1 {
                    prop_assert_eq!(&sg[i], &(&s[i] * &sg[i - 1] + (&one - &s[i]) * &sg[i + 1]));
                }
                prop_assert_eq!(&sg[n - 1], &(&s[n - 1] * &sg[n - 2]));
            }
            prop_assert!(sg.windows(2).all(|w| w[0] > w[1]));
            prop_assert!(sg[n - 1] > ExactRational::zero() && sg[0] < one);
        }
    }
}
