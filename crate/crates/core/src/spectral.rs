//! The two-diagonal matrix `A(u, v)`: zero diagonal, superdiagonal `u`,
//! subdiagonal `v`, size `(n+1) x (n+1)`.
//!
//! `A(u, v)` has the same characteristic polynomial as the symmetric
//! tridiagonal matrix with off-diagonal `sqrt(u_i v_i)`, so its spectrum is
//! real, symmetric about zero, and computable by Sturm bisection.

use crate::error::{Error, Result};

/// Width to which eigenvalues are bisected inside reports.
pub const REPORT_TOL: f64 = 1e-13;

/// Distance from 1 within which the two criteria are not compared.
pub const BOUNDARY_BAND: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct TwoDiagonalMatrix {
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Outcome of comparing the `w` criterion against the computed spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossCheck {
    Agree,
    Disagree,
    /// The largest eigenvalue is within [`BOUNDARY_BAND`] of 1.
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    pub w: Vec<f64>,
    pub below_one_by_w: bool,
    pub below_one_by_eig: bool,
    pub sufficient: bool,
    pub cross_check: CrossCheck,
}

/// Positive eigenvector `c` (summing to 1) with eigenvalue `lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerronPair {
    pub c: Vec<f64>,
    pub lambda: f64,
}

impl TwoDiagonalMatrix {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::ShapeMismatch(format!("u has {} entries, v has {}", u.len(), v.len())));
        }
        if u.is_empty() {
            return Err(Error::ShapeMismatch("u and v must be non-empty".into()));
        }
        if let Some(bad) = u.iter().chain(&v).find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::ParamOutOfRange(format!("entries must be positive and finite, got {bad}")));
        }
        Ok(TwoDiagonalMatrix { u, v })
    }

    /// Number of off-diagonal entries; the matrix is `(n+1) x (n+1)`.
    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// `w_1..w_n` from `w_{-1} = w_0 = 1`, `w_k = w_{k-1} - u_k v_k w_{k-2}`.
    pub fn w_sequence(&self) -> Vec<f64> {
        let (mut prev, mut cur) = (1.0, 1.0);
        let mut out = Vec::with_capacity(self.n());
        for (u, v) in self.u.iter().zip(&self.v) {
            let next = cur - u * v * prev;
            out.push(next);
            prev = cur;
            cur = next;
        }
        out
    }

    /// Characteristic polynomial of the leading `(k+1) x (k+1)` block at `lambda`.
    pub fn char_poly(&self, k: usize, lambda: f64) -> Result<f64> {
        if k > self.n() {
            return Err(Error::IndexOutOfRange { index: k, max: self.n() });
        }
        let (mut prev, mut cur) = (1.0, lambda);
        for j in 0..k {
            let next = lambda * cur - self.u[j] * self.v[j] * prev;
            prev = cur;
            cur = next;
        }
        Ok(cur)
    }

    /// Gershgorin radius `1 + max_i 2 sqrt(u_i v_i)`.
    pub fn gershgorin_radius(&self) -> f64 {
        1.0 + self.u.iter().zip(&self.v).map(|(u, v)| 2.0 * (u * v).sqrt()).fold(0.0, f64::max)
    }

    /// Number of eigenvalues strictly below `lambda` (Sturm count via the
    /// pivots of the symmetrized `T - lambda I`).
    pub fn count_below(&self, lambda: f64) -> usize {
        let pivmin = f64::MIN_POSITIVE / f64::EPSILON;
        let mut d = -lambda;
        if d == 0.0 {
            d = -pivmin;
        }
        let mut count = usize::from(d < 0.0);
        for (u, v) in self.u.iter().zip(&self.v) {
            d = -lambda - u * v / d;
            if d.abs() < pivmin {
                d = -pivmin;
            }
            count += usize::from(d < 0.0);
        }
        count
    }

    /// All `n+1` eigenvalues in ascending order, each bisected to width `tol`.
    pub fn eigenvalues(&self, tol: f64) -> Result<Vec<f64>> {
        if !(tol > 0.0) {
            return Err(Error::ParamOutOfRange(format!("tolerance must be positive, got {tol}")));
        }
        let r = self.gershgorin_radius();
        (0..=self.n()).map(|k| self.bisect_eigenvalue(k, -r, r, tol).map(|(lo, hi)| 0.5 * (lo + hi))).collect()
    }

    /// Bracket `[lo, hi]` of width `<= tol` around the `k`-th smallest eigenvalue.
    fn bisect_eigenvalue(&self, k: usize, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)> {
        while hi - lo > tol {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                return Err(Error::ToleranceTooSmall { tol });
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok((lo, hi))
    }

    /// Upper end of a `tol`-bracket around the largest eigenvalue.
    fn max_eigenvalue_upper(&self, tol: f64) -> Result<f64> {
        let r = self.gershgorin_radius();
        Ok(self.bisect_eigenvalue(self.n(), -r, r, tol)?.1)
    }

    pub fn all_below_one(&self) -> Result<SpectralReport> {
        let eigenvalues = self.eigenvalues(REPORT_TOL)?;
        let w = self.w_sequence();
        let below_one_by_w = w.iter().all(|&x| x > 0.0);
        let max_eig = eigenvalues[eigenvalues.len() - 1];
        let below_one_by_eig = max_eig < 1.0;
        let cross_check = if (max_eig - 1.0).abs() <= BOUNDARY_BAND {
            CrossCheck::Indeterminate
        } else if below_one_by_w == below_one_by_eig {
            CrossCheck::Agree
        } else {
            CrossCheck::Disagree
        };
        Ok(SpectralReport {
            eigenvalues,
            w,
            below_one_by_w,
            below_one_by_eig,
            sufficient: self.sufficiency_check(),
            cross_check,
        })
    }

    /// `v_1 <= 1`, `max_i (u_i + v_{i+1}) <= 1` and `u_n < 1`; implies all `w_k > 0`.
    pub fn sufficiency_check(&self) -> bool {
        let n = self.n();
        self.v[0] <= 1.0 && (0..n - 1).all(|i| self.u[i] + self.v[i + 1] <= 1.0) && self.u[n - 1] < 1.0
    }

    /// `A(u, v) c`.
    pub fn mul_vec(&self, c: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if c.len() != n + 1 {
            return Err(Error::ShapeMismatch(format!("vector has {} entries, expected {}", c.len(), n + 1)));
        }
        Ok((0..=n)
            .map(|i| {
                let up = if i < n { self.u[i] * c[i + 1] } else { 0.0 };
                let down = if i > 0 { self.v[i - 1] * c[i - 1] } else { 0.0 };
                up + down
            })
            .collect())
    }

    /// `‖A c − lambda c‖∞`.
    pub fn residual(&self, c: &[f64], lambda: f64) -> Result<f64> {
        let ac = self.mul_vec(c)?;
        Ok(ac.iter().zip(c).map(|(a, x)| (a - lambda * x).abs()).fold(0.0, f64::max))
    }

    /// Perron eigenpair by power iteration on `A + R I`, normalized to the
    /// simplex. Slow runs are finished by inverse iteration with a shift just
    /// above the largest eigenvalue.
    pub fn positive_eigenvector(&self, tol: f64) -> Result<PerronPair> {
        if !(tol > 0.0) {
            return Err(Error::ParamOutOfRange(format!("tolerance must be positive, got {tol}")));
        }
        const POWER_STEPS: usize = 20_000;
        let n = self.n();
        let shift = self.gershgorin_radius();
        let mut c = vec![1.0 / (n + 1) as f64; n + 1];
        let mut lambda;
        let mut res = f64::INFINITY;
        for step in 0..POWER_STEPS {
            let ac = self.mul_vec(&c)?;
            lambda = ac.iter().sum::<f64>();
            if step % 8 == 0 {
                res = ac.iter().zip(&c).map(|(a, x)| (a - lambda * x).abs()).fold(0.0, f64::max);
                if res <= tol * norm_inf(&c) {
                    return Ok(PerronPair { c, lambda });
                }
            }
            let total = lambda + shift;
            for (x, a) in c.iter_mut().zip(&ac) {
                *x = (a + shift * *x) / total;
            }
        }

        let top = self.max_eigenvalue_upper(1e-15_f64.max(f64::EPSILON * shift))?;
        let mu = top + 1e-9 * top.abs().max(1.0);
        for _ in 0..50 {
            let mut z = self.solve_shifted(mu, &c);
            let total: f64 = z.iter().sum();
            z.iter_mut().for_each(|x| *x /= total);
            c = z;
            lambda = self.mul_vec(&c)?.iter().sum();
            res = self.residual(&c, lambda)?;
            if res <= tol * norm_inf(&c) {
                return Ok(PerronPair { c, lambda });
            }
        }
        Err(Error::NonConvergence { iterations: POWER_STEPS + 50, residual: res })
    }

    /// Solves `(mu I - A) z = rhs` by the Thomas algorithm. For `mu` above
    /// the spectral radius every pivot is positive and `z > 0` when `rhs > 0`.
    fn solve_shifted(&self, mu: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut piv = vec![0.0; n + 1];
        let mut r = rhs.to_vec();
        piv[0] = mu;
        for i in 0..n {
            let m = self.v[i] / piv[i];
            piv[i + 1] = mu - m * self.u[i];
            r[i + 1] += m * r[i];
        }
        let mut z = vec![0.0; n + 1];
        z[n] = r[n] / piv[n];
        for i in (0..n).rev() {
            z[i] = (r[i] + self.u[i] * z[i + 1]) / piv[i];
        }
        z
    }
}

fn norm_inf(c: &[f64]) -> f64 {
    c.iter().fold(0.0, |m, x| m.max(x.abs()))
}
