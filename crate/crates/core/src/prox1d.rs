//! Scalar proximal map of `p -> -V(x, t; p, a, b) / lambda`:
//!
//! `p* = argmin_p { -V(x, t; p) + (lambda / 2) (p - c)^2 }`.
//!
//! The objective is strictly convex and piecewise smooth. Each smooth piece has
//! a stationary point that is either closed form or the root of a monotone
//! scalar equation, so `p*` is the best of four candidates.

use crate::core1d::{value_unchecked, PotentialParams1D};
use crate::error::{check_finite, HjError, Result};

/// Inputs of one scalar prox evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxQuery {
    pub x: f64,
    pub t: f64,
    pub c: f64,
    pub lambda: f64,
    pub params: PotentialParams1D,
}

impl ProxQuery {
    pub fn new(x: f64, t: f64, c: f64, lambda: f64, params: PotentialParams1D) -> Result<Self> {
        let q = Self { x, t, c, lambda, params };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("x", self.x)?;
        check_finite("c", self.c)?;
        check_finite("t", self.t)?;
        check_finite("lambda", self.lambda)?;
        if self.t <= 0.0 {
            return Err(HjError::InvalidInput(format!("t must be positive, got {}", self.t)));
        }
        if self.lambda <= 0.0 {
            return Err(HjError::InvalidInput(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// `-V(x, t; p) + (lambda / 2) (p - c)^2`.
    pub fn objective(&self, p: f64) -> Result<f64> {
        objective(self.x, self.t, self.c, self.lambda, self.params.a(), self.params.b(), p)
    }
}

/// Stopping rule of the root finder for the crossing candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Tolerance on the stationarity residual, relative to the size of its terms.
    pub tol: f64,
    pub max_iter: usize,
    /// Run exactly this many steps and skip the tolerance test.
    pub fixed_iterations: Option<usize>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50, fixed_iterations: None }
    }
}

impl NewtonConfig {
    /// Fixed-latency mode with `n` steps.
    pub fn fixed(n: usize) -> Self {
        Self { fixed_iterations: Some(n), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || self.fixed_iterations == Some(0) {
            return Err(HjError::InvalidInput(format!("invalid newton config {self:?}")));
        }
        Ok(())
    }
}

/// Which stationary point won.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Candidate {
    /// Stationary point of the `f1` piece.
    P1,
    /// Stationary point of the `f2` piece.
    P2,
    /// Root of the `f3` stationarity equation.
    P3,
    /// Stationary point of the `f4`/`f5` pieces.
    P4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxSolution {
    pub p_star: f64,
    pub candidate: Candidate,
    /// Newton steps spent on the crossing candidate.
    pub iterations: usize,
    /// The crossing candidate itself; pass it back as a warm start.
    pub p3: f64,
}

#[inline]
fn objective(x: f64, t: f64, c: f64, lambda: f64, a: f64, b: f64, p: f64) -> Result<f64> {
    let d = p - c;
    Ok(-value_unchecked(x, t, p, a, b)? + 0.5 * lambda * d * d)
}

/// Residual of the `f3` stationarity equation and its derivative, `x >= 0`.
#[inline]
fn crossing_residual(x: f64, t: f64, c: f64, lambda: f64, a: f64, b: f64, p: f64) -> (f64, f64) {
    let q = b * t - p;
    let k = a + 2.0 * b;
    let kk = (a + b) / (k * k);
    let sd = (q * q + 2.0 * x * k).max(0.0).sqrt();
    let f = kk * (q * q + q * sd) - b * x / k - 0.5 * b * t * t + p * t + lambda * (p - c);
    let df = -2.0 * kk * (q + (q * q + x * k) / sd) + t + lambda;
    (f, df)
}

/// Crossing candidate for `x >= 0`. Returns `(root, steps)`.
fn crossing_root(
    x: f64,
    t: f64,
    c: f64,
    lambda: f64,
    a: f64,
    b: f64,
    cfg: &NewtonConfig,
    warm: Option<f64>,
) -> Result<(f64, usize)> {
    let p_lo = (x / t - 0.5 * a * t).max(b * t - b * (2.0 * x / a).sqrt()).max(0.0);
    let p_hi = (b * t + c.abs() + 1.0).max(p_lo);
    let res = |p: f64| crossing_residual(x, t, c, lambda, a, b, p);

    let (f_lo, _) = res(p_lo);
    if f_lo >= 0.0 {
        return Ok((p_lo, 0));
    }
    let (mut lo, mut hi) = (p_lo, p_hi);
    let mut f_hi = res(hi).0;
    let mut grow = 0;
    while f_hi < 0.0 {
        // the bracket guess was too small; push it outwards
        grow += 1;
        if grow > 200 || !f_hi.is_finite() {
            return Err(HjError::Internal(format!(
                "no sign change for crossing residual on [{p_lo}, {hi}]"
            )));
        }
        let w = hi - lo;
        lo = hi;
        hi += 2.0 * w + 1.0;
        f_hi = res(hi).0;
    }

    let scale = |p: f64| {
        1.0 + p.abs() * (t + lambda) + lambda * c.abs() + x.abs() + t * t * (a + b)
    };
    let mut p = warm.unwrap_or(p_lo + 1.0).clamp(lo, hi);
    let steps = cfg.fixed_iterations.unwrap_or(cfg.max_iter);
    let mut best = (p, f64::INFINITY);
    for k in 0..steps {
        let (f, df) = res(p);
        if f.abs() < best.1 {
            best = (p, f.abs());
        }
        if f == 0.0 {
            return Ok((p, k + 1));
        }
        if cfg.fixed_iterations.is_none() && f.abs() <= cfg.tol * scale(p) {
            return Ok((p, k + 1));
        }
        if f < 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let mut next = if df > 0.0 && df.is_finite() { p - f / df } else { f64::NAN };
        // a converged step may land on the bracket end it just moved
        if !(next >= lo && next <= hi) {
            next = 0.5 * (lo + hi);
        }
        if cfg.fixed_iterations.is_none() && hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            return Ok((next, k + 1));
        }
        p = next;
    }
    if cfg.fixed_iterations.is_some() {
        let (f, _) = res(p);
        let p = if f.abs() <= best.1 { p } else { best.0 };
        return Ok((p, steps));
    }
    Err(HjError::NewtonNotConverged { iterations: steps, best: best.0, residual: best.1 })
}

/// Minimizer of `-V(x, t; p) + (lambda / 2)(p - c)^2`.
pub fn prox_neg_value(query: &ProxQuery, cfg: &NewtonConfig) -> Result<ProxSolution> {
    prox_neg_value_warm(query, cfg, None)
}

/// As [`prox_neg_value`], with the crossing root seeded from `warm` (typically
/// the `p3` of a previous call on a nearby query).
pub fn prox_neg_value_warm(
    query: &ProxQuery,
    cfg: &NewtonConfig,
    warm: Option<f64>,
) -> Result<ProxSolution> {
    query.validate()?;
    cfg.validate()?;
    if let Some(w) = warm {
        check_finite("warm start", w)?;
    }
    prox_unchecked(
        query.x,
        query.t,
        query.c,
        query.lambda,
        query.params.a(),
        query.params.b(),
        cfg,
        warm,
    )
}

#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn prox_unchecked(
    x: f64,
    t: f64,
    c: f64,
    lambda: f64,
    a: f64,
    b: f64,
    cfg: &NewtonConfig,
    warm: Option<f64>,
) -> Result<ProxSolution> {
    let denom = t + lambda;
    let p1 = (-0.5 * a * t * t + x + lambda * c) / denom;
    let p2 = (0.5 * b * t * t + x + lambda * c) / denom;
    // roots of p^2/(2b) + lambda (p - c) = 0 and its mirror, in cancellation-free form
    let p4 = if c >= 0.0 {
        2.0 * b * lambda * c / (b * lambda + (b * b * lambda * lambda + 2.0 * b * lambda * c).sqrt())
    } else {
        2.0 * a * lambda * c / (a * lambda + (a * a * lambda * lambda - 2.0 * a * lambda * c).sqrt())
    };
    let (p3, iterations) = if x >= 0.0 {
        crossing_root(x, t, c, lambda, a, b, cfg, warm)?
    } else {
        let (r, k) = crossing_root(-x, t, -c, lambda, b, a, cfg, warm.map(|w| -w))?;
        (-r, k)
    };

    let cands = [(Candidate::P1, p1), (Candidate::P2, p2), (Candidate::P3, p3), (Candidate::P4, p4)];
    let mut best = (Candidate::P1, p1, f64::INFINITY);
    for (tag, p) in cands {
        if !p.is_finite() {
            return Err(HjError::Internal(format!("non-finite prox candidate {tag:?}")));
        }
        let j = objective(x, t, c, lambda, a, b, p)?;
        if j < best.2 {
            best = (tag, p, j);
        }
    }
    if !best.2.is_finite() {
        return Err(HjError::Internal("non-finite prox objective".into()));
    }
    Ok(ProxSolution { p_star: best.1, candidate: best.0, iterations, p3 })
}
