//! Closed-form one-dimensional value function `V(x, t; p, a, b)` and optimal
//! trajectory for the potential `U(x) = -a x` (x >= 0), `U(x) = b x` (x < 0)
//! with linear initial cost `p x`.
//!
//! Everything is written for `p >= 0`; negative slopes go through the
//! reflection `V(x, t; p, a, b) = V(-x, t; -p, b, a)`.

use crate::error::{check_finite, HjError, Result};

/// Slopes of the two-sided potential. Both are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams1D {
    a: f64,
    b: f64,
}

impl PotentialParams1D {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
            return Err(HjError::InvalidInput(format!(
                "potential slopes must be positive and finite, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Parameters of the mirrored problem (`x -> -x` swaps the slopes).
    #[inline]
    pub fn swapped(&self) -> Self {
        Self { a: self.b, b: self.a }
    }

    /// `U(x)`.
    #[inline]
    pub fn potential(&self, x: f64) -> f64 {
        if x >= 0.0 {
            -self.a * x
        } else {
            self.b * x
        }
    }
}

/// Region of the `(x, t)` half plane for a fixed `p >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionId {
    Omega1,
    Omega2,
    Omega3,
    Omega4,
    Omega5,
}

/// A query point. `s` is only used by trajectory queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point1D {
    pub x: f64,
    pub t: f64,
    pub p: f64,
    pub s: f64,
}

impl Point1D {
    /// Point with running time `s = t`.
    pub fn new(x: f64, t: f64, p: f64) -> Result<Self> {
        validate(x, t, p)?;
        Ok(Self { x, t, p, s: t })
    }

    pub fn with_s(self, s: f64) -> Result<Self> {
        check_s(s, self.t)?;
        Ok(Self { s, ..self })
    }

    pub fn value(&self, params: &PotentialParams1D) -> Result<f64> {
        value(self.x, self.t, self.p, params)
    }

    pub fn trajectory(&self, params: &PotentialParams1D) -> Result<f64> {
        trajectory(self.s, self.x, self.t, self.p, params)
    }
}

fn validate(x: f64, t: f64, p: f64) -> Result<()> {
    check_finite("x", x)?;
    check_finite("p", p)?;
    check_finite("t", t)?;
    if t < 0.0 {
        return Err(HjError::InvalidInput(format!("t must be non-negative, got {t}")));
    }
    Ok(())
}

fn check_s(s: f64, t: f64) -> Result<()> {
    if !(0.0..=t).contains(&s) {
        return Err(HjError::InvalidInput(format!("s={s} outside [0, {t}]")));
    }
    Ok(())
}

/// Square root that tolerates rounding-level negative arguments.
#[inline]
pub(crate) fn sqrt_guarded(d: f64) -> Result<f64> {
    if d >= 0.0 {
        Ok(d.sqrt())
    } else if -d <= 1e-12 * (1.0 + d.abs()) {
        Ok(0.0)
    } else {
        Err(HjError::Internal(format!("negative discriminant {d:e}")))
    }
}

/// Region lookup with the half-open conventions of the closed form.
/// Requires `p >= 0`, `t >= 0`.
#[inline]
pub(crate) fn region_pos(x: f64, t: f64, p: f64, a: f64, b: f64) -> RegionId {
    if x >= p * t + 0.5 * a * t * t {
        return RegionId::Omega1;
    }
    let early = t < p / b;
    let lag = t - p / b;
    if x < 0.0 {
        if early || x < -0.5 * b * lag * lag {
            RegionId::Omega2
        } else {
            RegionId::Omega5
        }
    } else if early || x >= 0.5 * a * lag * lag {
        RegionId::Omega3
    } else {
        RegionId::Omega4
    }
}

pub fn classify_region(x: f64, t: f64, p: f64, params: &PotentialParams1D) -> Result<RegionId> {
    validate(x, t, p)?;
    if p < 0.0 {
        return Err(HjError::InvalidInput(format!(
            "classify_region needs p >= 0 (reflect first), got {p}"
        )));
    }
    Ok(region_pos(x, t, p, params.a, params.b))
}

#[inline]
fn f1(x: f64, t: f64, p: f64, a: f64) -> f64 {
    let q = a * t + p;
    (p * p * p - q * q * q) / (6.0 * a) + x * q
}

#[inline]
fn f2(x: f64, t: f64, p: f64, b: f64) -> f64 {
    let q = b * t - p;
    -(p * p * p + q * q * q) / (6.0 * b) - x * q
}

#[inline]
fn f3(x: f64, t: f64, p: f64, a: f64, b: f64) -> Result<f64> {
    let q = b * t - p;
    let k = a + 2.0 * b;
    let sd = sqrt_guarded(q * q + 2.0 * x * k)?;
    Ok((a + b) / (3.0 * k * k) * (q * q * q + sd * sd * sd) - b * x * q / k
        - (p * p * p + q * q * q) / (6.0 * b))
}

#[inline]
fn f4(x: f64, p: f64, a: f64, b: f64) -> f64 {
    let ax = x.abs();
    (8.0 * a * ax * ax * ax).sqrt() / 3.0 - p * p * p / (6.0 * b)
}

/// Value for `p >= 0`, `t > 0` in the branch-reduced form.
#[inline]
pub(crate) fn value_pos(x: f64, t: f64, p: f64, a: f64, b: f64) -> Result<f64> {
    if x >= p * t + 0.5 * a * t * t {
        return Ok(f1(x, t, p, a));
    }
    if x >= 0.0 {
        return Ok(f3(x, t, p, a, b)?.max(f4(x, p, a, b)));
    }
    let lag = t - p / b;
    if lag < 0.0 || x < -0.5 * b * lag * lag {
        Ok(f2(x, t, p, b))
    } else {
        // f5 has the same shape as f4 with b in place of a
        Ok(f4(x, p, b, b))
    }
}

/// `V(x, t; p, a, b)`.
pub fn value(x: f64, t: f64, p: f64, params: &PotentialParams1D) -> Result<f64> {
    validate(x, t, p)?;
    value_unchecked(x, t, p, params.a, params.b)
}

/// `value` without input validation, for hot loops with trusted inputs.
#[inline]
pub(crate) fn value_unchecked(x: f64, t: f64, p: f64, a: f64, b: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(p * x);
    }
    if p >= 0.0 {
        value_pos(x, t, p, a, b)
    } else {
        value_pos(-x, t, -p, b, a)
    }
}

/// The expanded polynomial form of the piece attached to `region`, evaluated
/// at `(x, t, p)` whether or not the point lies in that region (as long as
/// the square roots are real). Requires `p >= 0`, `t > 0`.
pub fn piece_value(region: RegionId, x: f64, t: f64, p: f64, params: &PotentialParams1D) -> Result<f64> {
    validate(x, t, p)?;
    require_positive_t(t)?;
    if p < 0.0 {
        return Err(HjError::InvalidInput(format!("piece_value needs p >= 0, got {p}")));
    }
    let (a, b) = (params.a, params.b);
    let (t2, t3) = (t * t, t * t * t);
    let real = |v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(HjError::InvalidInput(format!("{region:?} piece is not real at x={x}")))
        }
    };
    match region {
        RegionId::Omega1 => Ok(-a * a * t3 / 6.0 - a * p * t2 / 2.0 + a * t * x - p * p * t / 2.0 + p * x),
        RegionId::Omega2 => Ok(-b * b * t3 / 6.0 + b * p * t2 / 2.0 - p * p * t / 2.0 + p * x - b * t * x),
        RegionId::Omega3 => {
            let q = b * t - p;
            let k = a + 2.0 * b;
            let delta = q * q + 2.0 * x * k;
            Ok((a + b) / (3.0 * k * k) * (q.powi(3) + sqrt_guarded(delta)?.powi(3))
                - b * q * x / k
                - b * b * t3 / 6.0
                + b * p * t2 / 2.0
                - p * p * t / 2.0)
        }
        RegionId::Omega4 => real(a * a / 3.0 * (2.0 * x / a).powf(1.5) - p.powi(3) / (6.0 * b)),
        RegionId::Omega5 => real(b * b / 3.0 * (-2.0 * x / b).powf(1.5) - p.powi(3) / (6.0 * b)),
    }
}

/// Region-by-region evaluation with the expanded polynomial forms. Slower and
/// independent of `value`; used to cross-check it.
pub fn value_by_region(x: f64, t: f64, p: f64, params: &PotentialParams1D) -> Result<f64> {
    validate(x, t, p)?;
    if t == 0.0 {
        return Ok(p * x);
    }
    if p >= 0.0 {
        piece_value(region_pos(x, t, p, params.a, params.b), x, t, p, params)
    } else {
        let m = params.swapped();
        piece_value(region_pos(-x, t, -p, m.a, m.b), -x, t, -p, &m)
    }
}

/// `(V_p, V_x, V_t, V_pp)` for `p >= 0`, `t > 0`.
pub(crate) fn derivs_pos(x: f64, t: f64, p: f64, a: f64, b: f64) -> Result<[f64; 4]> {
    Ok(match region_pos(x, t, p, a, b) {
        RegionId::Omega1 => [
            -0.5 * a * t * t - p * t + x,
            a * t + p,
            -0.5 * a * a * t * t - a * p * t + a * x - 0.5 * p * p,
            -t,
        ],
        RegionId::Omega2 => [
            0.5 * b * t * t - p * t + x,
            p - b * t,
            -0.5 * b * b * t * t + b * p * t - b * x - 0.5 * p * p,
            -t,
        ],
        RegionId::Omega3 => {
            let q = b * t - p;
            let k = a + 2.0 * b;
            let sd = sqrt_guarded(q * q + 2.0 * x * k)?;
            let c = (a + b) / (k * k);
            let dpp = if sd > 0.0 {
                2.0 * c * (q + (q * q + x * k) / sd) - t
            } else {
                f64::INFINITY
            };
            [
                c * (-q * q - q * sd) + b * x / k + 0.5 * b * t * t - p * t,
                (a + b) / k * sd - b * q / k,
                b * c * (q * q + q * sd) - b * b * x / k - 0.5 * b * b * t * t + b * p * t
                    - 0.5 * p * p,
                dpp,
            ]
        }
        RegionId::Omega4 => [-0.5 * p * p / b, (2.0 * a * x).sqrt(), 0.0, -p / b],
        RegionId::Omega5 => [-0.5 * p * p / b, -(-2.0 * b * x).sqrt(), 0.0, -p / b],
    })
}

/// `(V_p, V_x, V_t)` for any sign of `p`, `t > 0`.
#[inline]
pub(crate) fn derivs_unchecked(x: f64, t: f64, p: f64, a: f64, b: f64) -> Result<[f64; 3]> {
    if p >= 0.0 {
        let [dp, dx, dt, _] = derivs_pos(x, t, p, a, b)?;
        Ok([dp, dx, dt])
    } else {
        let [dp, dx, dt, _] = derivs_pos(-x, t, -p, b, a)?;
        Ok([-dp, -dx, dt])
    }
}

/// `dV/dp`. At `t = 0` this is `x`.
pub fn value_dp(x: f64, t: f64, p: f64, params: &PotentialParams1D) -> Result<f64> {
    validate(x, t, p)?;
    if t == 0.0 {
        return Ok(x);
    }
    Ok(derivs_unchecked(x, t, p, params.a, params.b)?[0])
}

/// `dV/dx`, for `t > 0`.
pub fn value_dx(x: f64, t: f64, p: f64, params: &PotentialParams1D) -> Result<f64> {
    validate(x, t, p)?;
    require_positive_t(t)?;
    Ok(derivs_unchecked(x, t, p, params.a, params.b)?[1])
}

/// `dV/dt`, for `t > 0`.
pub fn value_dt(x: f64, t: f64, p: f64, params: &PotentialParams1D) -> Result<f64> {
    validate(x, t, p)?;
    require_positive_t(t)?;
    Ok(derivs_unchecked(x, t, p, params.a, params.b)?[2])
}

fn require_positive_t(t: f64) -> Result<()> {
    if t > 0.0 {
        Ok(())
    } else {
        Err(HjError::InvalidInput(format!("t must be positive, got {t}")))
    }
}

/// Switching time of the Omega3 trajectory (where it crosses zero).
#[inline]
fn crossing_time(x: f64, t: f64, p: f64, a: f64, b: f64) -> Result<f64> {
    let q = b * t - p;
    let k = a + 2.0 * b;
    let sd = sqrt_guarded(q * q + 2.0 * x * k)?;
    Ok(((a + b) * t + p - sd) / k)
}

/// Position and velocity for `p >= 0`.
fn trajectory_pos(s: f64, x: f64, t: f64, p: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    Ok(match region_pos(x, t, p, a, b) {
        RegionId::Omega1 => (x - p * (t - s) - 0.5 * a * (t * t - s * s), p + a * s),
        RegionId::Omega2 => (x - p * (t - s) + 0.5 * b * (t * t - s * s), p - b * s),
        RegionId::Omega3 => {
            let tau = crossing_time(x, t, p, a, b)?;
            if s < tau {
                (-p * (tau - s) + 0.5 * b * (tau * tau - s * s), p - b * s)
            } else {
                let r = s - tau;
                let v0 = p - b * tau;
                (v0 * r + 0.5 * a * r * r, v0 + a * r)
            }
        }
        RegionId::Omega4 | RegionId::Omega5 => {
            let positive = x >= 0.0;
            let slope = if positive { a } else { b };
            let dwell_end = t - (2.0 * x.abs() / slope).sqrt();
            if s < p / b {
                let v = p - b * s;
                (-v * v / (2.0 * b), v)
            } else if s < dwell_end {
                (0.0, 0.0)
            } else {
                let r = s - dwell_end;
                if positive {
                    (0.5 * a * r * r, a * r)
                } else {
                    (-0.5 * b * r * r, -b * r)
                }
            }
        }
    })
}

fn breakpoints_pos(x: f64, t: f64, p: f64, a: f64, b: f64) -> Result<Vec<f64>> {
    Ok(match region_pos(x, t, p, a, b) {
        RegionId::Omega1 | RegionId::Omega2 => Vec::new(),
        RegionId::Omega3 => vec![crossing_time(x, t, p, a, b)?],
        RegionId::Omega4 => vec![p / b, t - (2.0 * x / a).sqrt()],
        RegionId::Omega5 => vec![p / b, t - (-2.0 * x / b).sqrt()],
    })
}

/// Position and velocity of the optimal path at running time `s`, any sign of
/// `p`. Requires `0 <= s <= t`, `t > 0`; no validation.
#[inline]
pub(crate) fn trajectory_state_unchecked(
    s: f64,
    x: f64,
    t: f64,
    p: f64,
    a: f64,
    b: f64,
) -> Result<(f64, f64)> {
    if s == t {
        // the terminal constraint holds exactly; the velocity still comes
        // from the closed form
        let (_, v) = if p >= 0.0 {
            trajectory_pos(s, x, t, p, a, b)?
        } else {
            let (g, v) = trajectory_pos(s, -x, t, -p, b, a)?;
            (-g, -v)
        };
        return Ok((x, v));
    }
    if p >= 0.0 {
        trajectory_pos(s, x, t, p, a, b)
    } else {
        let (g, v) = trajectory_pos(s, -x, t, -p, b, a)?;
        Ok((-g, -v))
    }
}

fn check_trajectory_args(s: f64, x: f64, t: f64, p: f64) -> Result<()> {
    validate(x, t, p)?;
    require_positive_t(t)?;
    check_finite("s", s)?;
    check_s(s, t)
}

/// `gamma(s; x, t, p, a, b)`.
pub fn trajectory(s: f64, x: f64, t: f64, p: f64, params: &PotentialParams1D) -> Result<f64> {
    check_trajectory_args(s, x, t, p)?;
    Ok(trajectory_state_unchecked(s, x, t, p, params.a, params.b)?.0)
}

/// `d gamma / ds`, from the closed form of each piece.
pub fn trajectory_velocity(
    s: f64,
    x: f64,
    t: f64,
    p: f64,
    params: &PotentialParams1D,
) -> Result<f64> {
    check_trajectory_args(s, x, t, p)?;
    Ok(trajectory_state_unchecked(s, x, t, p, params.a, params.b)?.1)
}

/// Interior switching times of the trajectory, sorted, clipped to `(0, t)`.
pub fn trajectory_breakpoints(
    x: f64,
    t: f64,
    p: f64,
    params: &PotentialParams1D,
) -> Result<Vec<f64>> {
    validate(x, t, p)?;
    require_positive_t(t)?;
    let mut bps = if p >= 0.0 {
        breakpoints_pos(x, t, p, params.a, params.b)?
    } else {
        breakpoints_pos(-x, t, -p, params.b, params.a)?
    };
    bps.retain(|&s| s > 0.0 && s < t);
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    Ok(bps)
}
