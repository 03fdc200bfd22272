//! Slow reference computations used to check the analytic solvers: dense grid
//! search, finite-difference PDE residuals, Simpson quadrature of trajectory
//! costs and a direct discretization of the optimal control problem.
//!
//! Nothing here calls into the closed forms or the ADMM code. Problem data is
//! read from the serializable descriptor only.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_len, HjError, Result};
use crate::hopf_solver::{ProblemDescriptor, ProblemSpec};
use crate::initial_costs::InitialCostSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub grid_points: usize,
    pub fd_step: f64,
    pub quad_panels: usize,
    pub oc_segments: usize,
    /// Stopping bound on the gradient-mapping norm of the direct solver.
    pub oc_tol: f64,
    pub oc_max_iter: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_points: 1_000_000,
            fd_step: 1e-4,
            quad_panels: 10_000,
            oc_segments: 200,
            oc_tol: 1e-9,
            oc_max_iter: 400_000,
        }
    }
}

/// `-U(s)` for the two-slope potential, written out independently.
#[inline]
pub fn neg_potential_1d(a: f64, b: f64, s: f64) -> f64 {
    if s > 0.0 {
        a * s
    } else {
        -b * s
    }
}

/// Dense grid search on `[lo, hi]` followed by a golden-section refinement of
/// the winning cell.
pub fn grid_argmin_1d<F: Fn(f64) -> f64>(objective: F, lo: f64, hi: f64, grid_points: usize) -> Result<f64> {
    if !(lo < hi) || grid_points < 2 {
        return Err(HjError::InvalidInput(format!("bad grid [{lo}, {hi}] with {grid_points} points")));
    }
    let h = (hi - lo) / (grid_points - 1) as f64;
    let mut best = (usize::MAX, f64::INFINITY);
    for k in 0..grid_points {
        let v = objective(lo + h * k as f64);
        if v < best.1 {
            best = (k, v);
        }
    }
    if best.0 == usize::MAX {
        return Err(HjError::InvalidInput("objective is not finite anywhere on the grid".into()));
    }
    let k = best.0;
    let mut l = lo + h * k.saturating_sub(1) as f64;
    let mut r = lo + h * (k + 1).min(grid_points - 1) as f64;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = r - ratio * (r - l);
    let mut d = l + ratio * (r - l);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..100 {
        if r - l <= 1e-15 * (1.0 + l.abs().max(r.abs())) {
            break;
        }
        if fc < fd {
            r = d;
            d = c;
            fd = fc;
            c = r - ratio * (r - l);
            fc = objective(c);
        } else {
            l = c;
            c = d;
            fc = fd;
            d = l + ratio * (r - l);
            fd = objective(d);
        }
    }
    let mid = 0.5 * (l + r);
    // keep the grid point if the refinement did not improve on it
    if objective(mid) <= best.1 {
        Ok(mid)
    } else {
        Ok(lo + h * k as f64)
    }
}

/// `|V_t + 0.5 <grad V, M grad V> + U(x)|` by central differences.
pub fn pde_residual<F, G>(value: F, x: &[f64], t: f64, m: &DMatrix<f64>, potential: G, h: f64) -> f64
where
    F: Fn(&[f64], f64) -> f64,
    G: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let vt = (value(x, t + h) - value(x, t - h)) / (2.0 * h);
    let mut grad = DVector::zeros(n);
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + h;
        let up = value(&xp, t);
        xp[i] = x[i] - h;
        let dn = value(&xp, t);
        xp[i] = x[i];
        grad[i] = (up - dn) / (2.0 * h);
    }
    (vt + 0.5 * grad.dot(&(m * &grad)) + potential(x)).abs()
}

/// A path on `[0, horizon]` with closed-form velocity, smooth between its
/// breakpoints.
pub trait PiecewiseTrajectory {
    fn dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn position(&self, s: f64) -> Vec<f64>;
    fn velocity(&self, s: f64) -> Vec<f64>;
    fn breakpoints(&self) -> Vec<f64>;
}

/// `int_0^t (0.5 |gamma'|^2_{M^-1} - U(gamma)) ds + Phi(gamma(0))` by composite
/// Simpson on each smooth piece.
pub fn trajectory_cost<T, U, P>(traj: &T, potential: U, phi: P, m: &DMatrix<f64>, quad_panels: usize) -> Result<f64>
where
    T: PiecewiseTrajectory + ?Sized,
    U: Fn(&[f64]) -> f64,
    P: Fn(&[f64]) -> f64,
{
    let n = traj.dim();
    check_len(n, m.nrows())?;
    let t = traj.horizon();
    let minv = if *m == DMatrix::identity(n, n) {
        None
    } else {
        Some(m.clone().lu().try_inverse().ok_or(HjError::SingularMatrix)?)
    };
    let integrand = |s: f64| {
        let v = traj.velocity(s);
        let kin = match &minv {
            None => v.iter().map(|c| c * c).sum::<f64>(),
            Some(mi) => {
                let vv = DVector::from_column_slice(&v);
                vv.dot(&(mi * &vv))
            }
        };
        0.5 * kin - potential(&traj.position(s))
    };
    let mut cuts = vec![0.0];
    let mut bps = traj.breakpoints();
    bps.sort_by(f64::total_cmp);
    cuts.extend(bps.into_iter().filter(|&s| s > 0.0 && s < t));
    cuts.push(t);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (l, r) = (w[0], w[1]);
        if r <= l {
            continue;
        }
        let mut k = ((quad_panels as f64) * (r - l) / t).ceil() as usize;
        k = k.max(2);
        k += k % 2;
        let h = (r - l) / k as f64;
        // sample just inside the piece so each endpoint uses its own formula
        let nudge = 1e-13 * (r - l);
        let mut s = integrand(l + nudge) + integrand(r - nudge);
        for j in 1..k {
            let wj = if j % 2 == 1 { 4.0 } else { 2.0 };
            s += wj * integrand(l + h * j as f64);
        }
        total += s * h / 3.0;
    }
    Ok(total + phi(&traj.position(0.0)))
}

/// Data for the direct solver, read from a problem descriptor.
#[derive(Debug, Clone)]
pub struct OcProblem {
    a: Vec<f64>,
    b: Vec<f64>,
    p: DMatrix<f64>,
    u0: DVector<f64>,
    cost: OcCost,
}

#[derive(Debug, Clone)]
enum OcCost {
    Linear(DVector<f64>),
    Quadratic { center: DVector<f64>, weight: f64, offset: f64 },
    /// `sqrt(x^T M x)` with `M` given.
    Norm(DMatrix<f64>),
}

impl OcProblem {
    pub fn from_descriptor(desc: &ProblemDescriptor) -> Result<Self> {
        let n = desc.a.len();
        check_len(n, desc.b.len())?;
        if n == 0 || n > 3 {
            return Err(HjError::Unsupported(format!("direct solver is limited to n <= 3, got {n}")));
        }
        let (p, u0) = match &desc.transform {
            None => (DMatrix::identity(n, n), DVector::zeros(n)),
            Some(tr) => {
                check_len(n, tr.p.len())?;
                check_len(n, tr.u0.len())?;
                (DMatrix::from_fn(n, n, |i, j| tr.p[i][j]), DVector::from_column_slice(&tr.u0))
            }
        };
        let cost = match &desc.cost {
            InitialCostSpec::Linear { slope } => OcCost::Linear(DVector::from_column_slice(slope)),
            InitialCostSpec::Quadratic { center, weight, offset } => OcCost::Quadratic {
                center: DVector::from_column_slice(center),
                weight: *weight,
                offset: *offset,
            },
            InitialCostSpec::EllipsoidNorm { matrix } => OcCost::Norm(DMatrix::from_fn(n, n, |i, j| matrix[i][j])),
            other => {
                return Err(HjError::Unsupported(format!("direct solver does not handle {other:?}")));
            }
        };
        Ok(Self { a: desc.a.clone(), b: desc.b.clone(), p, u0, cost })
    }

    fn phi_reduced(&self, y: &DVector<f64>) -> f64 {
        let x = &self.p * y + &self.u0;
        match &self.cost {
            OcCost::Linear(s) => s.dot(&x),
            OcCost::Quadratic { center, weight, offset } => (x - center).norm_squared() / (2.0 * weight) + offset,
            OcCost::Norm(m) => x.dot(&(m * &x)).max(0.0).sqrt(),
        }
    }

    fn psi(&self, y: &[f64]) -> f64 {
        y.iter().enumerate().map(|(i, &s)| neg_potential_1d(self.a[i], self.b[i], s)).sum()
    }
}

/// Prox of `alpha ||.||_E` with `||w||_E = sqrt(w^T E w)`: the Moreau
/// complement of projecting `w / alpha` onto `{q : q^T E^-1 q <= 1}`, done by
/// bisection on the multiplier in the eigenbasis of `E`.
struct NormProx {
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
    shift: DVector<f64>,
}

impl NormProx {
    fn apply(&self, v: &DVector<f64>, alpha: f64) -> DVector<f64> {
        let w = v + &self.shift;
        let q = &self.eig.eigenvectors;
        let lam = &self.eig.eigenvalues;
        let z = q.tr_mul(&(&w / alpha));
        let gauge = |mu: f64| -> f64 {
            z.iter().zip(lam.iter()).map(|(zi, li)| zi * zi * li / ((li + mu) * (li + mu))).sum::<f64>()
        };
        let proj = if gauge(0.0) <= 1.0 {
            z.clone()
        } else {
            let mut lo = 0.0;
            let mut hi = 1.0;
            while gauge(hi) > 1.0 {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gauge(mid) > 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            let mu = hi;
            DVector::from_iterator(z.len(), z.iter().zip(lam.iter()).map(|(zi, li)| zi * li / (li + mu)))
        };
        w - q * proj * alpha - &self.shift
    }
}

/// Discrete optimal value of the control problem: piecewise linear path with
/// `segments` pieces, trapezoidal running cost, minimized by accelerated
/// proximal gradient with adaptive restart.
pub fn direct_oc_solve(x: &[f64], t: f64, spec: &ProblemSpec, segments: usize, tol: f64) -> Result<f64> {
    let prob = OcProblem::from_descriptor(spec.descriptor())?;
    direct_oc_solve_with(x, t, &prob, segments, tol, OracleConfig::default().oc_max_iter)
}

pub fn direct_oc_solve_with(
    x: &[f64],
    t: f64,
    prob: &OcProblem,
    segments: usize,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let n = prob.a.len();
    check_len(n, x.len())?;
    if !(t > 0.0) || segments < 2 || !(tol > 0.0) {
        return Err(HjError::InvalidInput("direct solver needs t > 0, segments >= 2, tol > 0".into()));
    }
    let k = segments;
    let h = t / k as f64;
    let y_end = prob
        .p
        .clone()
        .lu()
        .solve(&(DVector::from_column_slice(x) - &prob.u0))
        .ok_or(HjError::SingularMatrix)?;

    // node 0 carries half the potential weight; it is smoothed (Moreau
    // envelope with parameter delta) so that its prox only involves Phi
    let delta = 0.5 * h * h;
    let pt_p = prob.p.transpose() * &prob.p;
    let lip_phi = match &prob.cost {
        OcCost::Quadratic { weight, .. } => SymmetricEigen::new(pt_p.clone()).eigenvalues.max() / weight,
        _ => 0.0,
    };
    let lip = 4.0 / h + 0.5 * h / delta + lip_phi;
    let step = 1.0 / lip;
    let norm_prox = match &prob.cost {
        OcCost::Norm(m) => {
            let e = prob.p.transpose() * m * &prob.p;
            let e = (&e + e.transpose()) * 0.5;
            let shift = prob.p.clone().lu().solve(&prob.u0).ok_or(HjError::SingularMatrix)?;
            Some(NormProx { eig: SymmetricEigen::new(e), shift })
        }
        _ => None,
    };

    // nodes 0..k-1 are free, stored row-major [node][coord]; node k is y_end
    let len = k * n;
    let mut cur: Vec<f64> = (0..len).map(|j| y_end[j % n]).collect();
    let mut prev = cur.clone();
    let mut look = cur.clone();
    let mut grad = vec![0.0; len];
    let mut theta = 1.0f64;

    let node = |buf: &[f64], j: usize, i: usize| if j == k { y_end[i] } else { buf[j * n + i] };

    let mut converged = false;
    for _ in 0..max_iter {
        // gradient of the smooth part at the look-ahead point
        for j in 0..k {
            for i in 0..n {
                let yj = look[j * n + i];
                let mut g = (yj - node(&look, j + 1, i)) / h;
                if j > 0 {
                    g += (yj - look[(j - 1) * n + i]) / h;
                }
                grad[j * n + i] = g;
            }
        }
        for i in 0..n {
            let s = look[i];
            let (a, b) = (prob.a[i], prob.b[i]);
            let huber = if s > delta * a {
                a
            } else if s < -delta * b {
                -b
            } else {
                s / delta
            };
            grad[i] += 0.5 * h * huber;
        }
        let y0 = DVector::from_column_slice(&look[..n]);
        match &prob.cost {
            OcCost::Quadratic { center, weight, .. } => {
                let g = prob.p.tr_mul(&(&prob.p * &y0 + &prob.u0 - center)) / *weight;
                for i in 0..n {
                    grad[i] += g[i];
                }
            }
            OcCost::Linear(s) => {
                let g = prob.p.tr_mul(s);
                for i in 0..n {
                    grad[i] += g[i];
                }
            }
            OcCost::Norm(_) => {}
        }

        std::mem::swap(&mut prev, &mut cur);
        for j in 0..len {
            cur[j] = look[j] - step * grad[j];
        }
        // prox of the non-smooth part
        let alpha = step * h;
        for j in 1..k {
            for i in 0..n {
                let v = cur[j * n + i];
                let (a, b) = (prob.a[i], prob.b[i]);
                cur[j * n + i] = if v > alpha * a {
                    v - alpha * a
                } else if v < -alpha * b {
                    v + alpha * b
                } else {
                    0.0
                };
            }
        }
        if let Some(np) = &norm_prox {
            let v0 = DVector::from_column_slice(&cur[..n]);
            let r = np.apply(&v0, step);
            cur[..n].copy_from_slice(r.as_slice());
        }

        let mut gm = 0.0f64;
        let mut restart_dot = 0.0;
        for j in 0..len {
            let d = cur[j] - look[j];
            gm += d * d;
            restart_dot += (look[j] - cur[j]) * (cur[j] - prev[j]);
        }
        if gm.sqrt() * lip <= tol {
            converged = true;
            break;
        }
        if restart_dot > 0.0 {
            theta = 1.0;
            look.copy_from_slice(&cur);
        } else {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            for j in 0..len {
                look[j] = cur[j] + beta * (cur[j] - prev[j]);
            }
            theta = theta_next;
        }
    }
    if !converged {
        return Err(HjError::DescentNotConverged(max_iter));
    }

    let mut cost = 0.0;
    for j in 0..k {
        for i in 0..n {
            let d = node(&cur, j + 1, i) - node(&cur, j, i);
            cost += d * d / (2.0 * h);
        }
    }
    let yk = y_end.as_slice().to_vec();
    cost += h * (0.5 * prob.psi(&cur[..n]) + 0.5 * prob.psi(&yk));
    for j in 1..k {
        cost += h * prob.psi(&cur[j * n..(j + 1) * n]);
    }
    cost += prob.phi_reduced(&DVector::from_column_slice(&cur[..n]));
    Ok(cost)
}
