//! High-dimensional Hopf-formula solvers.
//!
//! With `M = P P^T` and `x~ = P^-1 (x - u0)` the value is
//!
//! `V(x, t) = sup_p  sum_i V(x~_i, t; p_i, a_i, b_i) - Phi~*(p)`,
//!
//! where `Phi~(y) = Phi(P y + u0)`. Without a transform `P = I`, `u0 = 0`.
//! Every supported cost is turned into a [`ReducedCost`] once, when the
//! [`ProblemSpec`] is built. The supremum is then found in closed form for
//! separable quadratics and by ADMM otherwise; min-of-quadratics costs are
//! solved branch by branch.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::core1d::{trajectory_breakpoints, trajectory_state_unchecked, value_unchecked, PotentialParams1D};
use crate::error::{check_finite, check_len, HjError, Result};
use crate::initial_costs::{
    dot, minplus_components, prox_shifted_l1_squared, rows_to_matrix, Ellipsoid, InitialCostSpec,
};
use crate::oracle::PiecewiseTrajectory;
use crate::prox1d::{prox_unchecked, NewtonConfig};

/// Affine change of variables `x = P y + u0`, as stored in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    /// Row-major `n x n` matrix.
    pub p: Vec<Vec<f64>>,
    pub u0: Vec<f64>,
}

/// Serializable problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub transform: Option<TransformSpec>,
    pub cost: InitialCostSpec,
}

#[derive(Debug, Clone)]
struct Transform {
    p: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    u0: DVector<f64>,
    identity: bool,
}

impl Transform {
    fn reduce(&self, x: &[f64]) -> Vec<f64> {
        let r = DVector::from_column_slice(x) - &self.u0;
        // invertibility was checked at construction
        self.lu.solve(&r).map(|v| v.as_slice().to_vec()).unwrap_or_else(|| vec![f64::NAN; x.len()])
    }

    fn expand(&self, y: &[f64]) -> Vec<f64> {
        (&self.p * DVector::from_column_slice(y) + &self.u0).as_slice().to_vec()
    }
}

/// The cost after the change of variables, in the form the solvers need.
#[derive(Debug, Clone)]
pub(crate) enum ReducedCost {
    /// `Phi~(y) = <slope, y> + constant`.
    Linear { slope: Vec<f64>, constant: f64 },
    /// `Phi~*(p) = sum_i w_i p_i^2 / 2 + g_i p_i - offset`.
    DiagQuadratic { g: Vec<f64>, w: Vec<f64>, offset: f64 },
    /// `Phi~*(p) = p^T H p / 2 + <g, p> - offset`.
    DenseQuadratic { h: DMatrix<f64>, g: DVector<f64>, offset: f64 },
    /// `Phi~*(p) = indicator(p in set) - <p, shift>`.
    Ellipsoid { set: Ellipsoid, shift: Vec<f64> },
    /// `Phi~(y) = 0.5 ||y - shift||_1^2`.
    L1Squared { shift: Vec<f64> },
}

impl ReducedCost {
    fn conjugate(&self, p: &[f64]) -> f64 {
        match self {
            Self::Linear { constant, .. } => -constant,
            Self::DiagQuadratic { g, w, offset } => {
                let mut s = 0.0;
                for ((pi, gi), wi) in p.iter().zip(g).zip(w) {
                    let u = pi + gi / wi;
                    s += 0.5 * wi * u * u - gi * gi / (2.0 * wi);
                }
                s - offset
            }
            Self::DenseQuadratic { h, g, offset } => {
                let pv = DVector::from_column_slice(p);
                0.5 * pv.dot(&(h * &pv)) + g.dot(&pv) - offset
            }
            Self::Ellipsoid { shift, .. } => -dot(p, shift),
            Self::L1Squared { shift } => {
                let m = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                0.5 * m * m + dot(p, shift)
            }
        }
    }
}

/// Validated, immutable problem: potential slopes, optional transform and
/// initial cost.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    a: Vec<f64>,
    b: Vec<f64>,
    cost: InitialCostSpec,
    transform: Option<Transform>,
    reduced: Vec<ReducedCost>,
    descriptor: ProblemDescriptor,
}

impl ProblemSpec {
    pub fn new(a: Vec<f64>, b: Vec<f64>, cost: InitialCostSpec) -> Result<Self> {
        Self::from_descriptor(ProblemDescriptor { a, b, transform: None, cost })
    }

    pub fn with_transform(
        a: Vec<f64>,
        b: Vec<f64>,
        p: Vec<Vec<f64>>,
        u0: Vec<f64>,
        cost: InitialCostSpec,
    ) -> Result<Self> {
        Self::from_descriptor(ProblemDescriptor {
            a,
            b,
            transform: Some(TransformSpec { p, u0 }),
            cost,
        })
    }

    pub fn from_descriptor(desc: ProblemDescriptor) -> Result<Self> {
        let n = desc.a.len();
        if n == 0 {
            return Err(HjError::InvalidInput("dimension must be positive".into()));
        }
        check_len(n, desc.b.len())?;
        for (&a, &b) in desc.a.iter().zip(&desc.b) {
            PotentialParams1D::new(a, b)?;
        }
        desc.cost.validate(n)?;
        let transform = match &desc.transform {
            None => None,
            Some(ts) => {
                let p = rows_to_matrix(&ts.p)?;
                check_len(n, p.nrows())?;
                check_len(n, ts.u0.len())?;
                if ts.u0.iter().any(|v| !v.is_finite()) {
                    return Err(HjError::InvalidInput("u0 has non-finite entries".into()));
                }
                let lu = p.clone().lu();
                match lu.try_inverse() {
                    Some(inv) if inv.iter().all(|v| v.is_finite()) => {}
                    _ => return Err(HjError::SingularMatrix),
                }
                let identity = p == DMatrix::identity(n, n) && ts.u0.iter().all(|&v| v == 0.0);
                Some(Transform { lu: p.clone().lu(), p, u0: DVector::from_column_slice(&ts.u0), identity })
            }
        };
        let reduced = match &desc.cost {
            InitialCostSpec::MinOfQuadratics { .. } => minplus_components(&desc.cost)?
                .iter()
                .map(|c| reduce_cost(c, transform.as_ref()))
                .collect::<Result<Vec<_>>>()?,
            c => vec![reduce_cost(c, transform.as_ref())?],
        };
        Ok(Self {
            a: desc.a.clone(),
            b: desc.b.clone(),
            cost: desc.cost.clone(),
            transform,
            reduced,
            descriptor: desc,
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn cost(&self) -> &InitialCostSpec {
        &self.cost
    }

    pub fn descriptor(&self) -> &ProblemDescriptor {
        &self.descriptor
    }

    pub fn has_transform(&self) -> bool {
        self.transform.is_some()
    }

    /// Kinetic matrix `M = P P^T` (identity without a transform).
    pub fn kinetic_matrix(&self) -> DMatrix<f64> {
        match &self.transform {
            Some(tr) => &tr.p * tr.p.transpose(),
            None => DMatrix::identity(self.n(), self.n()),
        }
    }

    /// `P^-1 (x - u0)`.
    pub fn reduce(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), x.len())?;
        Ok(match &self.transform {
            Some(tr) if !tr.identity => tr.reduce(x),
            _ => x.to_vec(),
        })
    }

    fn expand(&self, y: &[f64]) -> Vec<f64> {
        match &self.transform {
            Some(tr) if !tr.identity => tr.expand(y),
            _ => y.to_vec(),
        }
    }

    /// `U(x) = sum_i U_i((P^-1 (x - u0))_i)`.
    pub fn potential(&self, x: &[f64]) -> Result<f64> {
        let y = self.reduce(x)?;
        Ok(y.iter()
            .zip(self.a.iter().zip(&self.b))
            .map(|(&yi, (&a, &b))| if yi >= 0.0 { -a * yi } else { b * yi })
            .sum())
    }

    /// `Phi(x)`.
    pub fn initial_cost(&self, x: &[f64]) -> Result<f64> {
        self.cost.evaluate(x)
    }

    fn is_separable_quadratic(&self) -> bool {
        self.reduced.iter().all(|r| matches!(r, ReducedCost::DiagQuadratic { .. }))
    }
}

fn reduce_cost(cost: &InitialCostSpec, tr: Option<&Transform>) -> Result<ReducedCost> {
    let n = cost.dim().unwrap_or(0);
    let tr = tr.filter(|t| !t.identity);
    Ok(match cost {
        InitialCostSpec::Linear { slope } => match tr {
            None => ReducedCost::Linear { slope: slope.clone(), constant: 0.0 },
            Some(tr) => {
                let s = DVector::from_column_slice(slope);
                ReducedCost::Linear {
                    slope: tr.p.tr_mul(&s).as_slice().to_vec(),
                    constant: s.dot(&tr.u0),
                }
            }
        },
        InitialCostSpec::Quadratic { center, weight, offset } => match tr {
            None => ReducedCost::DiagQuadratic {
                g: center.clone(),
                w: vec![*weight; n],
                offset: *offset,
            },
            Some(tr) => {
                let pinv = tr.lu.try_inverse().ok_or(HjError::SingularMatrix)?;
                let h = (&pinv * pinv.transpose()) * *weight;
                let g = &pinv * (DVector::from_column_slice(center) - &tr.u0);
                let hmax = h.diagonal().amax();
                let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || h[(i, j)].abs() <= 1e-12 * hmax));
                if diagonal {
                    ReducedCost::DiagQuadratic {
                        g: g.as_slice().to_vec(),
                        w: h.diagonal().as_slice().to_vec(),
                        offset: *offset,
                    }
                } else {
                    ReducedCost::DenseQuadratic { h, g, offset: *offset }
                }
            }
        },
        InitialCostSpec::EllipsoidNorm { matrix } => {
            let m = rows_to_matrix(matrix)?;
            match tr {
                None => ReducedCost::Ellipsoid { set: Ellipsoid::new(m)?, shift: vec![0.0; n] },
                Some(tr) => {
                    let mp = tr.p.transpose() * m * &tr.p;
                    // symmetrize away rounding so the factorization sees an exact symmetric matrix
                    let mp = (&mp + mp.transpose()) * 0.5;
                    let shift = tr.lu.solve(&tr.u0).ok_or(HjError::SingularMatrix)?;
                    ReducedCost::Ellipsoid { set: Ellipsoid::new(mp)?, shift: shift.as_slice().to_vec() }
                }
            }
        }
        InitialCostSpec::ShiftedL1Squared { shift } => match tr {
            None => ReducedCost::L1Squared { shift: shift.clone() },
            Some(tr) if tr.p == DMatrix::identity(n, n) => ReducedCost::L1Squared {
                shift: shift.iter().zip(tr.u0.iter()).map(|(s, u)| s - u).collect(),
            },
            Some(_) => {
                return Err(HjError::Unsupported(
                    "shifted l1-squared cost only supports a pure shift (P = I)".into(),
                ))
            }
        },
        InitialCostSpec::MinOfQuadratics { .. } => {
            return Err(HjError::Internal("min-of-quadratics must be split before reduction".into()))
        }
    })
}

/// ADMM parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub lambda: f64,
    /// Bound on each of the three squared stopping norms.
    pub eps: f64,
    pub max_iter: usize,
    /// Initial `d`, in reduced coordinates. Defaults to `x~`.
    pub d0: Option<Vec<f64>>,
    /// Initial `w`. Defaults to zero.
    pub w0: Option<Vec<f64>>,
    #[serde(skip)]
    pub newton: NewtonConfig,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { lambda: 1.0, eps: 1e-8, max_iter: 10_000, d0: None, w0: None, newton: NewtonConfig::default() }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) || !(self.eps > 0.0) || self.max_iter == 0 {
            return Err(HjError::InvalidInput(format!(
                "invalid admm config: lambda={}, eps={}, max_iter={}",
                self.lambda, self.eps, self.max_iter
            )));
        }
        self.newton.validate()
    }
}

/// ADMM iterate `(v, d, w)` plus the per-coordinate crossing roots used as
/// Newton warm starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub v: Vec<f64>,
    pub d: Vec<f64>,
    pub w: Vec<f64>,
    pub p3: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub value: f64,
    /// Maximizer of the Hopf formula, in reduced coordinates (paired with
    /// `P^-1 (x - u0)`). Empty at `t = 0`.
    pub p_star: Vec<f64>,
    /// Newton steps for closed-form solves, ADMM iterations otherwise.
    pub iterations: usize,
    pub converged: bool,
    /// Final squared norms `||v+ - v||^2`, `||d+ - d||^2`, `||v+ - d+||^2`.
    pub residuals: [f64; 3],
    /// Winning branch for min-of-quadratics costs.
    pub branch: Option<usize>,
    /// `|objective_N - objective_{N-1}|` of the ADMM objective sequence.
    pub objective_change: Option<f64>,
    pub admm_state: Option<AdmmState>,
}

impl SolveResult {
    fn closed_form(value: f64, p_star: Vec<f64>, iterations: usize) -> Self {
        Self {
            value,
            p_star,
            iterations,
            converged: true,
            residuals: [0.0; 3],
            branch: None,
            objective_change: None,
            admm_state: None,
        }
    }
}

/// Closed-form solver for separable quadratic costs. Holds no buffers of its
/// own and never allocates, so it can be timed in tight loops.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticKernel<'a> {
    a: &'a [f64],
    b: &'a [f64],
    g: &'a [f64],
    w: &'a [f64],
    offset: f64,
    newton: NewtonConfig,
}

impl<'a> QuadraticKernel<'a> {
    /// Kernel for a problem whose (single) reduced cost is a separable quadratic.
    pub fn new(spec: &'a ProblemSpec, newton: NewtonConfig) -> Result<Self> {
        newton.validate()?;
        match spec.reduced.as_slice() {
            [ReducedCost::DiagQuadratic { g, w, offset }] => Ok(Self::from_parts(spec, g, w, *offset, newton)),
            _ => Err(HjError::Unsupported("closed form needs a separable quadratic cost".into())),
        }
    }

    fn from_parts(spec: &'a ProblemSpec, g: &'a [f64], w: &'a [f64], offset: f64, newton: NewtonConfig) -> Self {
        Self { a: &spec.a, b: &spec.b, g, w, offset, newton }
    }

    /// Value at reduced point `y`, `t > 0`; writes the maximizer into `p_out`
    /// and returns `(value, max Newton steps)`.
    #[inline]
    pub fn eval(&self, y: &[f64], t: f64, p_out: &mut [f64]) -> Result<(f64, usize)> {
        let mut total = 0.0;
        let mut conj = 0.0;
        let mut steps = 0;
        for i in 0..y.len() {
            let (a, b, g, w) = (self.a[i], self.b[i], self.g[i], self.w[i]);
            let sol = prox_unchecked(y[i], t, -g / w, w, a, b, &self.newton, None)?;
            let p = sol.p_star;
            p_out[i] = p;
            steps = steps.max(sol.iterations);
            total += value_unchecked(y[i], t, p, a, b)?;
            let u = p + g / w;
            conj += 0.5 * w * u * u - g * g / (2.0 * w);
        }
        Ok((total - (conj - self.offset), steps))
    }
}

fn validate_query(spec: &ProblemSpec, x: &[f64], t: f64) -> Result<()> {
    check_len(spec.n(), x.len())?;
    for &v in x {
        check_finite("x", v)?;
    }
    check_finite("t", t)?;
    if t < 0.0 {
        return Err(HjError::InvalidInput(format!("t must be non-negative, got {t}")));
    }
    Ok(())
}

/// Value at `t = 0` is the initial cost itself.
fn initial_result(spec: &ProblemSpec, x: &[f64]) -> Result<SolveResult> {
    let mut r = SolveResult::closed_form(spec.initial_cost(x)?, Vec::new(), 0);
    if let InitialCostSpec::MinOfQuadratics { branches } = &spec.cost {
        let mut best = (0, f64::INFINITY);
        for (j, br) in branches.iter().enumerate() {
            let v = InitialCostSpec::quadratic(br.center.clone(), 1.0, br.offset).evaluate(x)?;
            if v < best.1 {
                best = (j, v);
            }
        }
        r.branch = Some(best.0);
    }
    Ok(r)
}

fn solve_linear(spec: &ProblemSpec, y: &[f64], t: f64, slope: &[f64], constant: f64) -> Result<SolveResult> {
    let mut total = 0.0;
    for i in 0..y.len() {
        total += value_unchecked(y[i], t, slope[i], spec.a[i], spec.b[i])?;
    }
    Ok(SolveResult::closed_form(total + constant, slope.to_vec(), 0))
}

fn solve_closed_quadratic(
    spec: &ProblemSpec,
    y: &[f64],
    t: f64,
    rc: &ReducedCost,
    newton: NewtonConfig,
) -> Result<SolveResult> {
    let ReducedCost::DiagQuadratic { g, w, offset } = rc else {
        return Err(HjError::Unsupported("closed form needs a separable quadratic cost".into()));
    };
    let kernel = QuadraticKernel::from_parts(spec, g, w, *offset, newton);
    let mut p = vec![0.0; y.len()];
    let (value, steps) = kernel.eval(y, t, &mut p)?;
    Ok(SolveResult::closed_form(value, p, steps))
}

/// Closed-form solve for a quadratic cost (`t >= 0`).
pub fn solve_quadratic(x: &[f64], t: f64, spec: &ProblemSpec) -> Result<SolveResult> {
    solve_quadratic_with(x, t, spec, NewtonConfig::default())
}

pub fn solve_quadratic_with(x: &[f64], t: f64, spec: &ProblemSpec, newton: NewtonConfig) -> Result<SolveResult> {
    if !matches!(spec.cost, InitialCostSpec::Quadratic { .. }) {
        return Err(HjError::InvalidInput("solve_quadratic needs a quadratic cost".into()));
    }
    newton.validate()?;
    validate_query(spec, x, t)?;
    if t == 0.0 {
        return initial_result(spec, x);
    }
    let y = spec.reduce(x)?;
    solve_closed_quadratic(spec, &y, t, &spec.reduced[0], newton)
}

/// Prox of `Phi~* / lambda`, prepared once per solve.
enum VUpdate<'a> {
    Fixed(&'a [f64]),
    Diag { g: &'a [f64], w: &'a [f64], lambda: f64 },
    Dense { chol: Cholesky<f64, Dyn>, g: &'a DVector<f64>, lambda: f64 },
    Project { set: &'a Ellipsoid, shift: &'a [f64], lambda: f64 },
    L1Squared { shift: &'a [f64], lambda: f64 },
}

impl<'a> VUpdate<'a> {
    fn new(rc: &'a ReducedCost, lambda: f64) -> Result<Self> {
        Ok(match rc {
            ReducedCost::Linear { slope, .. } => Self::Fixed(slope),
            ReducedCost::DiagQuadratic { g, w, .. } => Self::Diag { g, w, lambda },
            ReducedCost::DenseQuadratic { h, g, .. } => {
                let n = h.nrows();
                let chol = (h + DMatrix::identity(n, n) * lambda)
                    .cholesky()
                    .ok_or(HjError::NotPositiveDefinite)?;
                Self::Dense { chol, g, lambda }
            }
            ReducedCost::Ellipsoid { set, shift } => Self::Project { set, shift, lambda },
            ReducedCost::L1Squared { shift } => Self::L1Squared { shift, lambda },
        })
    }

    fn apply(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Self::Fixed(s) => out.copy_from_slice(s),
            Self::Diag { g, w, lambda } => {
                for i in 0..z.len() {
                    out[i] = (lambda * z[i] - g[i]) / (w[i] + lambda);
                }
            }
            Self::Dense { chol, g, lambda } => {
                let rhs = DVector::from_column_slice(z) * *lambda - *g;
                out.copy_from_slice(chol.solve(&rhs).as_slice());
            }
            Self::Project { set, shift, lambda } => {
                let zs: Vec<f64> = z.iter().zip(shift.iter()).map(|(zi, si)| zi + si / lambda).collect();
                out.copy_from_slice(&set.project(&zs, 1e-12)?);
            }
            Self::L1Squared { shift, lambda } => {
                // Moreau: prox of Phi*/lambda = id - prox of Phi(lambda .)/lambda
                let u = prox_shifted_l1_squared(z, shift, *lambda)?;
                for i in 0..z.len() {
                    out[i] = z[i] - u[i];
                }
            }
        }
        Ok(())
    }
}

fn sq_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct AdmmRun<'a> {
    spec: &'a ProblemSpec,
    rc: &'a ReducedCost,
    y: &'a [f64],
    t: f64,
    cfg: &'a AdmmConfig,
    vup: VUpdate<'a>,
}

impl AdmmRun<'_> {
    fn hopf_objective(&self, p: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for i in 0..p.len() {
            s += value_unchecked(self.y[i], self.t, p[i], self.spec.a[i], self.spec.b[i])?;
        }
        Ok(s - self.rc.conjugate(p))
    }

    /// One pass of the v, d, w updates; returns the three squared norms.
    fn step(&self, st: &mut AdmmState, z: &mut [f64], v_new: &mut [f64]) -> Result<[f64; 3]> {
        let n = self.y.len();
        let lambda = self.cfg.lambda;
        for i in 0..n {
            z[i] = st.d[i] - st.w[i];
        }
        self.vup.apply(z, v_new)?;
        let mut rd = 0.0;
        let mut rvd = 0.0;
        for i in 0..n {
            let c = v_new[i] + st.w[i];
            let warm = st.p3[i];
            let warm = if warm.is_finite() { Some(warm) } else { None };
            let sol = prox_unchecked(self.y[i], self.t, c, lambda, self.spec.a[i], self.spec.b[i], &self.cfg.newton, warm)?;
            st.p3[i] = sol.p3;
            let dn = sol.p_star;
            rd += (dn - st.d[i]) * (dn - st.d[i]);
            rvd += (v_new[i] - dn) * (v_new[i] - dn);
            st.w[i] += v_new[i] - dn;
            st.d[i] = dn;
        }
        let rv = sq_norm_diff(v_new, &st.v);
        st.v.copy_from_slice(v_new);
        Ok([rv, rd, rvd])
    }
}

fn initial_state(y: &[f64], cfg: &AdmmConfig) -> Result<AdmmState> {
    let n = y.len();
    let d = match &cfg.d0 {
        Some(d) => {
            check_len(n, d.len())?;
            d.clone()
        }
        None => y.to_vec(),
    };
    let w = match &cfg.w0 {
        Some(w) => {
            check_len(n, w.len())?;
            w.clone()
        }
        None => vec![0.0; n],
    };
    if d.iter().chain(&w).any(|v| !v.is_finite()) {
        return Err(HjError::InvalidInput("non-finite ADMM initialization".into()));
    }
    Ok(AdmmState { v: d.clone(), d, w, p3: vec![f64::NAN; n] })
}

fn run_admm(spec: &ProblemSpec, y: &[f64], t: f64, rc: &ReducedCost, cfg: &AdmmConfig) -> Result<SolveResult> {
    let run = AdmmRun { spec, rc, y, t, cfg, vup: VUpdate::new(rc, cfg.lambda)? };
    let n = y.len();
    let mut st = initial_state(y, cfg)?;
    let mut z = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    let mut residuals = [f64::INFINITY; 3];
    let mut prev_obj = f64::NAN;
    let mut obj = f64::NAN;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        residuals = run.step(&mut st, &mut z, &mut v_new)?;
        iterations += 1;
        prev_obj = obj;
        let mut dv = 0.0;
        for i in 0..n {
            dv += value_unchecked(y[i], t, st.d[i], spec.a[i], spec.b[i])?;
        }
        obj = dv - rc.conjugate(&st.v);
        if residuals.iter().all(|&r| r <= cfg.eps) {
            converged = true;
            break;
        }
    }
    let value = run.hopf_objective(&st.v)?;
    if !value.is_finite() {
        return Err(HjError::Internal("non-finite ADMM value".into()));
    }
    Ok(SolveResult {
        value,
        p_star: st.v.clone(),
        iterations,
        converged,
        residuals,
        branch: None,
        objective_change: Some((obj - prev_obj).abs()).filter(|d| d.is_finite()),
        admm_state: Some(st),
    })
}

fn single_reduced(spec: &ProblemSpec) -> Result<&ReducedCost> {
    match spec.reduced.as_slice() {
        [rc] if spec.cost.is_convex() => Ok(rc),
        _ => Err(HjError::InvalidInput("ADMM needs a convex cost".into())),
    }
}

/// ADMM solve for any convex cost (also used for quadratics when a
/// cross-check against the closed form is wanted).
pub fn solve_admm(x: &[f64], t: f64, spec: &ProblemSpec, cfg: &AdmmConfig) -> Result<SolveResult> {
    cfg.validate()?;
    validate_query(spec, x, t)?;
    let rc = single_reduced(spec)?;
    if t == 0.0 {
        return initial_result(spec, x);
    }
    let y = spec.reduce(x)?;
    run_admm(spec, &y, t, rc, cfg)
}

/// One ADMM pass from `state`. Returns the new state.
pub fn admm_step(x: &[f64], t: f64, spec: &ProblemSpec, cfg: &AdmmConfig, state: &AdmmState) -> Result<AdmmState> {
    cfg.validate()?;
    validate_query(spec, x, t)?;
    if !(t > 0.0) {
        return Err(HjError::InvalidInput("admm_step needs t > 0".into()));
    }
    let rc = single_reduced(spec)?;
    let y = spec.reduce(x)?;
    let n = y.len();
    for v in [&state.v, &state.d, &state.w, &state.p3] {
        check_len(n, v.len())?;
    }
    let run = AdmmRun { spec, rc, y: &y, t, cfg, vup: VUpdate::new(rc, cfg.lambda)? };
    let mut st = state.clone();
    run.step(&mut st, &mut vec![0.0; n], &mut vec![0.0; n])?;
    Ok(st)
}

fn solve_reduced(spec: &ProblemSpec, y: &[f64], t: f64, rc: &ReducedCost, cfg: &AdmmConfig) -> Result<SolveResult> {
    match rc {
        ReducedCost::Linear { slope, constant } => solve_linear(spec, y, t, slope, *constant),
        ReducedCost::DiagQuadratic { .. } => solve_closed_quadratic(spec, y, t, rc, cfg.newton),
        _ => run_admm(spec, y, t, rc, cfg),
    }
}

fn solve_branches(spec: &ProblemSpec, y: &[f64], t: f64, cfg: &AdmmConfig) -> Result<SolveResult> {
    let mut best: Option<SolveResult> = None;
    let mut iterations = 0;
    let mut converged = true;
    for (j, rc) in spec.reduced.iter().enumerate() {
        let mut r = solve_reduced(spec, y, t, rc, cfg)?;
        iterations = iterations.max(r.iterations);
        converged &= r.converged;
        // strict comparison keeps the lowest index on ties
        if best.as_ref().is_none_or(|b| r.value < b.value) {
            r.branch = Some(j);
            best = Some(r);
        }
    }
    let mut best = best.ok_or_else(|| HjError::Internal("no branches".into()))?;
    best.iterations = iterations;
    best.converged = converged;
    Ok(best)
}

/// Min-plus solve for a min-of-quadratics cost.
pub fn solve_minplus(x: &[f64], t: f64, spec: &ProblemSpec, cfg: &AdmmConfig) -> Result<SolveResult> {
    if !matches!(spec.cost, InitialCostSpec::MinOfQuadratics { .. }) {
        return Err(HjError::InvalidInput("solve_minplus needs a min-of-quadratics cost".into()));
    }
    solve(x, t, spec, cfg)
}

/// Solve for a problem with an explicit `(P, u0)` transform.
pub fn solve_general(x: &[f64], t: f64, spec: &ProblemSpec, cfg: &AdmmConfig) -> Result<SolveResult> {
    if !spec.has_transform() {
        return Err(HjError::InvalidInput("solve_general needs a transform".into()));
    }
    solve(x, t, spec, cfg)
}

/// Dispatches to the closed form, ADMM or min-plus as the cost requires.
pub fn solve(x: &[f64], t: f64, spec: &ProblemSpec, cfg: &AdmmConfig) -> Result<SolveResult> {
    cfg.validate()?;
    validate_query(spec, x, t)?;
    if t == 0.0 {
        return initial_result(spec, x);
    }
    let y = spec.reduce(x)?;
    if spec.reduced.len() == 1 && spec.cost.is_convex() {
        let mut r = solve_reduced(spec, &y, t, &spec.reduced[0], cfg)?;
        if matches!(spec.cost, InitialCostSpec::MinOfQuadratics { .. }) {
            r.branch = Some(0);
        }
        Ok(r)
    } else {
        solve_branches(spec, &y, t, cfg)
    }
}

/// Whether [`solve`] will use the closed form for this problem.
pub fn is_closed_form(spec: &ProblemSpec) -> bool {
    spec.is_separable_quadratic() || matches!(spec.reduced.as_slice(), [ReducedCost::Linear { .. }])
}

/// Optimal path for terminal point `x` and a given maximizer `p` (reduced
/// coordinates): `gamma(s) = P gamma~(s) + u0`.
#[derive(Debug, Clone)]
pub struct OptimalPath<'a> {
    spec: &'a ProblemSpec,
    x: Vec<f64>,
    y: Vec<f64>,
    t: f64,
    p: Vec<f64>,
}

impl<'a> OptimalPath<'a> {
    pub fn new(spec: &'a ProblemSpec, x: &[f64], t: f64, p: &[f64]) -> Result<Self> {
        validate_query(spec, x, t)?;
        if !(t > 0.0) {
            return Err(HjError::InvalidInput("trajectories need t > 0".into()));
        }
        check_len(spec.n(), p.len())?;
        for &v in p {
            check_finite("p", v)?;
        }
        Ok(Self { spec, x: x.to_vec(), y: spec.reduce(x)?, t, p: p.to_vec() })
    }

    fn reduced_state(&self, s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.y.len();
        let mut pos = vec![0.0; n];
        let mut vel = vec![0.0; n];
        for i in 0..n {
            let (g, v) = trajectory_state_unchecked(s, self.y[i], self.t, self.p[i], self.spec.a[i], self.spec.b[i])?;
            pos[i] = g;
            vel[i] = v;
        }
        Ok((pos, vel))
    }

    fn check_s(&self, s: f64) -> Result<()> {
        if !(0.0..=self.t).contains(&s) {
            return Err(HjError::InvalidInput(format!("time {s} outside [0, {}]", self.t)));
        }
        Ok(())
    }

    pub fn position_at(&self, s: f64) -> Result<Vec<f64>> {
        self.check_s(s)?;
        if s == self.t {
            return Ok(self.x.clone());
        }
        Ok(self.spec.expand(&self.reduced_state(s)?.0))
    }

    pub fn velocity_at(&self, s: f64) -> Result<Vec<f64>> {
        self.check_s(s)?;
        let vel = self.reduced_state(s)?.1;
        Ok(match &self.spec.transform {
            Some(tr) if !tr.identity => (&tr.p * DVector::from_column_slice(&vel)).as_slice().to_vec(),
            _ => vel,
        })
    }

    /// Switching times of all components, sorted and de-duplicated.
    pub fn switch_times(&self) -> Result<Vec<f64>> {
        let mut all = Vec::new();
        for i in 0..self.y.len() {
            let u = PotentialParams1D::new(self.spec.a[i], self.spec.b[i])?;
            all.extend(trajectory_breakpoints(self.y[i], self.t, self.p[i], &u)?);
        }
        all.sort_by(f64::total_cmp);
        all.dedup();
        Ok(all)
    }
}

impl PiecewiseTrajectory for OptimalPath<'_> {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn horizon(&self) -> f64 {
        self.t
    }

    fn position(&self, s: f64) -> Vec<f64> {
        self.position_at(s).unwrap_or_else(|_| vec![f64::NAN; self.y.len()])
    }

    fn velocity(&self, s: f64) -> Vec<f64> {
        self.velocity_at(s).unwrap_or_else(|_| vec![f64::NAN; self.y.len()])
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.switch_times().unwrap_or_default()
    }
}

/// Sampled optimal trajectory; `states[k]` is `gamma(times[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Samples the optimal path at `times` (each in `[0, t]`), using `result.p_star`.
pub fn optimal_trajectory(
    x: &[f64],
    t: f64,
    result: &SolveResult,
    spec: &ProblemSpec,
    times: &[f64],
) -> Result<TrajectorySample> {
    let path = OptimalPath::new(spec, x, t, &result.p_star)?;
    let mut sorted = times.to_vec();
    for &s in &sorted {
        check_finite("time", s)?;
        path.check_s(s)?;
    }
    sorted.sort_by(f64::total_cmp);
    let states = sorted.iter().map(|&s| path.position_at(s)).collect::<Result<Vec<_>>>()?;
    Ok(TrajectorySample { times: sorted, states })
}

/// `count` equally spaced times covering `[0, t]`, both ends included.
pub fn uniform_times(t: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![t];
    }
    (0..count)
        .map(|k| if k + 1 == count { t } else { t * k as f64 / (count - 1) as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(cost: InitialCostSpec) -> ProblemSpec {
        ProblemSpec::new(vec![1.0], vec![1.0], cost).unwrap()
    }

    #[test]
    fn hand_optimized_example() {
        let spec = one_d(InitialCostSpec::quadratic(vec![0.0], 1.0, 0.0));
        let r = solve_quadratic(&[0.0], 1.0, &spec).unwrap();
        assert_eq!(r.p_star, vec![0.0]);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn initial_time_returns_cost() {
        let spec = ProblemSpec::new(vec![4.0, 6.0], vec![3.0, 9.0], InitialCostSpec::quadratic(vec![1.0, 1.0], 1.0, 0.0)).unwrap();
        let r = solve_quadratic(&[2.0, -1.0], 0.0, &spec).unwrap();
        assert_eq!(r.value, 0.5 * (1.0 + 4.0));
        assert!(r.p_star.is_empty());
    }

    #[test]
    fn rejects_bad_specs() {
        let q = InitialCostSpec::quadratic(vec![0.0, 0.0], 1.0, 0.0);
        assert!(ProblemSpec::new(vec![1.0], vec![1.0, 1.0], q.clone()).is_err());
        assert!(ProblemSpec::new(vec![1.0, 0.0], vec![1.0, 1.0], q.clone()).is_err());
        assert!(ProblemSpec::new(vec![1.0], vec![1.0], q.clone()).is_err());
        let singular = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert_eq!(
            ProblemSpec::with_transform(vec![1.0; 2], vec![1.0; 2], singular, vec![0.0; 2], q).unwrap_err(),
            HjError::SingularMatrix
        );
        let l1 = InitialCostSpec::ShiftedL1Squared { shift: vec![1.0, 1.0] };
        let rot = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(
            ProblemSpec::with_transform(vec![1.0; 2], vec![1.0; 2], rot, vec![0.0; 2], l1),
            Err(HjError::Unsupported(_))
        ));
    }

    #[test]
    fn linear_cost_matches_1d_value() {
        let spec = ProblemSpec::new(vec![2.0, 1.0], vec![3.0, 0.5], InitialCostSpec::Linear { slope: vec![0.7, -1.2] }).unwrap();
        let r = solve(&[0.4, -0.3], 0.8, &spec, &AdmmConfig::default()).unwrap();
        let u0 = PotentialParams1D::new(2.0, 3.0).unwrap();
        let u1 = PotentialParams1D::new(1.0, 0.5).unwrap();
        let expect = crate::core1d::value(0.4, 0.8, 0.7, &u0).unwrap() + crate::core1d::value(-0.3, 0.8, -1.2, &u1).unwrap();
        assert_eq!(r.value, expect);
    }

    #[test]
    fn dispatch_guards() {
        let spec = one_d(InitialCostSpec::Linear { slope: vec![1.0] });
        assert!(solve_quadratic(&[0.0], 1.0, &spec).is_err());
        assert!(solve_minplus(&[0.0], 1.0, &spec, &AdmmConfig::default()).is_err());
        assert!(solve_general(&[0.0], 1.0, &spec, &AdmmConfig::default()).is_err());
        assert!(solve(&[0.0, 1.0], 1.0, &spec, &AdmmConfig::default()).is_err());
        assert!(solve(&[0.0], -1.0, &spec, &AdmmConfig::default()).is_err());
        let bad = AdmmConfig { lambda: 0.0, ..Default::default() };
        assert!(solve(&[0.0], 1.0, &spec, &bad).is_err());
    }

    #[test]
    fn trajectory_ends_at_x() {
        let spec = ProblemSpec::new(vec![4.0, 6.0], vec![3.0, 9.0], InitialCostSpec::quadratic(vec![1.0, 1.0], 1.0, 0.0)).unwrap();
        let x = [0.3, -2.0];
        let r = solve_quadratic(&x, 0.5, &spec).unwrap();
        let tr = optimal_trajectory(&x, 0.5, &r, &spec, &uniform_times(0.5, 11)).unwrap();
        assert_eq!(tr.states.last().unwrap(), &x.to_vec());
        assert!(optimal_trajectory(&x, 0.5, &r, &spec, &[0.6]).is_err());
    }

    #[test]
    fn uniform_times_cover_interval() {
        let ts = uniform_times(0.5, 5);
        assert_eq!(ts.len(), 5);
        assert_eq!(ts[0], 0.0);
        assert_eq!(ts[4], 0.5);
    }
}
