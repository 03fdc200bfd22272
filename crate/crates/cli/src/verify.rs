//! Oracle-backed invariant checks, grouped by module. Each check draws its
//! random cases from a ChaCha stream seeded by the run seed.

use hopf_hj::batch::{reference_problem, sample_box, ReferenceCost};
use hopf_hj::core1d::{
    trajectory, trajectory_breakpoints, trajectory_velocity, value, value_by_region, value_dp, value_dt, value_dx,
    PotentialParams1D,
};
use hopf_hj::hopf_solver::{
    optimal_trajectory, solve, solve_admm, solve_quadratic, uniform_times, AdmmConfig, ProblemSpec,
};
use hopf_hj::initial_costs::{
    conjugate_quadratic, minplus_components, moreau_v_update, project_ellipsoid, prox_shifted_l1_squared,
    InitialCostSpec,
};
use hopf_hj::oracle::{grid_argmin_1d, neg_potential_1d, trajectory_cost, PiecewiseTrajectory};
use hopf_hj::prox1d::{prox_neg_value, NewtonConfig, ProxQuery};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Core1d,
    Prox1d,
    InitialCosts,
    HopfSolver,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub failure: Option<String>,
}

type Check = fn(&mut ChaCha8Rng) -> Result<(), String>;

fn checks(suite: Suite) -> Vec<(&'static str, Check)> {
    let core: Vec<(&'static str, Check)> = vec![
        ("core1d.initial_condition", initial_condition),
        ("core1d.reflection", reflection),
        ("core1d.region_formulas", region_formulas),
        ("core1d.hj_residual", hj_residual),
        ("core1d.dp_is_initial_position", dp_is_initial_position),
        ("core1d.trajectory_cost", trajectory_cost_identity),
    ];
    let prox: Vec<(&'static str, Check)> = vec![
        ("prox1d.stationarity", prox_stationarity),
        ("prox1d.reflection", prox_reflection),
        ("prox1d.monotone_in_c", prox_monotone),
        ("prox1d.grid_search", prox_grid),
    ];
    let costs: Vec<(&'static str, Check)> = vec![
        ("initial_costs.ellipsoid_kkt", ellipsoid_kkt),
        ("initial_costs.firm_nonexpansiveness", firm_nonexpansive),
        ("initial_costs.moreau_identity", moreau_identity),
        ("initial_costs.fenchel_young", fenchel_young),
    ];
    let solver: Vec<(&'static str, Check)> = vec![
        ("hopf_solver.admm_vs_closed_form", admm_vs_closed),
        ("hopf_solver.minplus_dominance", minplus_dominance),
        ("hopf_solver.trajectory_endpoint", trajectory_endpoint),
        ("hopf_solver.trajectory_cost", hd_trajectory_cost),
    ];
    match suite {
        Suite::Core1d => core,
        Suite::Prox1d => prox,
        Suite::InitialCosts => costs,
        Suite::HopfSolver => solver,
        Suite::All => [core, prox, costs, solver].concat(),
    }
}

/// Runs every check of `suite`; checks never abort each other.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckOutcome> {
    checks(suite)
        .into_iter()
        .enumerate()
        .map(|(k, (name, f))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            CheckOutcome { name: name.to_string(), failure: f(&mut rng).err() }
        })
        .collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn params(rng: &mut ChaCha8Rng) -> PotentialParams1D {
    PotentialParams1D::new(rng.random_range(0.2..8.0), rng.random_range(0.2..8.0)).unwrap()
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn initial_condition(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..10_000 {
        let u = params(rng);
        let (x, p) = (rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let v = value(x, 0.0, p, &u).map_err(e)?;
        ensure((v - p * x).abs() <= 1e-12, || format!("V({x}, 0; {p}) = {v}"))?;
    }
    Ok(())
}

fn reflection(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..10_000 {
        let u = params(rng);
        let (x, t, p) = (rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0), rng.random_range(-5.0..5.0));
        let v = value(x, t, p, &u).map_err(e)?;
        let w = value(-x, t, -p, &u.swapped()).map_err(e)?;
        ensure((v - w).abs() <= 1e-12 * (1.0 + v.abs()), || format!("({x}, {t}, {p}): {v} vs {w}"))?;
    }
    Ok(())
}

fn region_formulas(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..10_000 {
        let u = params(rng);
        let (x, t, p) = (rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0), rng.random_range(-5.0..5.0));
        let v = value(x, t, p, &u).map_err(e)?;
        let w = value_by_region(x, t, p, &u).map_err(e)?;
        ensure((v - w).abs() <= 1e-12 * (1.0 + v.abs().max(w.abs())), || format!("({x}, {t}, {p}): {v} vs {w}"))?;
    }
    Ok(())
}

fn hj_residual(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..10_000 {
        let u = params(rng);
        let (x, t, p) = (rng.random_range(-3.0..3.0), rng.random_range(0.05..2.0), rng.random_range(-3.0..3.0));
        let r = value_dt(x, t, p, &u).map_err(e)? + 0.5 * value_dx(x, t, p, &u).map_err(e)?.powi(2) + u.potential(x);
        ensure(r.abs() <= 1e-10, || format!("({x}, {t}, {p}): residual {r}"))?;
    }
    Ok(())
}

fn dp_is_initial_position(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..10_000 {
        let u = params(rng);
        let (x, t, p) = (rng.random_range(-5.0..5.0), rng.random_range(0.01..3.0), rng.random_range(-5.0..5.0));
        let d = value_dp(x, t, p, &u).map_err(e)?;
        let g = trajectory(0.0, x, t, p, &u).map_err(e)?;
        ensure((d - g).abs() <= 1e-10, || format!("({x}, {t}, {p}): {d} vs {g}"))?;
    }
    Ok(())
}

struct Path1D {
    x: f64,
    t: f64,
    p: f64,
    u: PotentialParams1D,
}

impl PiecewiseTrajectory for Path1D {
    fn dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> f64 {
        self.t
    }
    fn position(&self, s: f64) -> Vec<f64> {
        vec![trajectory(s, self.x, self.t, self.p, &self.u).unwrap_or(f64::NAN)]
    }
    fn velocity(&self, s: f64) -> Vec<f64> {
        vec![trajectory_velocity(s, self.x, self.t, self.p, &self.u).unwrap_or(f64::NAN)]
    }
    fn breakpoints(&self) -> Vec<f64> {
        trajectory_breakpoints(self.x, self.t, self.p, &self.u).unwrap_or_default()
    }
}

fn trajectory_cost_identity(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let id = DMatrix::identity(1, 1);
    for _ in 0..200 {
        let u = params(rng);
        let (x, t, p) = (rng.random_range(-5.0..5.0), rng.random_range(0.01..3.0), rng.random_range(-5.0..5.0));
        let path = Path1D { x, t, p, u };
        let (a, b) = (u.a(), u.b());
        let c = trajectory_cost(&path, |y| -neg_potential_1d(a, b, y[0]), |y| p * y[0], &id, 10_000).map_err(e)?;
        let v = value(x, t, p, &u).map_err(e)?;
        ensure((c - v).abs() <= 1e-8 * (1.0 + v.abs()), || format!("({x}, {t}, {p}): {c} vs {v}"))?;
    }
    Ok(())
}

fn query(rng: &mut ChaCha8Rng) -> ProxQuery {
    let u = params(rng);
    ProxQuery::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(0.01..3.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(0.05..5.0),
        u,
    )
    .unwrap()
}

fn prox_stationarity(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..10_000 {
        let q = query(rng);
        let s = prox_neg_value(&q, &NewtonConfig::default()).map_err(e)?;
        let g = -value_dp(q.x, q.t, s.p_star, &q.params).map_err(e)? + q.lambda * (s.p_star - q.c);
        ensure(g.abs() <= 1e-8, || format!("{q:?}: residual {g}"))?;
    }
    Ok(())
}

fn prox_reflection(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let cfg = NewtonConfig::default();
    for _ in 0..10_000 {
        let q = query(rng);
        let p = prox_neg_value(&q, &cfg).map_err(e)?.p_star;
        let r = ProxQuery::new(-q.x, q.t, -q.c, q.lambda, q.params.swapped()).map_err(e)?;
        let m = prox_neg_value(&r, &cfg).map_err(e)?.p_star;
        ensure((p + m).abs() <= 1e-9, || format!("{q:?}: {p} vs {m}"))?;
    }
    Ok(())
}

fn prox_monotone(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let cfg = NewtonConfig::default();
    for _ in 0..500 {
        let mut q = query(rng);
        let mut prev = prox_neg_value(&q, &cfg).map_err(e)?.p_star;
        for _ in 0..10 {
            q.c += rng.random_range(0.0..2.0);
            let p = prox_neg_value(&q, &cfg).map_err(e)?.p_star;
            ensure(p >= prev - 1e-12 * (1.0 + prev.abs()), || format!("{q:?}: {p} after {prev}"))?;
            prev = p;
        }
    }
    Ok(())
}

fn prox_grid(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..50 {
        let q = query(rng);
        let s = prox_neg_value(&q, &NewtonConfig::default()).map_err(e)?;
        let r = q.c.abs() + (q.params.a() + q.params.b()) * q.t + q.x.abs() / q.t + 10.0;
        let n = 100_000;
        let g = grid_argmin_1d(|p| q.objective(p).unwrap_or(f64::INFINITY), -r, r, n).map_err(e)?;
        ensure((g - s.p_star).abs() <= 4.0 * r / (n - 1) as f64, || format!("{q:?}: {} vs grid {g}", s.p_star))?;
    }
    Ok(())
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

fn ellipsoid_kkt(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..1000 {
        let n = rng.random_range(1..6);
        let m = random_spd(rng, n);
        let z = random_vec(rng, n, 6.0);
        let v = project_ellipsoid(&z, &m, 1e-12).map_err(e)?;
        let minv = m.clone().try_inverse().ok_or("singular test matrix")?;
        let (vv, zz) = (DVector::from_column_slice(&v), DVector::from_column_slice(&z));
        if zz.dot(&(&minv * &zz)) <= 1.0 {
            ensure(v == z, || format!("inside point moved: {z:?} -> {v:?}"))?;
            continue;
        }
        let gauge = vv.dot(&(&minv * &vv));
        ensure((gauge - 1.0).abs() <= 1e-9, || format!("gauge {gauge} for {z:?}"))?;
        let normal = &minv * &vv;
        let r = &zz - &vv;
        let mu = r.dot(&normal) / normal.norm_squared();
        ensure(mu >= 0.0 && (r - normal * mu).norm() <= 1e-8 * (1.0 + zz.norm()), || format!("KKT fails at {z:?}"))?;
    }
    Ok(())
}

fn firm(p1: &[f64], p2: &[f64], z1: &[f64], z2: &[f64]) -> bool {
    let dp: Vec<f64> = p1.iter().zip(p2).map(|(a, b)| a - b).collect();
    let dz: Vec<f64> = z1.iter().zip(z2).map(|(a, b)| a - b).collect();
    let lhs: f64 = dp.iter().map(|v| v * v).sum();
    let rhs: f64 = dp.iter().zip(&dz).map(|(a, b)| a * b).sum();
    lhs <= rhs + 1e-10
}

fn firm_nonexpansive(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..1000 {
        let n = rng.random_range(1..6);
        let m = random_spd(rng, n);
        let (z1, z2) = (random_vec(rng, n, 6.0), random_vec(rng, n, 6.0));
        let (p1, p2) = (project_ellipsoid(&z1, &m, 1e-12).map_err(e)?, project_ellipsoid(&z2, &m, 1e-12).map_err(e)?);
        ensure(firm(&p1, &p2, &z1, &z2), || format!("projection at {z1:?}, {z2:?}"))?;
        let s = random_vec(rng, n, 3.0);
        let lambda = rng.random_range(0.1..5.0);
        let q1 = prox_shifted_l1_squared(&z1, &s, lambda).map_err(e)?;
        let q2 = prox_shifted_l1_squared(&z2, &s, lambda).map_err(e)?;
        ensure(firm(&q1, &q2, &z1, &z2), || format!("l1 squared prox at {z1:?}, {z2:?}"))?;
    }
    Ok(())
}

fn moreau_identity(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..1000 {
        let n = rng.random_range(1..8);
        let (z, y) = (random_vec(rng, n, 5.0), random_vec(rng, n, 3.0));
        let lambda = rng.random_range(0.1..5.0);
        let v = moreau_v_update(&z, |z| Ok(z.iter().zip(&y).map(|(a, b)| (a + b) / (1.0 + lambda)).collect()))
            .map_err(e)?;
        for ((vi, zi), yi) in v.iter().zip(&z).zip(&y) {
            let direct = (lambda * zi - yi) / (1.0 + lambda);
            ensure((vi - direct).abs() <= 1e-12, || format!("quadratic: {vi} vs {direct}"))?;
        }
        let u = prox_shifted_l1_squared(&z, &y, lambda).map_err(e)?;
        let w = moreau_v_update(&z, |z| prox_shifted_l1_squared(z, &y, lambda)).map_err(e)?;
        for ((wi, ui), zi) in w.iter().zip(&u).zip(&z) {
            ensure((wi + ui - zi).abs() <= 1e-12 * (1.0 + zi.abs()), || format!("l1 squared: {wi} + {ui} != {zi}"))?;
        }
    }
    Ok(())
}

fn fenchel_young(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..10_000 {
        let n = rng.random_range(1..8);
        let (x, p, y) = (random_vec(rng, n, 5.0), random_vec(rng, n, 5.0), random_vec(rng, n, 3.0));
        let (lq, alpha) = (rng.random_range(0.1..5.0), rng.random_range(-2.0..2.0));
        let phi = InitialCostSpec::quadratic(y.clone(), lq, alpha);
        let fx = phi.evaluate(&x).map_err(e)?;
        let xp: f64 = x.iter().zip(&p).map(|(a, b)| a * b).sum();
        let gap = fx + conjugate_quadratic(&p, &y, lq, alpha).map_err(e)? - xp;
        ensure(gap >= -1e-10 * (1.0 + fx.abs()), || format!("negative gap {gap}"))?;
    }
    Ok(())
}

fn points(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<(Vec<f64>, f64)> {
    let (xs, ts) = sample_box(n, count, rng.random());
    ts.iter().enumerate().map(|(k, &t)| (xs[k * n..(k + 1) * n].to_vec(), t)).collect()
}

fn admm_vs_closed(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let spec = reference_problem(10, ReferenceCost::Quadratic).map_err(e)?;
    let cfg = AdmmConfig::default();
    for (x, t) in points(rng, 10, 200) {
        let c = solve_quadratic(&x, t, &spec).map_err(e)?;
        let a = solve_admm(&x, t, &spec, &cfg).map_err(e)?;
        ensure(a.converged && (a.value - c.value).abs() <= 1e-6, || {
            format!("{x:?}, {t}: admm {} vs closed form {}", a.value, c.value)
        })?;
    }
    Ok(())
}

fn minplus_dominance(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let spec = reference_problem(10, ReferenceCost::MinOfQuadratics).map_err(e)?;
    let branches = minplus_components(spec.cost())
        .map_err(e)?
        .into_iter()
        .map(|c| ProblemSpec::new(spec.a().to_vec(), spec.b().to_vec(), c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(e)?;
    let cfg = AdmmConfig::default();
    for (x, t) in points(rng, 10, 500) {
        let r = solve(&x, t, &spec, &cfg).map_err(e)?;
        let j = r.branch.ok_or("no branch reported")?;
        for (i, b) in branches.iter().enumerate() {
            let v = solve(&x, t, b, &cfg).map_err(e)?.value;
            ensure(r.value <= v, || format!("{x:?}: branch {i} value {v} below min {}", r.value))?;
            if i == j {
                ensure(v.to_bits() == r.value.to_bits(), || format!("{x:?}: winner {j} mismatch"))?;
            }
        }
    }
    Ok(())
}

fn trajectory_endpoint(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let cfg = AdmmConfig::default();
    for kind in [ReferenceCost::Quadratic, ReferenceCost::EllipsoidNorm, ReferenceCost::ShiftedL1Squared, ReferenceCost::MinOfQuadratics] {
        let spec = reference_problem(10, kind).map_err(e)?;
        for (x, t) in points(rng, 10, 100) {
            let r = solve(&x, t, &spec, &cfg).map_err(e)?;
            let s = optimal_trajectory(&x, t, &r, &spec, &uniform_times(t, 5)).map_err(e)?;
            let last = s.states.last().ok_or("empty trajectory")?;
            ensure(last.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-12), || format!("{kind:?}: {last:?} vs {x:?}"))?;
        }
    }
    Ok(())
}

fn hd_trajectory_cost(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let spec = reference_problem(10, ReferenceCost::Quadratic).map_err(e)?;
    let cfg = AdmmConfig::default();
    for (x, t) in points(rng, 10, 20) {
        let r = solve(&x, t, &spec, &cfg).map_err(e)?;
        let path = hopf_hj::hopf_solver::OptimalPath::new(&spec, &x, t, &r.p_star).map_err(e)?;
        let c = trajectory_cost(
            &path,
            |y| spec.potential(y).unwrap_or(f64::NAN),
            |y| spec.initial_cost(y).unwrap_or(f64::NAN),
            &spec.kinetic_matrix(),
            10_000,
        )
        .map_err(e)?;
        ensure((c - r.value).abs() <= 1e-4 * (1.0 + r.value.abs()), || format!("{x:?}, {t}: {c} vs {}", r.value))?;
    }
    Ok(())
}
