use std::time::Instant;

use hopf_hj::batch::{reference_cost, reference_slopes, sample_box, ReferenceCost};
use hopf_hj::core1d::{value, PotentialParams1D};
use hopf_hj::hopf_solver::{solve, AdmmConfig, ProblemSpec};
use hopf_hj::initial_costs::InitialCostSpec;
use hopf_hj::oracle::{direct_oc_solve, pde_residual};
use nalgebra::DMatrix;

#[test]
fn nearly_free_motion_is_hopf_lax() {
    let tiny = 1e-6;
    for n in [1, 2] {
        let spec = ProblemSpec::new(vec![tiny; n], vec![tiny; n], reference_cost(n, ReferenceCost::Quadratic).unwrap()).unwrap();
        let (xs, ts) = sample_box(n, 5, 21);
        for (k, &t) in ts.iter().enumerate() {
            let x = &xs[k * n..(k + 1) * n];
            let exact: f64 = x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>() / (2.0 * (1.0 + t));
            let d = direct_oc_solve(x, t, &spec, 200, 1e-9).unwrap();
            assert!((d - exact).abs() <= 1e-3, "n={n}: {d} vs {exact}");
            let v = solve(x, t, &spec, &AdmmConfig::default()).unwrap().value;
            assert!((v - exact).abs() <= 1e-3, "n={n}: {v} vs {exact}");
        }
    }
}

#[test]
fn linear_cost_matches_the_value_function() {
    let cases = [(0.7, 0.4, 1.5), (-1.2, 0.3, -0.8), (2.0, 0.5, 0.0), (0.1, 0.25, 2.5), (-0.3, 0.45, 0.6)];
    for (x, t, p) in cases {
        let spec = ProblemSpec::new(vec![4.0], vec![3.0], InitialCostSpec::Linear { slope: vec![p] }).unwrap();
        let d = direct_oc_solve(&[x], t, &spec, 200, 1e-9).unwrap();
        let v = value(x, t, p, &PotentialParams1D::new(4.0, 3.0).unwrap()).unwrap();
        assert!((d - v).abs() <= 1e-2, "({x}, {t}, {p}): {d} vs {v}");
    }
}

#[test]
fn quadratic_cost_in_two_dimensions() {
    let spec = ProblemSpec::new(reference_slopes(2).0, reference_slopes(2).1, reference_cost(2, ReferenceCost::Quadratic).unwrap()).unwrap();
    let (xs, ts) = sample_box(2, 5, 22);
    for (k, &t) in ts.iter().enumerate() {
        let x = &xs[2 * k..2 * k + 2];
        let v = solve(x, t, &spec, &AdmmConfig::default()).unwrap().value;
        let d = direct_oc_solve(x, t, &spec, 200, 1e-9).unwrap();
        assert!((d - v).abs() <= 1e-2, "{x:?} {t}: {d} vs {v}");
    }
}

#[test]
fn refinement_shrinks_the_gap() {
    let spec = ProblemSpec::new(vec![4.0], vec![3.0], InitialCostSpec::Linear { slope: vec![1.5] }).unwrap();
    let u = PotentialParams1D::new(4.0, 3.0).unwrap();
    let (x, t) = (0.7, 0.4);
    let v = value(x, t, 1.5, &u).unwrap();
    let start = Instant::now();
    let gaps: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&k| (direct_oc_solve(&[x], t, &spec, k, 1e-10).unwrap() - v).abs())
        .collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    assert!(start.elapsed().as_secs() < 120);
}

#[test]
fn fd_residual_of_the_linear_solution() {
    let u = PotentialParams1D::new(4.0, 3.0).unwrap();
    let p = 0.8;
    let m = DMatrix::identity(1, 1);
    for (x, t) in [(1.3, 0.4), (-2.0, 0.3), (0.2, 1.0), (-0.1, 0.9)] {
        let r = pde_residual(|y, s| value(y[0], s, p, &u).unwrap(), &[x], t, &m, |y| u.potential(y[0]), 1e-4);
        assert!(r <= 1e-5, "{x} {t}: {r}");
    }
}

#[test]
fn fd_residual_of_a_quadratic_solution() {
    let n = 4;
    let spec = ProblemSpec::new(reference_slopes(n).0, reference_slopes(n).1, reference_cost(n, ReferenceCost::Quadratic).unwrap()).unwrap();
    let cfg = AdmmConfig::default();
    let (xs, ts) = sample_box(n, 100, 23);
    for (k, &t) in ts.iter().enumerate() {
        let x = &xs[n * k..n * (k + 1)];
        let r = pde_residual(
            |y, s| solve(y, s, &spec, &cfg).unwrap().value,
            x,
            t.max(0.01),
            &DMatrix::identity(n, n),
            |y| spec.potential(y).unwrap(),
            1e-4,
        );
        assert!(r <= 1e-4, "{x:?} {t}: {r}");
    }
}
