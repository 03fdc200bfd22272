use hopf_hj::batch::{reference_cost, ReferenceCost};
use hopf_hj::initial_costs::{
    conjugate_quadratic, minplus_components, moreau_v_update, project_ellipsoid, prox_shifted_l1_squared,
    InitialCostSpec,
};
use nalgebra::{DMatrix, DVector};
use proptest::collection::vec;
use proptest::prelude::*;

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    vec(-2.0f64..2.0, n * n).prop_map(move |e| {
        let a = DMatrix::from_vec(n, n, e);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    })
}

fn sized_spd() -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|n| (spd(n), vec(-6.0f64..6.0, n), vec(-6.0f64..6.0, n)))
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn firmly_nonexpansive(p1: &[f64], p2: &[f64], z1: &[f64], z2: &[f64]) -> bool {
    let dp = diff(p1, p2);
    dot(&dp, &dp) <= dot(&dp, &diff(z1, z2)) + 1e-10
}

fn golden(f: &mut dyn FnMut(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut l, mut r) = (lo, hi);
    let mut c = r - g * (r - l);
    let mut d = l + g * (r - l);
    let (mut fc, mut fd) = (f(c), f(d));
    while r - l > 1e-10 {
        if fc < fd {
            r = d;
            d = c;
            fd = fc;
            c = r - g * (r - l);
            fc = f(c);
        } else {
            l = c;
            c = d;
            fc = fd;
            d = l + g * (r - l);
            fd = f(d);
        }
    }
    0.5 * (l + r)
}

/// Minimizer of a jointly convex function by nested golden sections; the
/// partial minimum over the trailing coordinates stays convex.
fn nested_golden(f: &dyn Fn(&[f64]) -> f64, prefix: &mut Vec<f64>, n: usize, lo: f64, hi: f64) -> (f64, Vec<f64>) {
    if prefix.len() == n {
        return (f(prefix), Vec::new());
    }
    let mut partial = |v: f64| {
        prefix.push(v);
        let r = nested_golden(f, prefix, n, lo, hi).0;
        prefix.pop();
        r
    };
    let v = golden(&mut partial, lo, hi);
    prefix.push(v);
    let (val, mut tail) = nested_golden(f, prefix, n, lo, hi);
    prefix.pop();
    tail.insert(0, v);
    (val, tail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn ellipsoid_projection_kkt((m, z, _) in sized_spd()) {
        let v = project_ellipsoid(&z, &m, 1e-12).unwrap();
        let minv = m.clone().try_inverse().unwrap();
        let vv = DVector::from_column_slice(&v);
        let zz = DVector::from_column_slice(&z);
        let gz = zz.dot(&(&minv * &zz));
        if gz <= 1.0 {
            prop_assert_eq!(v, z);
        } else {
            let gauge = vv.dot(&(&minv * &vv));
            prop_assert!((gauge - 1.0).abs() <= 1e-9, "gauge {}", gauge);
            // z - v = mu M^-1 v with mu >= 0
            let normal = &minv * &vv;
            let r = &zz - &vv;
            let mu = r.dot(&normal) / normal.norm_squared();
            prop_assert!(mu >= 0.0);
            prop_assert!((r - normal * mu).norm() <= 1e-8 * (1.0 + zz.norm()));
        }
    }

    #[test]
    fn ellipsoid_projection_firmly_nonexpansive((m, z1, z2) in sized_spd()) {
        let p1 = project_ellipsoid(&z1, &m, 1e-12).unwrap();
        let p2 = project_ellipsoid(&z2, &m, 1e-12).unwrap();
        prop_assert!(firmly_nonexpansive(&p1, &p2, &z1, &z2));
    }

    #[test]
    fn l1_squared_prox_firmly_nonexpansive(
        (z1, z2, s) in (1usize..8).prop_flat_map(|n| (vec(-5.0f64..5.0, n), vec(-5.0f64..5.0, n), vec(-3.0f64..3.0, n))),
        lambda in 0.1f64..5.0,
    ) {
        let p1 = prox_shifted_l1_squared(&z1, &s, lambda).unwrap();
        let p2 = prox_shifted_l1_squared(&z2, &s, lambda).unwrap();
        prop_assert!(firmly_nonexpansive(&p1, &p2, &z1, &z2));
        let v1 = moreau_v_update(&z1, |z| prox_shifted_l1_squared(z, &s, lambda)).unwrap();
        let v2 = moreau_v_update(&z2, |z| prox_shifted_l1_squared(z, &s, lambda)).unwrap();
        prop_assert!(firmly_nonexpansive(&v1, &v2, &z1, &z2));
    }

    #[test]
    fn l1_squared_moreau_output_is_conjugate_prox(
        (z, s) in (1usize..8).prop_flat_map(|n| (vec(-5.0f64..5.0, n), vec(-3.0f64..3.0, n))),
        lambda in 0.1f64..5.0,
        dirs in vec(vec(-1.0f64..1.0, 8), 20),
    ) {
        let u = prox_shifted_l1_squared(&z, &s, lambda).unwrap();
        let v = moreau_v_update(&z, |z| prox_shifted_l1_squared(z, &s, lambda)).unwrap();
        let back: Vec<f64> = v.iter().zip(&u).map(|(a, b)| a + b).collect();
        prop_assert!(diff(&back, &z).iter().all(|d| d.abs() <= 1e-12 * (1.0 + z.iter().fold(0.0f64, |m, x| m.max(x.abs())))));
        // v minimizes 0.5 ||v||_inf^2 + <v, s> + (lambda/2) ||v - z||^2
        let obj = |v: &[f64]| {
            let inf = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let d = diff(v, &z);
            0.5 * inf * inf + dot(v, &s) + 0.5 * lambda * dot(&d, &d)
        };
        let base = obj(&v);
        for d in dirs {
            for h in [1e-3, 1e-1] {
                let w: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a + h * b).collect();
                prop_assert!(obj(&w) >= base - 1e-12 * (1.0 + base.abs()));
            }
        }
    }

    #[test]
    fn quadratic_moreau_matches_closed_form(
        (z, y) in (1usize..8).prop_flat_map(|n| (vec(-5.0f64..5.0, n), vec(-3.0f64..3.0, n))),
        lambda in 0.1f64..5.0,
    ) {
        // Phi = 0.5 ||x - y||^2, so prox of Phi(lambda .)/lambda is (z + y)/(1 + lambda)
        let v = moreau_v_update(&z, |z| Ok(z.iter().zip(&y).map(|(a, b)| (a + b) / (1.0 + lambda)).collect())).unwrap();
        for ((vi, zi), yi) in v.iter().zip(&z).zip(&y) {
            prop_assert!((vi - (lambda * zi - yi) / (1.0 + lambda)).abs() <= 1e-12);
        }
    }

    #[test]
    fn fenchel_young(
        (x, p, y) in (1usize..8).prop_flat_map(|n| (vec(-5.0f64..5.0, n), vec(-5.0f64..5.0, n), vec(-3.0f64..3.0, n))),
        lq in 0.1f64..5.0,
        alpha in -2.0f64..2.0,
    ) {
        let phi = InitialCostSpec::quadratic(y.clone(), lq, alpha);
        let fx = phi.evaluate(&x).unwrap();
        let gap = fx + conjugate_quadratic(&p, &y, lq, alpha).unwrap() - dot(&x, &p);
        prop_assert!(gap >= -1e-10 * (1.0 + fx.abs()));
        // equality at the gradient
        let g: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (a - b) / lq).collect();
        let eq = fx + conjugate_quadratic(&g, &y, lq, alpha).unwrap() - dot(&x, &g);
        prop_assert!(eq.abs() <= 1e-10 * (1.0 + fx.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn l1_squared_prox_matches_brute_force(
        (z, s) in (1usize..4).prop_flat_map(|n| (vec(-3.0f64..3.0, n), vec(-2.0f64..2.0, n))),
        lambda in 0.2f64..3.0,
    ) {
        let u = prox_shifted_l1_squared(&z, &s, lambda).unwrap();
        let obj = |v: &[f64]| {
            let l1: f64 = v.iter().zip(&s).map(|(a, b)| (lambda * a - b).abs()).sum();
            let d = diff(v, &z);
            0.5 * l1 * l1 + 0.5 * lambda * dot(&d, &d)
        };
        let (_, b) = nested_golden(&obj, &mut Vec::new(), z.len(), -20.0, 20.0);
        for (ui, bi) in u.iter().zip(&b) {
            prop_assert!((ui - bi).abs() <= 1e-6, "{:?} vs {:?}", u, b);
        }
    }
}

#[test]
fn double_conjugate_on_a_grid() {
    let (y, lq, alpha) = (0.7, 1.6, -0.3);
    let phi = InitialCostSpec::quadratic(vec![y], lq, alpha);
    let h = 1e-3;
    let ps: Vec<f64> = (0..=20_000).map(|k| -10.0 + h * k as f64).collect();
    let conj: Vec<f64> = ps.iter().map(|&p| conjugate_quadratic(&[p], &[y], lq, alpha).unwrap()).collect();
    for k in 0..=40 {
        let x = -4.0 + 0.2 * k as f64;
        let bi = ps.iter().zip(&conj).map(|(p, c)| p * x - c).fold(f64::NEG_INFINITY, f64::max);
        assert!((bi - phi.evaluate(&[x]).unwrap()).abs() <= 1e-4, "x={x}");
    }
}

#[test]
fn projection_examples() {
    let id = DMatrix::identity(2, 2);
    assert_eq!(project_ellipsoid(&[2.0, 0.0], &id, 1e-12).unwrap(), vec![1.0, 0.0]);
    assert_eq!(project_ellipsoid(&[0.3, -0.4], &id, 1e-12).unwrap(), vec![0.3, -0.4]);
    assert!(project_ellipsoid(&[1.0, 1.0], &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 1e-12).is_err());
}

#[test]
fn l1_squared_examples() {
    let v = prox_shifted_l1_squared(&[3.0], &[0.0], 1.0).unwrap();
    assert!((v[0] - 1.5).abs() <= 1e-15);
    let shift = [0.4, -1.2, 2.0];
    let lambda = 2.0;
    let z: Vec<f64> = shift.iter().map(|s| s / lambda).collect();
    let v = prox_shifted_l1_squared(&z, &shift, lambda).unwrap();
    for (a, b) in v.iter().zip(&z) {
        assert!((a - b).abs() <= 1e-15);
    }
    // Phi = 0: the conjugate is the indicator of {0}
    let v = moreau_v_update(&[1.0, -2.0], |z| Ok(z.to_vec())).unwrap();
    assert_eq!(v, vec![0.0, 0.0]);
}

#[test]
fn conjugate_examples() {
    assert_eq!(conjugate_quadratic(&[0.0, 0.0], &[1.0, 1.0], 1.0, 0.0).unwrap(), 0.0);
    assert!((conjugate_quadratic(&[1.0, 1.0], &[1.0, 1.0], 1.0, 0.0).unwrap() - 3.0).abs() <= 1e-15);
}

#[test]
fn reference_minplus_configuration() {
    let cost = reference_cost(10, ReferenceCost::MinOfQuadratics).unwrap();
    assert_eq!(minplus_components(&cost).unwrap().len(), 3);
    assert!((cost.evaluate(&[0.0; 10]).unwrap() - 1.0).abs() <= 1e-15);
    let single = InitialCostSpec::MinOfQuadratics {
        branches: vec![hopf_hj::initial_costs::QuadraticBranch { center: vec![1.0, 2.0], offset: 0.5 }],
    };
    let parts = minplus_components(&single).unwrap();
    assert_eq!(parts[0].evaluate(&[0.0, 0.0]).unwrap(), single.evaluate(&[0.0, 0.0]).unwrap());
}
