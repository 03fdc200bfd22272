use hopf_hj::batch::{reference_problem, sample_box, ReferenceCost};
use hopf_hj::core1d::{value_dp, PotentialParams1D};
use hopf_hj::hopf_solver::solve_quadratic_with;
use hopf_hj::oracle::grid_argmin_1d;
use hopf_hj::prox1d::{prox_neg_value, Candidate, NewtonConfig, ProxQuery};
use proptest::prelude::*;

fn query() -> impl Strategy<Value = ProxQuery> {
    (-5.0f64..5.0, 0.01f64..3.0, -10.0f64..10.0, 0.05f64..5.0, 0.2f64..8.0, 0.2f64..8.0).prop_map(
        |(x, t, c, lambda, a, b)| ProxQuery::new(x, t, c, lambda, PotentialParams1D::new(a, b).unwrap()).unwrap(),
    )
}

fn candidates(q: &ProxQuery, p3: f64) -> [f64; 4] {
    let (a, b, t, l, x, c) = (q.params.a(), q.params.b(), q.t, q.lambda, q.x, q.c);
    let p1 = (-a * t * t / 2.0 + x + l * c) / (t + l);
    let p2 = (b * t * t / 2.0 + x + l * c) / (t + l);
    let p4 = if c >= 0.0 {
        -b * l + (b * b * l * l + 2.0 * b * l * c).sqrt()
    } else {
        a * l - (a * a * l * l - 2.0 * a * l * c).sqrt()
    };
    [p1, p2, p3, p4]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn first_order_condition(q in query()) {
        let s = prox_neg_value(&q, &NewtonConfig::default()).unwrap();
        let g = -value_dp(q.x, q.t, s.p_star, &q.params).unwrap() + q.lambda * (s.p_star - q.c);
        prop_assert!(g.abs() <= 1e-8, "residual {} at {:?}", g, s);
    }

    #[test]
    fn beats_every_candidate(q in query()) {
        let s = prox_neg_value(&q, &NewtonConfig::default()).unwrap();
        let best = q.objective(s.p_star).unwrap();
        for p in candidates(&q, s.p3) {
            let other = q.objective(p).unwrap();
            prop_assert!(best <= other + 1e-12 * (1.0 + other.abs()), "{} vs {} at {}", best, other, p);
        }
        let idx = match s.candidate {
            Candidate::P1 => 0,
            Candidate::P2 => 1,
            Candidate::P3 => 2,
            Candidate::P4 => 3,
        };
        let named = candidates(&q, s.p3)[idx];
        prop_assert!((named - s.p_star).abs() <= 1e-12 * (1.0 + named.abs()), "{} vs {}", named, s.p_star);
    }

    #[test]
    fn monotone_in_center(q in query(), steps in proptest::collection::vec(0.0f64..2.0, 1..12)) {
        let cfg = NewtonConfig::default();
        let mut c = q.c;
        let mut prev = prox_neg_value(&q, &cfg).unwrap().p_star;
        for dc in steps {
            c += dc;
            let p = prox_neg_value(&ProxQuery { c, ..q }, &cfg).unwrap().p_star;
            prop_assert!(p >= prev - 1e-12 * (1.0 + prev.abs()), "{} after {}", p, prev);
            prev = p;
        }
    }

    #[test]
    fn reflection(q in query()) {
        let cfg = NewtonConfig::default();
        let p = prox_neg_value(&q, &cfg).unwrap().p_star;
        let r = ProxQuery::new(-q.x, q.t, -q.c, q.lambda, q.params.swapped()).unwrap();
        let m = prox_neg_value(&r, &cfg).unwrap().p_star;
        prop_assert!((p + m).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn agrees_with_grid_search(q in query()) {
        let s = prox_neg_value(&q, &NewtonConfig::default()).unwrap();
        let (a, b) = (q.params.a(), q.params.b());
        let r = q.c.abs() + (a + b) * q.t + q.x.abs() / q.t + 10.0;
        let n = 100_000;
        let g = grid_argmin_1d(|p| q.objective(p).unwrap(), -r, r, n).unwrap();
        prop_assert!((g - s.p_star).abs() <= 2.0 * 2.0 * r / (n - 1) as f64, "{} vs {}", g, s.p_star);
    }
}

#[test]
fn fixed_steps_agree_with_tolerance_mode() {
    for n in [1, 2, 5, 10] {
        let spec = reference_problem(n, ReferenceCost::Quadratic).unwrap();
        let (xs, ts) = sample_box(n, 500, 7);
        for (k, &t) in ts.iter().enumerate() {
            let x = &xs[k * n..(k + 1) * n];
            let tol = solve_quadratic_with(x, t, &spec, NewtonConfig::default()).unwrap();
            let fixed = solve_quadratic_with(x, t, &spec, NewtonConfig::fixed(20)).unwrap();
            for (p, q) in tol.p_star.iter().zip(&fixed.p_star) {
                assert!((p - q).abs() <= 1e-8, "n={n} x={x:?} t={t}: {p} vs {q}");
            }
        }
    }
}

#[test]
fn grid_argmin_of_a_parabola() {
    let p = grid_argmin_1d(|p| (p - 2.0).powi(2), -10.0, 10.0, 1_000_000).unwrap();
    assert!((p - 2.0).abs() <= 4e-5);
}
