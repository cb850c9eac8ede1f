use std::f64::consts::PI;

use blowup_loops::blowup_local::StretchProfile;
use blowup_loops::cli::{Rational, Scenario};
use blowup_loops::diffgeo::{omega0_eval, pfaffian};
use blowup_loops::hamloop::{loop_flow, LoopParams, LoopSpec};
use blowup_loops::local_model::norm_sq;
use blowup_loops::period::{order_decision, period_group_blowup, theorem1_value, ConstantSource, TauPoly, Verdict, WeinsteinValue};
use blowup_loops::quad::{gauss_legendre, integrate_split};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn rational() -> impl Strategy<Value = BigRational> {
    (-50i64..=50, 1i64..=20).prop_map(|(n, d)| q(n, d))
}

fn nonzero_rational() -> impl Strategy<Value = BigRational> {
    (1i64..=60, 1i64..=20, any::<bool>()).prop_map(|(n, d, s)| q(if s { n } else { -n }, d))
}

fn tau_poly() -> impl Strategy<Value = TauPoly> {
    prop::collection::vec((0u32..5, rational()), 0..4).prop_map(TauPoly::from_terms)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tau_poly_is_a_commutative_ring(p in tau_poly(), r in tau_poly(), s in tau_poly(), x in rational()) {
        prop_assert_eq!(&(&p + &r) - &r, p.clone());
        prop_assert_eq!(&p * &r, &r * &p);
        prop_assert_eq!(&p * &(&r + &s), &(&p * &r) + &(&p * &s));
        prop_assert_eq!((&p * &r).eval_exact(&x), p.eval_exact(&x) * r.eval_exact(&x));
    }

    #[test]
    fn action_value_has_infinite_order(k in 2usize..5, vol_m in 200i64..2000, vol_n in 1i64..10, c in 0i64..4, published in any::<bool>()) {
        let src = if published { ConstantSource::Published } else { ConstantSource::Recomputed };
        let v = theorem1_value(k, &q(1, 1), &q(vol_m, 1), &q(vol_n, 1), src).unwrap();
        let g = period_group_blowup(q(c, 1)).unwrap();
        prop_assert!(order_decision(&v, &g).unwrap().is_infinite());
    }

    #[test]
    fn verdict_is_stable_under_rescaling(r in nonzero_rational(), vol_m in 20i64..500) {
        let v = theorem1_value(2, &q(1, 1), &q(vol_m, 1), &q(1, 1), ConstantSource::Recomputed).unwrap();
        let g = period_group_blowup(q(1, 1)).unwrap();
        let base = order_decision(&v, &g).unwrap().verdict;
        prop_assert_eq!(order_decision(&v.rescaled(&r).unwrap(), &g).unwrap().verdict, base);
        let scaled = WeinsteinValue::new(v.numerator.scale(&r), v.denominator.clone()).unwrap();
        prop_assert!(order_decision(&scaled, &g).unwrap().is_infinite());
    }

    #[test]
    fn planted_relations_are_found(m in 1i64..30, a in -40i64..40, b in -40i64..40) {
        // V = (a + b τ)/m satisfies m V ∈ Z + τ Z.
        let v = WeinsteinValue::new(TauPoly::from_terms([(0, q(a, 1)), (1, q(b, 1))]), TauPoly::constant(q(m, 1))).unwrap();
        let g = period_group_blowup(q(1, 1)).unwrap();
        let cert = order_decision(&v, &g).unwrap();
        let is_finite = matches!(cert.verdict, Verdict::Finite { .. });
        prop_assert!(is_finite);
        prop_assert!(cert.verify_witness(&v, &g));
        if let Verdict::Finite { m: found, .. } = &cert.verdict {
            prop_assert!(m % found.parse::<i64>().unwrap() == 0);
        }
    }

    #[test]
    fn gauss_is_exact_for_low_degree(n in 2usize..20, coeffs in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let deg = (2 * n - 1).min(coeffs.len() - 1);
        let p = |x: f64| coeffs[..=deg].iter().rev().fold(0.0, |acc, c| acc * x + c);
        let exact: f64 = coeffs[..=deg].iter().enumerate().map(|(i, c)| c * (2.0f64.powi(i as i32 + 1) - (-1.0f64).powi(i as i32 + 1)) / (i as f64 + 1.0)).sum();
        let got = gauss_legendre(n).integrate(-1.0, 2.0, p);
        prop_assert!((got - exact).abs() <= 1e-10 * (1.0 + exact.abs()));
    }

    #[test]
    fn split_integration_is_additive(a in -2.0f64..0.0, m in 0.1f64..1.0, c in 1.0f64..3.0) {
        let f = |x: f64| (x * 1.3).sin() + x * x;
        let whole = integrate_split(f, &[a, m, c], 24);
        let parts = integrate_split(f, &[a, m], 24) + integrate_split(f, &[m, c], 24);
        prop_assert!((whole - parts).abs() <= 1e-12);
    }

    #[test]
    fn pfaffian_squares_to_determinant(entries in prop::collection::vec(-2.0f64..2.0, 15)) {
        let mut g = DMatrix::zeros(6, 6);
        let mut it = entries.iter();
        for i in 0..6 {
            for j in i + 1..6 {
                let x = *it.next().unwrap();
                g[(i, j)] = x;
                g[(j, i)] = -x;
            }
        }
        let pf = pfaffian(&g);
        let det = g.determinant();
        prop_assert!((pf * pf - det).abs() <= 1e-9 * (1.0 + det.abs()));
    }

    #[test]
    fn omega0_is_skew(v in prop::collection::vec(-5.0f64..5.0, 4), w in prop::collection::vec(-5.0f64..5.0, 4)) {
        prop_assert_eq!(omega0_eval(&v, &w), -omega0_eval(&w, &v));
        prop_assert_eq!(omega0_eval(&v, &v), 0.0);
    }

    #[test]
    fn default_loop_closes_and_preserves_radius(z in prop::collection::vec(-1.5f64..1.5, 4), t in 0.0f64..2.0) {
        let spec = LoopSpec::new(LoopParams::default()).unwrap();
        let end = loop_flow(&spec, 2.0, &z);
        prop_assert!(end.iter().zip(&z).all(|(a, b)| (a - b).abs() <= 1e-12));
        let mid = loop_flow(&spec, t, &z);
        prop_assert!((norm_sq(&mid) - norm_sq(&z)).abs() <= 1e-12 * (1.0 + norm_sq(&z)));
    }

    #[test]
    fn stretch_profile_is_monotone_and_exact_near_zero(rho in 0.3f64..2.0, eps in 0.2f64..0.9, x in 0.0f64..1.0) {
        // Not every (rho, eps) admits a monotone quintic blend; those are rejected.
        let prof = StretchProfile::new(rho, eps);
        prop_assume!(prof.is_ok());
        let prof = prof.unwrap();
        let r = x * eps;
        prop_assert!((prof.f(r).powi(2) - (rho * rho + r * r)).abs() <= 1e-12 * (1.0 + rho * rho));
        let (a, b) = (x * 3.0, x * 3.0 + 1e-3);
        prop_assert!(prof.f(b) > prof.f(a));
    }

    #[test]
    fn scenario_json_round_trips(num in 1i64..8, seed in any::<u64>()) {
        let sc = Scenario { rho: Rational::new(num, 8), seed, ..Scenario::default_scenario() };
        prop_assert_eq!(Scenario::from_json(&sc.to_json()).unwrap(), sc);
    }
}

#[test]
fn fs_area_constant_is_pi() {
    assert!((blowup_loops::blowup_local::fs_line_area(2) - PI).abs() < 1e-6);
}
