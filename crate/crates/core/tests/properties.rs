use delayfront::domain::{self, DomainParams};
use delayfront::model::{find_steady_states, transform_reflect, ModelSpec};
use delayfront::quasipoly::{self, CharParams};
use delayfront::toy::{self, ToyParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn real_roots_are_zeros(a in -3.0f64..-0.1, b in -3.0f64..0.0, c in 0.05f64..4.0, h in 0.0f64..5.0) {
        let cp = CharParams::new(a, b, c, h).unwrap();
        let roots = quasipoly::all_real_roots(&cp);
        prop_assert!(!roots.is_empty());
        for r in &roots {
            let scale = 1.0 + r.value * r.value + a.abs() + b.abs() * (-r.value * h).exp();
            prop_assert!(cp.eval_real(r.value).abs() <= 1e-9 * scale, "chi({}) = {}", r.value, cp.eval_real(r.value));
        }
        prop_assert!(roots.windows(2).all(|w| w[0].value < w[1].value));
    }

    #[test]
    fn dominant_root_is_largest_real(a in -3.0f64..0.0, b in -3.0f64..0.0, c in 0.05f64..4.0, h in 0.0f64..5.0) {
        prop_assume!(a + b < -1e-3);
        let cp = CharParams::new(a, b, c, h).unwrap();
        let lam = quasipoly::dominant_positive_root(&cp).unwrap();
        prop_assert!(lam > 0.0);
        let top = quasipoly::all_real_roots(&cp).last().unwrap().value;
        prop_assert!((top - lam).abs() <= 1e-9 * lam.max(1.0));
    }

    #[test]
    fn membership_matches_root_count(tau in 0.3f64..20.0, c in 0.001f64..3.0) {
        let d = DomainParams::new(-1.0, -1.0).unwrap();
        let (inside, diag) = domain::in_domain(&d, tau, c).unwrap();
        if !diag.near_boundary {
            prop_assert_eq!(diag.root_count, if inside { 3 } else { 1 });
        }
    }

    #[test]
    fn clin_decreasing(t1 in 0.3f64..50.0, dt in 0.01f64..10.0) {
        let d = DomainParams::new(-1.0, -1.0).unwrap();
        let a = domain::clin(&d, t1).unwrap().finite().unwrap();
        let b = domain::clin(&d, t1 + dt).unwrap().finite().unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn sign_identity(kappa in 0.02f64..0.98, p in 0.0f64..0.98, q in -4.0f64..-0.02) {
        let params = ToyParams::new(kappa, p, q).unwrap();
        let closed = toy::frak_p(&params);
        let quad = toy::frak_p_quadrature(&params);
        prop_assert!((closed - quad).abs() < 1e-9);
        prop_assume!(closed.abs() > 1e-6);
        prop_assert_eq!(closed > 0.0, toy::k_star(&params) < 1.0);
    }

    #[test]
    fn k_decreasing_in_speed(c in 0.01f64..5.0, dc in 0.01f64..1.0, tau in 0.0f64..4.0) {
        let params = ToyParams::new(1.0 / 3.0, 0.5, -1.0).unwrap();
        let k1 = toy::k_function(&params, c, tau).unwrap();
        let k2 = toy::k_function(&params, c + dc, tau).unwrap();
        prop_assert!(k2 < k1);
    }

    #[test]
    fn reflection_is_involution(u in 0.0f64..1.0, v in 0.0f64..1.0, k in 0.5f64..3.0, e2 in 0.1f64..0.45) {
        let m = ModelSpec::mackey_glass(k, e2, (-0.1, 1.2)).unwrap();
        let s = find_steady_states(&m).unwrap();
        let (r, rs) = transform_reflect(&m, &s);
        let (rr, rrs) = transform_reflect(&r, &rs);
        prop_assert!((rr.g(u, v) - m.g(u, v)).abs() < 1e-14);
        prop_assert!((rrs.e2 - s.e2).abs() < 1e-12);
        prop_assert!((rs.e2 - (s.e1 + s.e3 - s.e2)).abs() < 1e-12);
    }

    #[test]
    fn float_format_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        let s = delayfront::formats::num(x);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}
