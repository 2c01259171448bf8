use bima_core::kernel_basis::matern_c;
use bima_core::special::ln_bessel_k;
use bima_validation::oracle::{ln_bessel_k_quadrature, matern_half_integer};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn log_bessel_k_matches_quadrature(nu in 0.0f64..6.0, lx in -6.0f64..5.0) {
        let x = lx.exp();
        let got = ln_bessel_k(nu, x);
        let want = ln_bessel_k_quadrature(nu, x);
        prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "nu={nu} x={x}: {got} vs {want}");
    }

    #[test]
    fn matern_is_a_correlation(t in 0.0f64..20.0, u in 0.05f64..5.0) {
        let c = matern_c(t, u).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }
}

#[test]
fn half_integer_matern_closed_forms() {
    for u in [0.5, 1.5, 2.5] {
        for k in 0..500 {
            let t = 0.02 * k as f64;
            let want = matern_half_integer(t, u).unwrap();
            let got = matern_c(t, u).unwrap();
            assert!(((got - want) / want).abs() <= 1e-10, "u={u} t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn bessel_near_the_method_switch() {
    for nu in [0.0, 0.3, 1.0, 2.7] {
        for x in [1.98, 1.999, 2.0, 2.001, 2.02] {
            let (got, want) = (ln_bessel_k(nu, x), ln_bessel_k_quadrature(nu, x));
            assert!((got - want).abs() <= 1e-12, "nu={nu} x={x}");
        }
    }
}
