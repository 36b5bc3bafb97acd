//! Property-based invariants for the distribution layer.

use copula_pce::distributions::{std_normal_cdf, std_normal_inv_cdf, Marginal};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// F(F^-1(p)) = p for every marginal family across its parameter space.
    #[test]
    fn marginal_quantile_round_trip(
        p in 1e-6f64..=0.999999,
        mean in -100.0f64..100.0,
        std in 0.1f64..50.0,
        alpha in 0.5f64..20.0,
        beta in 0.5f64..20.0,
        lower in -10.0f64..10.0,
        width in 0.1f64..100.0,
    ) {
        let marginals = [
            Marginal::Normal { mean, std },
            Marginal::Beta { alpha, beta, lower, upper: lower + width },
            Marginal::Uniform { lower, upper: lower + width },
        ];
        for m in marginals {
            let x = m.inv_cdf(p).unwrap();
            let q = m.cdf(x);
            prop_assert!((q - p).abs() < 1e-8, "{m:?}: p={p}, got {q}");
        }
    }

    /// Phi is monotone and Phi^-1 inverts it to machine-level accuracy.
    #[test]
    fn normal_cdf_inverse_consistency(x in -8.0f64..8.0, h in 1e-6f64..1e-3) {
        let p = std_normal_cdf(x);
        prop_assert!(std_normal_cdf(x + h) >= p);
        if p > 1e-300 && p < 1.0 {
            let back = std_normal_inv_cdf(p).unwrap();
            // Representing p near 1 loses absolute precision; the attainable
            // round-trip accuracy is eps(p)/phi(x).
            let tol = 1e-12 + 8.0 * f64::EPSILON / copula_pce::distributions::std_normal_pdf(x);
            prop_assert!((back - x).abs() < tol, "x={x}, back={back}");
        }
    }

    /// Sampling from a latent value stays inside the marginal's support.
    #[test]
    fn from_latent_respects_support(
        y in -6.0f64..6.0,
        alpha in 0.5f64..20.0,
        beta in 0.5f64..20.0,
        lower in -10.0f64..10.0,
        width in 0.1f64..100.0,
    ) {
        let m = Marginal::Beta { alpha, beta, lower, upper: lower + width };
        let x = m.from_latent(y).unwrap();
        let (lo, hi) = m.support();
        prop_assert!(x >= lo && x <= hi);
    }
}
