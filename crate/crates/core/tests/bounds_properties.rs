use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use perfscen::bounds::{evaluate_binomial_tail, minimal_sample_size, BoundQuery};

fn tail(n: u64, eps: f64, d: usize) -> f64 {
    evaluate_binomial_tail(&BoundQuery::new(n, eps, 0.5, d).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tail_non_increasing_in_n(eps in 0.01f64..0.9, d in 1usize..8, n in 8u64..2000) {
        prop_assert!(tail(n + 1, eps, d) <= tail(n, eps, d) * (1.0 + 1e-12));
    }

    #[test]
    fn tail_non_decreasing_in_d(eps in 0.01f64..0.9, d in 1usize..8, n in 10u64..2000) {
        prop_assert!(tail(n, eps, d + 1) >= tail(n, eps, d) * (1.0 - 1e-12));
    }

    #[test]
    fn tail_matches_binomial_cdf(eps in 0.01f64..0.9, d in 1usize..10, n in 10u64..3000) {
        let oracle = Binomial::new(eps, n).unwrap().cdf(d as u64 - 1);
        let got = tail(n, eps, d);
        prop_assert!((got - oracle).abs() <= 1e-10 * oracle.max(1e-300) + 1e-300, "{got} vs {oracle}");
    }
}

#[test]
fn sample_size_monotone_on_grid() {
    let epss = [0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8];
    let betas = [1e-9, 1e-6, 1e-3, 1e-2, 0.1, 0.5];
    let dims = [1usize, 2, 3, 5, 10, 20];
    for &eps in &epss {
        for &beta in &betas {
            for &d in &dims {
                let n = minimal_sample_size(eps, beta, d).unwrap();
                assert!(n >= d as u64);
                for &eps2 in epss.iter().filter(|&&e| e > eps) {
                    assert!(
                        minimal_sample_size(eps2, beta, d).unwrap() <= n,
                        "eps {eps} -> {eps2}"
                    );
                }
                for &beta2 in betas.iter().filter(|&&b| b > beta) {
                    assert!(
                        minimal_sample_size(eps, beta2, d).unwrap() <= n,
                        "beta {beta} -> {beta2}"
                    );
                }
                for &d2 in dims.iter().filter(|&&x| x > d) {
                    assert!(
                        minimal_sample_size(eps, beta, d2).unwrap() >= n,
                        "d {d} -> {d2}"
                    );
                }
            }
        }
    }
}

#[test]
fn one_dimensional_closed_form() {
    for &eps in &[0.01, 0.03, 0.1, 0.25, 0.5, 0.7] {
        for &beta in &[1e-8, 1e-5, 1e-3, 0.013, 0.05, 0.3] {
            let closed = (f64::ln(beta) / f64::ln(1.0 - eps)).ceil() as u64;
            let n = minimal_sample_size(eps, beta, 1).unwrap();
            assert_eq!(n, closed.max(1), "eps {eps} beta {beta}");
        }
    }
}
