//! Special functions and Gaussian expectations against independent oracles.

use std::f64::consts::{PI, SQRT_2};

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use widthlab_core::seed;
use widthlab_core::special::{
    cauchy_group_bound, erf, expected_erf, expected_erf_squared, expected_probit, jensen_exp_bound,
    polya_upper_bound, std_normal_cdf, GaussianScalar,
};
use widthlab_core::vi::{kl_to_prior, VariationalParams};

/// `erf(z) = (2/√π) e^{−z²} Σ_n 2ⁿ z^{2n+1} / (1·3·…·(2n+1))`; every term is
/// positive, so the sum carries no cancellation error.
fn erf_oracle(z: f64) -> f64 {
    let a = z.abs();
    let mut term = a;
    let mut sum = a;
    let mut n = 0.0;
    while term > sum * 1e-18 {
        n += 1.0;
        term *= 2.0 * a * a / (2.0 * n + 1.0);
        sum += term;
    }
    (2.0 / PI.sqrt() * (-a * a).exp() * sum).copysign(z)
}

/// Composite Simpson integral of the standard normal density over `[0, z]`, plus ½.
fn cdf_oracle(z: f64) -> f64 {
    let n = 20_000;
    let h = z / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
    let mut s = pdf(0.0) + pdf(z);
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + s * h / 3.0
}

/// Sample mean and standard error of `g(z)`, `z ~ N(mean, var)`.
fn mc(mean: f64, var: f64, n: usize, seed: u64, g: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut rng = seed::rng(seed);
    let sd = var.sqrt();
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let e: f64 = StandardNormal.sample(&mut rng);
        let v = g(mean + sd * e);
        s += v;
        s2 += v * v;
    }
    let m = s / n as f64;
    let var = (s2 / n as f64 - m * m) * n as f64 / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

#[test]
fn erf_matches_series_oracle() {
    for i in 0..=1200 {
        let z = -6.0 + 0.01 * i as f64;
        assert!((erf(z) - erf_oracle(z)).abs() <= 1e-12, "z = {z}");
    }
    assert!((erf(1.0) - 0.842700793).abs() < 1e-9);
    assert_eq!(erf(0.0), 0.0);
}

#[test]
fn normal_cdf_examples() {
    assert_eq!(std_normal_cdf(0.0), 0.5);
    assert!((std_normal_cdf(1.959964) - 0.975).abs() < 1e-6);
    for z in [-3.0, -0.7, 0.2, 1.0, 2.5] {
        assert!((std_normal_cdf(z) - cdf_oracle(z)).abs() < 1e-12, "z = {z}");
    }
}

#[test]
fn erf_cdf_identity_on_dense_grid() {
    for i in 0..=20_000 {
        let z = -10.0 + 0.001 * i as f64;
        assert!((erf(z) - (2.0 * std_normal_cdf(SQRT_2 * z) - 1.0)).abs() <= 1e-12, "z = {z}");
    }
}

#[test]
fn closed_form_examples() {
    let g = |m, v| GaussianScalar::new(m, v).unwrap();
    assert_eq!(expected_probit(g(0.0, 7.0)), 0.5);
    assert_eq!(expected_probit(g(1.0, 0.0)), std_normal_cdf(1.0));
    assert_eq!(expected_erf(g(0.0, 5.0)), 0.0);
    assert_eq!(expected_erf(g(2.0, 0.0)), erf(2.0));
    assert!((expected_erf(g(1.0, 1.0)) - 0.5858).abs() < 1e-4);
    assert!((expected_probit(g(1.0, 3.0)) - std_normal_cdf(0.5)).abs() < 1e-15);
    assert_eq!(expected_erf_squared(g(0.7, 0.0)), erf(0.7).powi(2));
}

#[test]
fn gaussian_expectations_match_monte_carlo() {
    let mut rng = seed::rng(2024);
    let mut outside = [0usize; 3];
    let cases = 20;
    for case in 0..cases {
        let mu: f64 = rng.random_range(-5.0..5.0);
        let var: f64 = rng.random_range(0.0..25.0);
        let g = GaussianScalar::new(mu, var).unwrap();
        let n = 200_000;
        let checks: [(f64, (f64, f64)); 3] = [
            (expected_erf(g), mc(mu, var, n, 10 * case, erf)),
            (expected_probit(g), mc(mu, var, n, 10 * case + 1, std_normal_cdf)),
            (expected_erf_squared(g), mc(mu, var, n, 10 * case + 2, |z| erf(z).powi(2))),
        ];
        for (i, (exact, (m, se))) in checks.into_iter().enumerate() {
            if (exact - m).abs() > 3.0 * se {
                outside[i] += 1;
            }
        }
    }
    assert!(outside.iter().all(|&o| o <= 1), "{outside:?}");
}

#[test]
fn probit_example_against_monte_carlo() {
    let (m, se) = mc(1.0, 3.0, 1_000_000, 77, std_normal_cdf);
    assert!((m - std_normal_cdf(0.5)).abs() <= 3.0 * se);
}

#[test]
fn kl_matches_monte_carlo_log_ratio() {
    let mut rng = seed::rng(5);
    for state in 0..10 {
        let p = 12;
        let mu: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rho: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.0)).collect();
        let vp = VariationalParams::new(mu.clone(), rho.clone()).unwrap();
        let mut draws = seed::rng(100 + state);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let mut log_ratio = 0.0;
            for i in 0..p {
                let e: f64 = StandardNormal.sample(&mut draws);
                let sigma = rho[i].exp();
                let theta = mu[i] + sigma * e;
                // log N(θ; μ, σ²) − log N(θ; 0, 1)
                log_ratio += -sigma.ln() - 0.5 * e * e + 0.5 * theta * theta;
            }
            s += log_ratio;
            s2 += log_ratio * log_ratio;
        }
        let m = s / n as f64;
        let se = ((s2 / n as f64 - m * m) / n as f64).sqrt();
        let kl = kl_to_prior(&vp);
        assert!((kl - m).abs() <= 3.0 * se, "state {state}: {kl} vs {m} ± {se}");
    }
}

#[test]
fn polya_examples() {
    assert_eq!(polya_upper_bound(0.0), 0.0);
    assert!((polya_upper_bound(1.0) - 0.7200).abs() < 1e-4);
    assert!((erf(1.0).powi(2) - 0.7101).abs() < 1e-4);
    assert_eq!(polya_upper_bound(40.0), 1.0);
}

#[test]
fn jensen_and_cauchy_examples() {
    assert_eq!(jensen_exp_bound(&[0.0, 0.0, 0.0], 1.0).unwrap(), (3.0, 3.0));
    let (l, r) = jensen_exp_bound(&[1.0, 1.0], 2.0).unwrap();
    assert!((l - 2.0 * (-2.0f64).exp()).abs() < 1e-15 && (r - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
    assert!(jensen_exp_bound(&[], 1.0).is_err());
    assert!(jensen_exp_bound(&[1.0], 0.0).is_err());
    let col = nalgebra::DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
    let (l, r) = cauchy_group_bound(&col).unwrap();
    assert_eq!(l, r);
    assert_eq!(cauchy_group_bound(&nalgebra::DMatrix::zeros(2, 2)).unwrap(), (0.0, 0.0));
    assert!(cauchy_group_bound(&nalgebra::DMatrix::zeros(0, 2)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn erf_is_odd_and_bounded(z in -30.0f64..30.0) {
        prop_assert_eq!(erf(z) + erf(-z), 0.0);
        prop_assert!(erf(z).abs() <= 1.0);
    }

    #[test]
    fn cdf_is_symmetric(z in -30.0f64..30.0) {
        prop_assert!((std_normal_cdf(z) + std_normal_cdf(-z) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn polya_dominates_erf_squared(z in -10.0f64..10.0) {
        prop_assert!(erf(z).powi(2) <= polya_upper_bound(z));
    }

    #[test]
    fn jensen_holds(mus in prop::collection::vec(-5.0f64..5.0, 1..64), c1 in 1e-3f64..10.0) {
        let (lhs, rhs) = jensen_exp_bound(&mus, c1).unwrap();
        prop_assert!(lhs >= rhs, "{} < {}", lhs, rhs);
    }

    #[test]
    fn cauchy_holds(k in 1usize..9, m in 1usize..5, vals in prop::collection::vec(-10.0f64..10.0, 40)) {
        let a = nalgebra::DMatrix::from_fn(k, m, |i, j| vals[(i * m + j) % vals.len()]);
        let (lhs, rhs) = cauchy_group_bound(&a).unwrap();
        prop_assert!(lhs <= rhs, "{} > {}", lhs, rhs);
    }

    #[test]
    fn expectations_stay_in_range(mu in -50.0f64..50.0, var in 0.0f64..100.0) {
        let g = GaussianScalar::new(mu, var).unwrap();
        let e = expected_erf(g);
        let e2 = expected_erf_squared(g);
        prop_assert!(e.abs() <= 1.0);
        prop_assert!(e2 <= 1.0 && e2 >= e * e - 1e-12);
    }
}
