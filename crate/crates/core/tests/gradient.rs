//! Seed-fixed ELBO gradient against central finite differences.

use widthlab_core::data::{zscore, Dataset};
use widthlab_core::model::{Activation, Architecture, PriorConfig};
use widthlab_core::vi::{elbo_estimate, elbo_gradient, init_variational, VariationalParams};

fn sine_data() -> Dataset {
    let pairs: Vec<(f64, f64)> = (0..7)
        .map(|i| {
            let x = -1.5 + 0.5 * i as f64;
            (x, (3.0 * x).sin() + 0.05 * (i as f64 - 3.0))
        })
        .collect();
    zscore(&Dataset::from_pairs(&pairs).unwrap()).unwrap()
}

fn loss(vp: &VariationalParams, arch: &Architecture, prior: &PriorConfig, d: &Dataset, seed: u64) -> f64 {
    -elbo_estimate(vp, d, arch, prior, 16, seed).unwrap().elbo
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences over every coordinate of `(μ, ρ)`.
fn max_relative_error(vp: &VariationalParams, arch: &Architecture, d: &Dataset, seed: u64) -> f64 {
    let prior = PriorConfig::default();
    let g = elbo_gradient(&vp, d, arch, &prior, 16, seed).unwrap();
    let p = vp.len();
    let mut worst = 0.0f64;
    for i in 0..2 * p {
        let mut plus = vp.clone();
        let mut minus = vp.clone();
        let v = if i < p { vp.mu[i] } else { vp.rho[i - p] };
        let h = 1e-4 * v.abs().max(1.0);
        let (a, b) = if i < p { (&mut plus.mu[i], &mut minus.mu[i]) } else { (&mut plus.rho[i - p], &mut minus.rho[i - p]) };
        *a += h;
        *b -= h;
        let fd = (loss(&plus, arch, &prior, d, seed) - loss(&minus, arch, &prior, d, seed)) / (2.0 * h);
        let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-3);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    for act in [Activation::Erf, Activation::Tanh, Activation::Relu] {
        for k in [2, 8] {
            let arch = Architecture::new(1, k, act).unwrap();
            for (name, d) in [("two_points", zscore(&Dataset::from_pairs(&[(-1.0, -1.0), (1.0, 1.0)]).unwrap()).unwrap()), ("sine", sine_data())] {
                for seed in 0..3 {
                    let mut vp = init_variational(&arch, seed);
                    vp.rho.iter_mut().enumerate().for_each(|(i, r)| *r = -0.3 + 0.05 * (i % 7) as f64);
                    let err = max_relative_error(&vp, &arch, &d, seed);
                    println!("{act} K={k} {name} seed={seed}: {err:.2e}");
                    assert!(err <= 1e-4, "{act} K={k} {name} seed={seed}: {err:.3e}");
                }
            }
        }
    }
}

#[test]
fn gradient_at_prior_matches_finite_differences() {
    let d = zscore(&Dataset::from_pairs(&[(-1.0, -1.0), (1.0, 1.0)]).unwrap()).unwrap();
    for act in [Activation::Erf, Activation::Tanh, Activation::Relu] {
        let arch = Architecture::new(1, 8, act).unwrap();
        let err = max_relative_error(&VariationalParams::at_prior(&arch), &arch, &d, 11);
        assert!(err <= 1e-4, "{act}: {err:.3e}");
    }
}
