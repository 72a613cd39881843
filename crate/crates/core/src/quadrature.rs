//! Gaussian quadrature rules built with the Golub–Welsch eigenvalue method.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Number of Gauss–Hermite nodes used for Gaussian expectations.
pub const HERMITE_NODES: usize = 128;
const LEGENDRE_NODES: usize = 40;

// Jacobi matrix with zero diagonal and the given off-diagonal; weights are the
// squared first eigenvector components scaled by the total mass.
fn golub_welsch(n: usize, off_diag: impl Fn(usize) -> f64, mass: f64) -> Rule {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = off_diag(i);
        jacobi[(i - 1, i)] = b;
        jacobi[(i, i - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mass * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize: both rules are symmetric about zero.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let (nodes, weights) = pairs.into_iter().unzip();
    Rule { nodes, weights }
}

/// Probabilists' Gauss–Hermite rule: `sum w_i g(x_i) ≈ E[g(e)]`, `e ~ N(0, 1)`.
pub fn hermite() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| golub_welsch(HERMITE_NODES, |i| (i as f64).sqrt(), 1.0))
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn legendre() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        golub_welsch(
            LEGENDRE_NODES,
            |i| {
                let k = i as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            },
            2.0,
        )
    })
}

/// `E[g(mean + sd * e)]` for standard normal `e`.
pub fn gaussian_expectation(mean: f64, sd: f64, g: impl Fn(f64) -> f64) -> f64 {
    let rule = hermite();
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w * g(mean + sd * x))
        .sum()
}

/// `∫_a^b g(t) dt` by Gauss–Legendre.
pub fn integrate(a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
    let rule = legendre();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    half * rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w * g(mid + half * x))
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_reproduces_gaussian_moments() {
        assert_relative_eq!(gaussian_expectation(0.0, 1.0, |_| 1.0), 1.0, epsilon = 1e-13);
        assert_relative_eq!(gaussian_expectation(0.0, 1.0, |x| x * x), 1.0, epsilon = 1e-12);
        assert_relative_eq!(gaussian_expectation(0.0, 1.0, |x| x.powi(4)), 3.0, epsilon = 1e-11);
        assert_relative_eq!(gaussian_expectation(0.0, 1.0, |x| x.powi(6)), 15.0, epsilon = 1e-10);
        // E[exp(t e)] = exp(t^2 / 2)
        assert_relative_eq!(
            gaussian_expectation(0.0, 1.0, |x| (0.7 * x).exp()),
            (0.245f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn legendre_integrates_polynomials_and_smooth_functions() {
        assert_relative_eq!(integrate(0.0, 2.0, |t| t * t), 8.0 / 3.0, epsilon = 1e-13);
        assert_relative_eq!(
            integrate(0.0, std::f64::consts::FRAC_PI_2, f64::sin),
            1.0,
            epsilon = 1e-14
        );
    }
}
