//! Error function, normal CDF, closed-form Gaussian expectations and the
//! elementary inequalities behind the width bound.
//!
//! The inequality kernels return both sides as `(lhs, rhs)` so callers (and
//! property tests) can check the stated relation directly.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature;

/// A univariate Gaussian `N(mean, variance)`; zero variance is a point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianScalar {
    mean: f64,
    variance: f64,
}

impl GaussianScalar {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian requires finite mean and variance >= 0, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub(crate) fn new_unchecked(mean: f64, variance: f64) -> Self {
        debug_assert!(variance >= 0.0);
        Self { mean, variance }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[inline]
pub fn erf(z: f64) -> f64 {
    // SAFETY: pure C99 math function without side effects.
    unsafe { sys::erf(z) }
}

#[inline]
pub fn erfc(z: f64) -> f64 {
    // SAFETY: as for `erf`.
    unsafe { sys::erfc(z) }
}

mod sys {
    // The platform C math library, which the standard library already links.
    extern "C" {
        pub fn erf(x: f64) -> f64;
        pub fn erfc(x: f64) -> f64;
    }
}

/// `d/dz erf(z)`.
#[inline]
pub fn erf_derivative(z: f64) -> f64 {
    std::f64::consts::FRAC_2_SQRT_PI * (-z * z).exp()
}

/// Standard normal CDF, evaluated through `erfc` so both tails keep full
/// relative precision.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `E[Φ(z)] = Φ(μ / sqrt(1 + σ²))`.
pub fn expected_probit(g: GaussianScalar) -> f64 {
    std_normal_cdf(g.mean / (1.0 + g.variance).sqrt())
}

/// `E[erf(z)] = erf(μ / sqrt(1 + 2σ²))`.
pub fn expected_erf(g: GaussianScalar) -> f64 {
    erf(g.mean / (1.0 + 2.0 * g.variance).sqrt())
}

/// `E[erf(z)²]` for `z ~ N(μ, σ²)`.
///
/// With `erf(z) = 2Φ(√2 z) − 1`, the square reduces to a bivariate normal
/// orthant probability `Φ₂(h, h; ρ)` with `h = √2 μ / sqrt(1 + 2σ²)` and
/// `ρ = 2σ² / (1 + 2σ²)`, evaluated through the one-dimensional Plackett
/// integral over the correlation (angle substitution `r = sin θ`). Since
/// `2Φ(h) − 1 = E[erf(z)]`, the result is `E[erf(z)]² + 4 (Φ₂ − Φ(h)²)`.
pub fn expected_erf_squared(g: GaussianScalar) -> f64 {
    let mean_sq = expected_erf(g).powi(2);
    if g.variance == 0.0 {
        return mean_sq;
    }
    let denom = 1.0 + 2.0 * g.variance;
    let h2 = 2.0 * g.mean * g.mean / denom;
    let rho = 2.0 * g.variance / denom;
    let orthant_excess =
        quadrature::integrate(0.0, rho.asin(), |theta| (-h2 / (1.0 + theta.sin())).exp()) / (2.0 * PI);
    (mean_sq + 4.0 * orthant_excess).min(1.0)
}

/// `1 − exp(−(4/π) z²)`, an upper bound on `erf(z)²`.
pub fn polya_upper_bound(z: f64) -> f64 {
    -(-(4.0 / PI) * z * z).exp_m1()
}

/// Jensen-type bound `Σ exp(−c1 μ_k²) ≥ K exp(−(c1/K) Σ μ_k²)`.
///
/// The budget constant is fixed at its tightest admissible value `Σ μ_k²`.
pub fn jensen_exp_bound(mus: &[f64], c1: f64) -> Result<(f64, f64)> {
    if mus.is_empty() {
        return Err(Error::Empty("jensen_exp_bound needs at least one value"));
    }
    if !(c1 > 0.0) {
        return Err(Error::InvalidParameter(format!("c1 must be positive, got {c1}")));
    }
    let k = mus.len() as f64;
    // Both sides group as c1 · (squared term) so equal inputs give equal sides.
    let lhs = mus.iter().map(|m| (-c1 * (m * m)).exp()).sum();
    let budget: f64 = mus.iter().map(|m| m * m).sum();
    let rhs = k * (-c1 * (budget / k)).exp();
    Ok((lhs, rhs))
}

/// Grouped Cauchy–Schwarz: `Σ_k (Σ_m a_km)² ≤ M Σ_m Σ_k a_km²` for a `K × M` matrix.
pub fn cauchy_group_bound(a: &DMatrix<f64>) -> Result<(f64, f64)> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Empty("cauchy_group_bound needs a non-empty matrix"));
    }
    let lhs = a
        .row_iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            s * s
        })
        .sum();
    let m = a.ncols() as f64;
    let rhs = m * a
        .column_iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>();
    Ok((lhs, rhs))
}
