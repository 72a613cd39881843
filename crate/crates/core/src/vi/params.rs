use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Architecture, ParamVector};
use crate::seed;

/// Mean-field Gaussian `q(θ) = Π N(θ_i | μ_i, σ_i²)` with `σ_i = exp(ρ_i)`.
///
/// Shares the flat layout of [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

impl VariationalParams {
    pub fn new(mu: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if mu.len() != rho.len() {
            return Err(Error::DimensionMismatch { expected: mu.len(), got: rho.len() });
        }
        Ok(Self { mu, rho })
    }

    /// `q` equal to the raw standard-normal prior.
    pub fn at_prior(arch: &Architecture) -> Self {
        let n = arch.num_params();
        Self { mu: vec![0.0; n], rho: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    #[inline]
    pub fn sigma(&self, i: usize) -> f64 {
        self.rho[i].exp()
    }

    #[inline]
    pub fn sigma2(&self, i: usize) -> f64 {
        (2.0 * self.rho[i]).exp()
    }

    pub fn sigma2_all(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.sigma2(i)).collect()
    }

    pub fn check(&self, arch: &Architecture) -> Result<()> {
        if self.mu.len() != arch.num_params() {
            return Err(Error::DimensionMismatch { expected: arch.num_params(), got: self.mu.len() });
        }
        if self.rho.len() != self.mu.len() {
            return Err(Error::DimensionMismatch { expected: self.mu.len(), got: self.rho.len() });
        }
        Ok(())
    }

    /// Parameters at the variational means.
    pub fn mean_params(&self, arch: &Architecture) -> Result<ParamVector> {
        ParamVector::from_flat(arch, self.mu.clone())
    }

    /// One reparameterized draw `μ + σ ⊙ e`.
    pub fn sample(&self, arch: &Architecture, rng: &mut seed::Rng) -> Result<ParamVector> {
        self.check(arch)?;
        let values = self
            .mu
            .iter()
            .zip(&self.rho)
            .map(|(m, r)| {
                let e: f64 = StandardNormal.sample(rng);
                m + r.exp() * e
            })
            .collect();
        ParamVector::from_flat(arch, values)
    }
}

/// Normal–inverse-gamma initialization: `μ_i ~ N(0, 1)`,
/// `σ_i² ~ InvGamma(ν + 1, ν)` with `ν = K`, so `E[σ²] = 1` and the implied
/// marginal of each parameter has mean 0 and variance 2.
pub fn init_variational(arch: &Architecture, seed: u64) -> VariationalParams {
    let nu = arch.width as f64;
    let mut rng = seed::rng(seed);
    // σ² = ν / G with G ~ Gamma(ν + 1, 1).
    let gamma = Gamma::new(nu + 1.0, 1.0).expect("shape and scale are positive");
    let n = arch.num_params();
    let mu = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let rho = (0..n)
        .map(|_| {
            let g: f64 = gamma.sample(&mut rng);
            0.5 * (nu / g).ln()
        })
        .collect();
    VariationalParams { mu, rho }
}

/// `KL(q ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − log σ²)`.
pub fn kl_to_prior(vp: &VariationalParams) -> f64 {
    0.5 * vp
        .mu
        .iter()
        .zip(&vp.rho)
        .map(|(m, r)| {
            let log_s2 = 2.0 * r;
            m * m + log_s2.exp_m1() - log_s2
        })
        .sum::<f64>()
}
