//! Reparameterized ELBO estimate and its exact gradient for fixed noise draws.
//!
//! Monte Carlo sample `s` of an evaluation with seed `seed` draws its noise
//! from stream `s` of `seed`. The estimate and the gradient therefore see the
//! same draws, and the gradient is the exact derivative of the seed-fixed
//! estimate. Samples are processed in fixed-size chunks whose partial sums
//! are combined in chunk order, so results do not depend on thread count.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Architecture, PriorConfig, Scales};
use crate::seed;

use super::params::{kl_to_prior, VariationalParams};

const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboBreakdown {
    /// `−E_q[log L]`, including the `N/2·log(2πσ²_noise)` constant.
    pub expected_nll: f64,
    pub kl: f64,
    pub elbo: f64,
    /// Expected squared-error term `E_q Σ (y − f)² / (2σ²_noise)`, i.e. the
    /// expected negative log-likelihood without its constant.
    pub error: f64,
}

impl ElboBreakdown {
    fn new(error: f64, nll_constant: f64, kl: f64) -> Self {
        let expected_nll = error + nll_constant;
        Self { expected_nll, kl, elbo: -(expected_nll + kl), error }
    }

    /// `−ELBO`.
    pub fn loss(&self) -> f64 {
        -self.elbo
    }

    /// `−ELBO` without the likelihood constant: `Error + KL`.
    pub fn loss_without_constant(&self) -> f64 {
        self.error + self.kl
    }
}

/// Seed-fixed Monte Carlo objective `−ELBO(vp)` over a dataset.
#[derive(Debug, Clone)]
pub struct ElboObjective {
    arch: Architecture,
    prior: PriorConfig,
    scales: Scales,
    x: Vec<f64>,
    y: Vec<f64>,
    n_mc: usize,
}

struct Scratch {
    /// `σ ⊙ ε` of the current draw.
    eps_sigma: Vec<f64>,
    theta: Vec<f64>,
    act: Vec<f64>,
    dact: Vec<f64>,
    f: Vec<f64>,
    /// Per-draw gradient with respect to θ, by group.
    g_w1: Vec<f64>,
    g_b1: Vec<f64>,
    g_w2: Vec<f64>,
}

impl ElboObjective {
    pub fn new(arch: &Architecture, prior: &PriorConfig, data: &Dataset, n_mc: usize) -> Result<Self> {
        if data.input_dim() != arch.input_dim {
            return Err(Error::DimensionMismatch { expected: arch.input_dim, got: data.input_dim() });
        }
        let mut obj = Self::kl_only(arch, prior, n_mc)?;
        obj.x = data.x_row_major();
        obj.y = data.y().iter().copied().collect();
        Ok(obj)
    }

    /// Objective with no likelihood term; only the KL remains.
    pub fn kl_only(arch: &Architecture, prior: &PriorConfig, n_mc: usize) -> Result<Self> {
        prior.validate()?;
        if n_mc == 0 {
            return Err(Error::InvalidParameter("n_mc must be at least 1".into()));
        }
        Ok(Self {
            arch: *arch,
            prior: *prior,
            scales: Scales::new(arch, prior),
            x: Vec::new(),
            y: Vec::new(),
            n_mc,
        })
    }

    pub fn n_mc(&self) -> usize {
        self.n_mc
    }

    pub fn n_data(&self) -> usize {
        self.y.len()
    }

    fn nll_constant(&self) -> f64 {
        0.5 * self.n_data() as f64 * (2.0 * PI * self.prior.sigma2_noise).ln()
    }

    fn scratch(&self) -> Scratch {
        let p = self.arch.num_params();
        let kn = self.arch.width * self.n_data();
        Scratch {
            eps_sigma: vec![0.0; p],
            theta: vec![0.0; p],
            act: vec![0.0; kn],
            dact: vec![0.0; kn],
            f: vec![0.0; self.n_data()],
            g_w1: vec![0.0; self.arch.width * self.arch.input_dim],
            g_b1: vec![0.0; self.arch.width],
            g_w2: vec![0.0; self.arch.width],
        }
    }

    /// Squared-error term `Σ_n (y_n − f(x_n, θ_s))² / (2σ²_noise)` for one draw.
    /// When `grad` is given, adds `weight ×` its gradient with respect to
    /// `(μ, ρ)`.
    fn sample_pass(
        &self,
        vp: &VariationalParams,
        sigma: &[f64],
        sample_seed: u64,
        scratch: &mut Scratch,
        grad: Option<(&mut [f64], f64)>,
    ) -> f64 {
        let n_data = self.n_data();
        if n_data == 0 {
            return 0.0;
        }
        let arch = &self.arch;
        let (k_width, d) = (arch.width, arch.input_dim);
        let sc = &self.scales;
        let mut rng = seed::rng(sample_seed);
        for ((es, t), (m, s)) in scratch
            .eps_sigma
            .iter_mut()
            .zip(scratch.theta.iter_mut())
            .zip(vp.mu.iter().zip(sigma))
        {
            let e: f64 = StandardNormal.sample(&mut rng);
            *es = s * e;
            *t = m + *es;
        }
        let theta = &scratch.theta;
        let (w1_all, rest) = theta.split_at(arch.b1_offset());
        let (b1_all, w2_all) = rest.split_at(k_width);
        let act_fn = arch.activation;
        // Forward, one observation at a time across all units; `act` and
        // `dact` are laid out observation-major.
        for (((x, f), acts), dacts) in self
            .x
            .chunks_exact(d)
            .zip(scratch.f.iter_mut())
            .zip(scratch.act.chunks_exact_mut(k_width))
            .zip(scratch.dact.chunks_exact_mut(k_width))
        {
            let mut sum = 0.0;
            for ((((h, dh), w1), b), w2) in acts
                .iter_mut()
                .zip(dacts.iter_mut())
                .zip(w1_all.chunks_exact(d))
                .zip(b1_all)
                .zip(w2_all)
            {
                let dot: f64 = w1.iter().zip(x).map(|(w, xi)| w * xi).sum();
                (*h, *dh) = act_fn.eval_with_derivative(sc.w1 * dot + sc.b1 * b);
                sum += w2 * *h;
            }
            *f = sum;
        }
        let inv_two_noise = 0.5 / self.prior.sigma2_noise;
        let mut sq = 0.0;
        for (f, y) in scratch.f.iter_mut().zip(&self.y) {
            // f now holds the residual f(x_n) − y_n
            *f = sc.out * *f - y;
            sq += *f * *f;
        }
        if let Some((g, weight)) = grad {
            // dLoss/df_n = weight · r_n / σ²_noise
            let coef = weight * 2.0 * inv_two_noise;
            let Scratch { eps_sigma, act, dact, f: resid, g_w1, g_b1, g_w2, .. } = scratch;
            g_w1.iter_mut().for_each(|v| *v = 0.0);
            g_b1.iter_mut().for_each(|v| *v = 0.0);
            g_w2.iter_mut().for_each(|v| *v = 0.0);
            // Sums over observations of r_n ψ, r_n ψ' and r_n ψ' x.
            for (((r, x), acts), dacts) in resid
                .iter()
                .zip(self.x.chunks_exact(d))
                .zip(act.chunks_exact(k_width))
                .zip(dact.chunks_exact(k_width))
            {
                let r = coef * r;
                for (((gw2, gpre), gw1), (a, da)) in g_w2
                    .iter_mut()
                    .zip(g_b1.iter_mut())
                    .zip(g_w1.chunks_exact_mut(d))
                    .zip(acts.iter().zip(dacts))
                {
                    *gw2 += r * a;
                    let rd = r * da;
                    *gpre += rd;
                    gw1.iter_mut().zip(x).for_each(|(g, xi)| *g += rd * xi);
                }
            }
            // Chain through the scales and the reparameterization
            // (∂θ/∂μ = 1, ∂θ/∂ρ = σ ε).
            let p = arch.num_params();
            let (g_mu, g_rho) = g.split_at_mut(p);
            for (k, w2) in w2_all.iter().enumerate() {
                let back = sc.out * w2;
                g_w2[k] *= sc.out;
                g_b1[k] *= back * sc.b1;
                g_w1[k * d..(k + 1) * d].iter_mut().for_each(|v| *v *= back * sc.w1);
            }
            let local = g_w1.iter().chain(g_b1.iter()).chain(g_w2.iter());
            for (((gm, gr), es), v) in g_mu.iter_mut().zip(g_rho.iter_mut()).zip(eps_sigma.iter()).zip(local) {
                *gm += v;
                *gr += v * es;
            }
        }
        sq * inv_two_noise
    }

    fn sigmas(vp: &VariationalParams) -> Vec<f64> {
        vp.rho.iter().map(|r| r.exp()).collect()
    }

    /// Per-sample squared-error terms; their mean is the `error` field of
    /// [`ElboObjective::estimate`].
    pub fn error_samples(&self, vp: &VariationalParams, seed: u64) -> Result<Vec<f64>> {
        vp.check(&self.arch)?;
        let sigma = Self::sigmas(vp);
        Ok((0..self.n_mc)
            .into_par_iter()
            .map_init(
                || self.scratch(),
                |scratch, s| self.sample_pass(vp, &sigma, seed::derive(seed, s as u64), scratch, None),
            )
            .collect())
    }

    pub fn estimate(&self, vp: &VariationalParams, seed: u64) -> Result<ElboBreakdown> {
        let samples = self.error_samples(vp, seed)?;
        let error = samples.iter().sum::<f64>() / self.n_mc as f64;
        Ok(ElboBreakdown::new(error, self.nll_constant(), kl_to_prior(vp)))
    }

    /// Value and gradient of `−ELBO` with respect to `(μ, ρ)`, laid out as
    /// `[∂/∂μ; ∂/∂ρ]`.
    pub fn value_and_gradient(&self, vp: &VariationalParams, seed: u64) -> Result<(ElboBreakdown, Vec<f64>)> {
        vp.check(&self.arch)?;
        let p = self.arch.num_params();
        let sigma = Self::sigmas(vp);
        let weight = 1.0 / self.n_mc as f64;
        let n_chunks = self.n_mc.div_ceil(CHUNK);
        let partials: Vec<(f64, Vec<f64>)> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut scratch = self.scratch();
                let mut g = vec![0.0; 2 * p];
                let mut err = 0.0;
                for s in c * CHUNK..((c + 1) * CHUNK).min(self.n_mc) {
                    err += self.sample_pass(
                        vp,
                        &sigma,
                        seed::derive(seed, s as u64),
                        &mut scratch,
                        Some((&mut g, weight)),
                    );
                }
                (err, g)
            })
            .collect();
        let mut error = 0.0;
        let mut grad = vec![0.0; 2 * p];
        for (err, g) in partials {
            error += err;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        error *= weight;
        // KL: ∂/∂μ = μ, ∂/∂ρ = σ² − 1.
        for i in 0..p {
            grad[i] += vp.mu[i];
            grad[p + i] += (2.0 * vp.rho[i]).exp_m1();
        }
        Ok((ElboBreakdown::new(error, self.nll_constant(), kl_to_prior(vp)), grad))
    }
}

pub fn elbo_estimate(
    vp: &VariationalParams,
    dataset: &Dataset,
    arch: &Architecture,
    prior: &PriorConfig,
    n_mc: usize,
    seed: u64,
) -> Result<ElboBreakdown> {
    ElboObjective::new(arch, prior, dataset, n_mc)?.estimate(vp, seed)
}

/// Gradient of `−ELBO` for the seed-fixed estimate, as `[∂/∂μ; ∂/∂ρ]`.
pub fn elbo_gradient(
    vp: &VariationalParams,
    dataset: &Dataset,
    arch: &Architecture,
    prior: &PriorConfig,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(ElboObjective::new(arch, prior, dataset, n_mc)?.value_and_gradient(vp, seed)?.1)
}
