//! Infinite-width (NNGP) kernels and exact Gaussian-process regression.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{self, PriorConfig};
use crate::seed;

/// Covariance `σ̃²_{w2} E[ψ(z) ψ(z')]` of the infinite-width prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Arcsine kernel of the erf network.
    ErfAnalytic,
    /// Degree-1 arc-cosine kernel of the ReLU network.
    ReluArcCosine,
    /// Monte Carlo average over shared input-layer draws.
    TanhMonteCarlo { n_samples: usize, seed: u64 },
}

/// Kernel bound to a prior; holds the shared draws of the Monte Carlo kind.
#[derive(Debug, Clone)]
pub struct Kernel {
    kind: KernelKind,
    prior: PriorConfig,
    input_dim: usize,
    // Pre-activation coefficients (σ_{w1} w, σ_{b1} b) per draw, row-major.
    draws: Vec<f64>,
}

impl Kernel {
    pub fn new(kind: KernelKind, prior: &PriorConfig, input_dim: usize) -> Result<Self> {
        prior.validate()?;
        let mut draws = Vec::new();
        if let KernelKind::TanhMonteCarlo { n_samples, seed } = kind {
            if n_samples == 0 {
                return Err(Error::InvalidParameter("tanh kernel needs at least one sample".into()));
            }
            let mut rng = seed::rng(seed);
            let (sw, sb) = (prior.sigma2_w1.sqrt(), prior.sigma2_b1.sqrt());
            draws.reserve(n_samples * (input_dim + 1));
            for _ in 0..n_samples {
                for _ in 0..input_dim {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    draws.push(sw * e);
                }
                let e: f64 = StandardNormal.sample(&mut rng);
                draws.push(sb * e);
            }
        }
        Ok(Self { kind, prior: *prior, input_dim, draws })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn sigma(&self, a: &[f64], b: &[f64]) -> f64 {
        self.prior.sigma2_w1 * a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>() + self.prior.sigma2_b1
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        for v in [x, x2] {
            if v.len() != self.input_dim {
                return Err(Error::DimensionMismatch { expected: self.input_dim, got: v.len() });
            }
        }
        Ok(self.eval_unchecked(x, x2))
    }

    fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        let second_moment = match self.kind {
            KernelKind::ErfAnalytic => {
                let s12 = self.sigma(x, x2);
                let s11 = self.sigma(x, x);
                let s22 = self.sigma(x2, x2);
                let arg = 2.0 * s12 / ((1.0 + 2.0 * s11) * (1.0 + 2.0 * s22)).sqrt();
                2.0 / PI * arg.clamp(-1.0, 1.0).asin()
            }
            KernelKind::ReluArcCosine => {
                let s12 = self.sigma(x, x2);
                let norm = (self.sigma(x, x) * self.sigma(x2, x2)).sqrt();
                let cos = (s12 / norm).clamp(-1.0, 1.0);
                let angle = cos.acos();
                norm / (2.0 * PI) * (angle.sin() + (PI - angle) * cos)
            }
            KernelKind::TanhMonteCarlo { n_samples, .. } => {
                let d = self.input_dim;
                let pre = |c: &[f64], v: &[f64]| -> f64 {
                    c[..d].iter().zip(v).map(|(w, xi)| w * xi).sum::<f64>() + c[d]
                };
                self.draws
                    .chunks_exact(d + 1)
                    .map(|c| pre(c, x).tanh() * pre(c, x2).tanh())
                    .sum::<f64>()
                    / n_samples as f64
            }
        };
        self.prior.sigma2_w2_tilde * second_moment
    }

    /// Cross-covariance matrix between the rows of `a` and `b`.
    pub fn matrix(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        for m in [a, b] {
            if m.ncols() != self.input_dim {
                return Err(Error::DimensionMismatch { expected: self.input_dim, got: m.ncols() });
            }
        }
        let (ra, rb) = (model::rows(a), model::rows(b));
        let entries: Vec<Vec<f64>> =
            ra.par_iter().map(|x| rb.iter().map(|x2| self.eval_unchecked(x, x2)).collect()).collect();
        Ok(DMatrix::from_fn(ra.len(), rb.len(), |i, j| entries[i][j]))
    }

    /// Symmetric covariance matrix of the rows of `a`; the upper triangle is
    /// mirrored from the lower one.
    pub fn gram(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut k = self.matrix(a, a)?;
        for i in 0..k.nrows() {
            for j in i + 1..k.ncols() {
                k[(i, j)] = k[(j, i)];
            }
        }
        Ok(k)
    }
}

/// `σ̃²_{w2} E[ψ(z) ψ(z')]` under the input-layer prior.
pub fn nngp_kernel(prior: &PriorConfig, x: &[f64], x2: &[f64], kind: KernelKind) -> Result<f64> {
    Kernel::new(kind, prior, x.len())?.eval(x, x2)
}

/// Jitter values tried, in order, when factorizing a kernel matrix.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

// Cholesky of `m + jitter·I` for the first jitter on the ladder that succeeds.
fn factorize(m: &DMatrix<f64>) -> Result<(Cholesky<f64, nalgebra::Dyn>, f64)> {
    for jitter in JITTER_LADDER {
        let mut shifted = m.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok((chol, jitter));
        }
    }
    Err(Error::Decomposition { max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] })
}

/// Exact GP posterior state: the Cholesky factor of `K + σ²_noise I` (plus
/// any jitter) and `α = (K + σ²_noise I)⁻¹ y`.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    train_inputs: DMatrix<f64>,
    kernel: Kernel,
    factor: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter_used: f64,
    regularized: DMatrix<f64>,
}

impl GpPosterior {
    pub fn train_inputs(&self) -> &DMatrix<f64> {
        &self.train_inputs
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Lower-triangular factor `L`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// `‖L Lᵀ − (K + σ²I + jitter·I)‖_F / ‖K + σ²I + jitter·I‖_F`.
    pub fn reconstruction_error(&self) -> f64 {
        let target = &self.regularized;
        (&self.factor * self.factor.transpose() - target).norm() / target.norm()
    }
}

pub fn gp_fit(x: &DMatrix<f64>, y: &DVector<f64>, kind: KernelKind, prior: &PriorConfig) -> Result<GpPosterior> {
    if x.nrows() == 0 {
        return Err(Error::Empty("gp_fit needs at least one observation"));
    }
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    let kernel = Kernel::new(kind, prior, x.ncols())?;
    let mut k = kernel.gram(x)?;
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("kernel matrix has non-finite entries".into()));
    }
    for i in 0..k.nrows() {
        k[(i, i)] += prior.sigma2_noise;
    }
    let (chol, jitter_used) = factorize(&k)?;
    for i in 0..k.nrows() {
        k[(i, i)] += jitter_used;
    }
    let alpha = chol.solve(y);
    Ok(GpPosterior {
        train_inputs: x.clone(),
        kernel,
        factor: chol.l(),
        alpha,
        jitter_used,
        regularized: k,
    })
}

/// Tolerance below zero within which predictive variances are clamped.
pub const VARIANCE_CLAMP: f64 = 1e-10;

/// Posterior mean `k*ᵀ α` and latent variance `k** − ‖L⁻¹ k*‖²` at each row of `xs`.
pub fn gp_predict(post: &GpPosterior, xs: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let cross = post.kernel.matrix(&post.train_inputs, xs)?;
    let means = (cross.transpose() * &post.alpha).iter().copied().collect();
    let v = post
        .factor
        .solve_lower_triangular(&cross)
        .expect("Cholesky factor has a positive diagonal");
    let mut variances = Vec::with_capacity(xs.nrows());
    for (j, x) in model::rows(xs).iter().enumerate() {
        let prior_var = post.kernel.eval_unchecked(x, x);
        let var = prior_var - v.column(j).norm_squared();
        if var < -VARIANCE_CLAMP {
            return Err(Error::NegativeVariance { value: var });
        }
        variances.push(var.max(0.0));
    }
    Ok((means, variances))
}

/// Draws from the zero-mean GP prior at the rows of `xs`.
pub fn sample_gp_prior(
    kind: KernelKind,
    prior: &PriorConfig,
    xs: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let kernel = Kernel::new(kind, prior, xs.ncols())?;
    let (chol, _) = factorize(&kernel.gram(xs)?)?;
    let l = chol.l();
    let t = xs.nrows();
    Ok((0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed::stream_rng(seed, s as u64);
            let e = DVector::from_fn(t, |_, _| StandardNormal.sample(&mut rng));
            (&l * e).iter().copied().collect()
        })
        .collect())
}
