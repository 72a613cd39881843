//! Single-hidden-layer network, its factorized Gaussian prior, and prior
//! predictive quantities.
//!
//! Parameters are stored in raw, unit-prior-scale form. The forward pass
//! multiplies each parameter by its prior standard deviation and the output
//! sum by `1/sqrt(K)`, so i.i.d. standard-normal raw parameters induce the
//! prior with output-weight variance `σ̃²_{w2} / K`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::seed;
use crate::special::{self, GaussianScalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Erf,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Erf => special::erf(z),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Erf => special::erf_derivative(z),
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `(ψ(z), ψ'(z))`, sharing work between the two where possible.
    #[inline]
    pub fn eval_with_derivative(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Erf => (special::erf(z), special::erf_derivative(z)),
            Activation::Tanh => {
                let t = z.tanh();
                (t, 1.0 - t * t)
            }
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }

    /// `(E[ψ(z)], E[ψ(z)²])` for Gaussian `z`.
    ///
    /// Closed forms for erf and ReLU; Gauss–Hermite for tanh.
    pub fn gaussian_moments(self, z: GaussianScalar) -> (f64, f64) {
        let (m, v) = (z.mean(), z.variance());
        match self {
            Activation::Erf => (special::expected_erf(z), special::expected_erf_squared(z)),
            Activation::Tanh => {
                let s = v.sqrt();
                let first = quadrature::gaussian_expectation(m, s, f64::tanh);
                let second = quadrature::gaussian_expectation(m, s, |t| t.tanh().powi(2));
                (first, second)
            }
            Activation::Relu => {
                if v == 0.0 {
                    let r = m.max(0.0);
                    return (r, r * r);
                }
                let s = v.sqrt();
                let a = m / s;
                let cdf = special::std_normal_cdf(a);
                let pdf = special::std_normal_pdf(a);
                (m * cdf + s * pdf, (m * m + v) * cdf + m * s * pdf)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Erf => "erf",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "erf" => Ok(Activation::Erf),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidParameter(format!("unknown activation `{other}`"))),
        }
    }
}

/// Prior and likelihood variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    /// Input-weight prior variance.
    pub sigma2_w1: f64,
    /// Input-bias prior variance.
    pub sigma2_b1: f64,
    /// Output-weight variance before the `1/K` width scaling.
    pub sigma2_w2_tilde: f64,
    /// Observation noise variance.
    pub sigma2_noise: f64,
}

impl PriorConfig {
    pub fn new(sigma2_w1: f64, sigma2_b1: f64, sigma2_w2_tilde: f64, sigma2_noise: f64) -> Result<Self> {
        let cfg = Self { sigma2_w1, sigma2_b1, sigma2_w2_tilde, sigma2_noise };
        cfg.validate()?;
        Ok(cfg)
    }

    /// All four variances equal to one.
    pub fn unit() -> Self {
        Self { sigma2_w1: 1.0, sigma2_b1: 1.0, sigma2_w2_tilde: 1.0, sigma2_noise: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma2_w1", self.sigma2_w1),
            ("sigma2_b1", self.sigma2_b1),
            ("sigma2_w2_tilde", self.sigma2_w2_tilde),
            ("sigma2_noise", self.sigma2_noise),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Pre-activation variance `σ²_{w1}·‖x‖² + σ²_{b1}` under the prior.
    pub fn preactivation_variance(&self, x: &[f64]) -> f64 {
        self.sigma2_w1 * x.iter().map(|v| v * v).sum::<f64>() + self.sigma2_b1
    }
}

/// Variances 2 for every weight group and noise variance 0.01.
impl Default for PriorConfig {
    fn default() -> Self {
        Self { sigma2_w1: 2.0, sigma2_b1: 2.0, sigma2_w2_tilde: 2.0, sigma2_noise: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub width: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(input_dim: usize, width: usize, activation: Activation) -> Result<Self> {
        if input_dim == 0 || width == 0 {
            return Err(Error::InvalidParameter(format!(
                "input_dim and width must be positive, got ({input_dim}, {width})"
            )));
        }
        Ok(Self { input_dim, width, activation })
    }

    /// Number of raw parameters, `K (D + 2)`.
    pub fn num_params(&self) -> usize {
        self.width * (self.input_dim + 2)
    }

    /// Offset of `b1` in the flat layout.
    pub fn b1_offset(&self) -> usize {
        self.width * self.input_dim
    }

    /// Offset of `w2` in the flat layout.
    pub fn w2_offset(&self) -> usize {
        self.width * (self.input_dim + 1)
    }
}

/// Multipliers applied to raw parameters in the forward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scales {
    pub w1: f64,
    pub b1: f64,
    /// `σ̃_{w2} / sqrt(K)`.
    pub out: f64,
}

impl Scales {
    pub fn new(arch: &Architecture, prior: &PriorConfig) -> Self {
        Self {
            w1: prior.sigma2_w1.sqrt(),
            b1: prior.sigma2_b1.sqrt(),
            out: (prior.sigma2_w2_tilde / arch.width as f64).sqrt(),
        }
    }
}

/// Raw network parameters in the flat layout `(w1 row-major K×D, b1, w2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    width: usize,
    input_dim: usize,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(arch: &Architecture) -> Self {
        Self { width: arch.width, input_dim: arch.input_dim, values: vec![0.0; arch.num_params()] }
    }

    pub fn from_flat(arch: &Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.num_params() {
            return Err(Error::DimensionMismatch { expected: arch.num_params(), got: values.len() });
        }
        Ok(Self { width: arch.width, input_dim: arch.input_dim, values })
    }

    /// Builds from per-unit input weights, biases and output weights.
    pub fn from_parts(w1: &[Vec<f64>], b1: &[f64], w2: &[f64]) -> Result<Self> {
        let width = w1.len();
        if width == 0 {
            return Err(Error::Empty("at least one hidden unit"));
        }
        let input_dim = w1[0].len();
        if input_dim == 0 {
            return Err(Error::Empty("at least one input dimension"));
        }
        let mut values = Vec::with_capacity(width * (input_dim + 2));
        for row in w1 {
            if row.len() != input_dim {
                return Err(Error::DimensionMismatch { expected: input_dim, got: row.len() });
            }
            values.extend_from_slice(row);
        }
        for part in [b1, w2] {
            if part.len() != width {
                return Err(Error::DimensionMismatch { expected: width, got: part.len() });
            }
            values.extend_from_slice(part);
        }
        Ok(Self { width, input_dim, values })
    }

    /// Standard-normal draw, i.e. a sample from the raw prior.
    pub fn sample_prior(arch: &Architecture, rng: &mut seed::Rng) -> Self {
        let values = (0..arch.num_params()).map(|_| StandardNormal.sample(rng)).collect();
        Self { width: arch.width, input_dim: arch.input_dim, values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    pub fn w1(&self, k: usize) -> &[f64] {
        &self.values[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn b1(&self) -> &[f64] {
        let o = self.width * self.input_dim;
        &self.values[o..o + self.width]
    }

    pub fn w2(&self) -> &[f64] {
        let o = self.width * (self.input_dim + 1);
        &self.values[o..]
    }

    fn matches(&self, arch: &Architecture) -> Result<()> {
        if self.width != arch.width {
            return Err(Error::DimensionMismatch { expected: arch.width, got: self.width });
        }
        if self.input_dim != arch.input_dim {
            return Err(Error::DimensionMismatch { expected: arch.input_dim, got: self.input_dim });
        }
        Ok(())
    }
}

/// Network output on flat raw parameters; no dimension checks.
#[inline]
pub(crate) fn forward_flat(arch: &Architecture, scales: &Scales, params: &[f64], x: &[f64]) -> f64 {
    let d = arch.input_dim;
    let b1 = &params[arch.b1_offset()..arch.w2_offset()];
    let w2 = &params[arch.w2_offset()..];
    let mut acc = 0.0;
    for k in 0..arch.width {
        let w1 = &params[k * d..(k + 1) * d];
        let dot: f64 = w1.iter().zip(x).map(|(w, xi)| w * xi).sum();
        let z = scales.w1 * dot + scales.b1 * b1[k];
        acc += w2[k] * arch.activation.eval(z);
    }
    scales.out * acc
}

/// `f(x) = (σ̃_{w2}/√K) Σ_k w2_k ψ(σ_{w1} w1_kᵀ x + σ_{b1} b1_k)` on raw parameters.
pub fn forward(arch: &Architecture, prior: &PriorConfig, params: &ParamVector, x: &[f64]) -> Result<f64> {
    params.matches(arch)?;
    if x.len() != arch.input_dim {
        return Err(Error::DimensionMismatch { expected: arch.input_dim, got: x.len() });
    }
    Ok(forward_flat(arch, &Scales::new(arch, prior), &params.values, x))
}

/// Prior predictive variance `V(x) = σ̃²_{w2}·E[ψ(s e)²]`, `s² = σ²_{w1}‖x‖² + σ²_{b1}`.
///
/// For the odd activations (erf, tanh) this is `σ̃²_{w2}·Var[ψ(s e)]`. Erf uses
/// the arcsine closed form, ReLU `s²/2`, tanh Gauss–Hermite quadrature.
pub fn activation_prior_variance(arch: &Architecture, prior: &PriorConfig, x: &[f64]) -> f64 {
    let s2 = prior.preactivation_variance(x);
    let second_moment = match arch.activation {
        Activation::Erf => 2.0 / PI * (2.0 * s2 / (1.0 + 2.0 * s2)).asin(),
        Activation::Relu => 0.5 * s2,
        Activation::Tanh => quadrature::gaussian_expectation(0.0, s2.sqrt(), |t| t.tanh().powi(2)),
    };
    prior.sigma2_w2_tilde * second_moment
}

/// Rows of a `T × D` matrix as contiguous vectors.
pub fn rows(xs: &DMatrix<f64>) -> Vec<Vec<f64>> {
    xs.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Monte Carlo mean and variance with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McMoments {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub var_se: Vec<f64>,
    pub n_samples: usize,
}

impl McMoments {
    /// Moments of `samples[s][t]` over `s`, with the unbiased variance and the
    /// fourth-moment standard error of the variance.
    pub fn from_samples(samples: &[Vec<f64>]) -> Self {
        let n = samples.len();
        let t = samples.first().map_or(0, Vec::len);
        let nf = n as f64;
        let mut means = vec![0.0; t];
        for s in samples {
            for (m, v) in means.iter_mut().zip(s) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= nf);
        let mut m2 = vec![0.0; t];
        let mut m4 = vec![0.0; t];
        for s in samples {
            for j in 0..t {
                let c = s[j] - means[j];
                let c2 = c * c;
                m2[j] += c2;
                m4[j] += c2 * c2;
            }
        }
        let variances: Vec<f64> = m2.iter().map(|v| v / (nf - 1.0)).collect();
        let mean_se = variances.iter().map(|v| (v / nf).sqrt()).collect();
        let var_se = (0..t)
            .map(|j| {
                let pop2 = m2[j] / nf;
                let pop4 = m4[j] / nf;
                ((pop4 - pop2 * pop2).max(0.0) / nf).sqrt()
            })
            .collect();
        Self { means, variances, mean_se, var_se, n_samples: n }
    }
}

/// Function values at `xs` for `n_samples` prior draws; sample `s` uses stream `s`
/// of `seed`, so results do not depend on thread scheduling.
pub fn sample_prior_functions(
    arch: &Architecture,
    prior: &PriorConfig,
    xs: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if xs.ncols() != arch.input_dim {
        return Err(Error::DimensionMismatch { expected: arch.input_dim, got: xs.ncols() });
    }
    let points = rows(xs);
    let scales = Scales::new(arch, prior);
    Ok((0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed::stream_rng(seed, s as u64);
            let theta = ParamVector::sample_prior(arch, &mut rng);
            points.iter().map(|x| forward_flat(arch, &scales, &theta.values, x)).collect()
        })
        .collect())
}

/// Monte Carlo prior predictive moments at each row of `xs`.
pub fn prior_predictive_moments(
    arch: &Architecture,
    prior: &PriorConfig,
    xs: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<McMoments> {
    if n_samples < 2 {
        return Err(Error::InvalidParameter("n_samples must be at least 2".into()));
    }
    let samples = sample_prior_functions(arch, prior, xs, n_samples, seed)?;
    Ok(McMoments::from_samples(&samples))
}
