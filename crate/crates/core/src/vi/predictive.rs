use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, Activation, Architecture, McMoments, PriorConfig, Scales};
use crate::seed;
use crate::special::{self, GaussianScalar};

use super::params::VariationalParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub moments: McMoments,
    /// `samples[s][t]`: function `s` evaluated at point `t`, if requested.
    pub samples: Option<Vec<Vec<f64>>>,
}

/// Monte Carlo moments of `f(x)` under `q`; draw `s` uses stream `s` of `seed`.
pub fn posterior_predictive(
    vp: &VariationalParams,
    arch: &Architecture,
    prior: &PriorConfig,
    xs: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
    keep_samples: bool,
) -> Result<PosteriorSamples> {
    if n_samples < 2 {
        return Err(Error::InvalidParameter("n_samples must be at least 2".into()));
    }
    vp.check(arch)?;
    if xs.ncols() != arch.input_dim {
        return Err(Error::DimensionMismatch { expected: arch.input_dim, got: xs.ncols() });
    }
    let points = model::rows(xs);
    let scales = Scales::new(arch, prior);
    let samples: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed::stream_rng(seed, s as u64);
            let theta = vp.sample(arch, &mut rng).expect("layout checked above");
            points
                .iter()
                .map(|x| model::forward_flat(arch, &scales, theta.as_slice(), x))
                .collect()
        })
        .collect();
    let moments = McMoments::from_samples(&samples);
    Ok(PosteriorSamples { moments, samples: keep_samples.then_some(samples) })
}

/// Law of the pre-activation of unit `k` at `x` under `q`.
pub(crate) fn preactivation(
    vp: &VariationalParams,
    arch: &Architecture,
    prior: &PriorConfig,
    k: usize,
    x: &[f64],
) -> GaussianScalar {
    let d = arch.input_dim;
    let (b1, w1) = (arch.b1_offset() + k, k * d);
    let mut mean = 0.0;
    let mut var = 0.0;
    for (j, xj) in x.iter().enumerate() {
        mean += vp.mu[w1 + j] * xj;
        var += vp.sigma2(w1 + j) * xj * xj;
    }
    let mean = prior.sigma2_w1.sqrt() * mean + prior.sigma2_b1.sqrt() * vp.mu[b1];
    let var = prior.sigma2_w1 * var + prior.sigma2_b1 * vp.sigma2(b1);
    GaussianScalar::new_unchecked(mean, var)
}

/// Predictive mean and variance from the mean-field factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMoments {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Mean and variance of `f(x)` under `q`, using the independence of units:
/// `E f = c Σ μ_{w2k} E ψ(z_k)` and
/// `Var f = c² Σ [(μ²_{w2k} + σ²_{w2k}) E ψ(z_k)² − μ²_{w2k} (E ψ(z_k))²]`
/// with `c = σ̃_{w2}/√K`.
pub fn predictive_moments_exact(
    vp: &VariationalParams,
    arch: &Architecture,
    prior: &PriorConfig,
    xs: &DMatrix<f64>,
) -> Result<ExactMoments> {
    vp.check(arch)?;
    if xs.ncols() != arch.input_dim {
        return Err(Error::DimensionMismatch { expected: arch.input_dim, got: xs.ncols() });
    }
    let out = Scales::new(arch, prior).out;
    let w2 = arch.w2_offset();
    let (means, variances) = model::rows(xs)
        .par_iter()
        .map(|x| {
            let mut mean = 0.0;
            let mut var = 0.0;
            for k in 0..arch.width {
                let (e1, e2) = arch.activation.gaussian_moments(preactivation(vp, arch, prior, k, x));
                let m = vp.mu[w2 + k];
                mean += m * e1;
                var += (m * m + vp.sigma2(w2 + k)) * e2 - m * m * e1 * e1;
            }
            (out * mean, (out * out * var).max(0.0))
        })
        .unzip();
    Ok(ExactMoments { means, variances })
}

/// Closed-form `E_q[f(x)]` for the erf activation:
/// `(σ̃_{w2}/√K) Σ_k μ_{w2k} erf(μ̂_k / sqrt(1 + 2σ̂²_k))`.
pub fn posterior_mean_exact_erf(
    vp: &VariationalParams,
    arch: &Architecture,
    prior: &PriorConfig,
    xs: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    if arch.activation != Activation::Erf {
        return Err(Error::WrongActivation(arch.activation.to_string()));
    }
    vp.check(arch)?;
    if xs.ncols() != arch.input_dim {
        return Err(Error::DimensionMismatch { expected: arch.input_dim, got: xs.ncols() });
    }
    let out = Scales::new(arch, prior).out;
    let w2 = arch.w2_offset();
    Ok(model::rows(xs)
        .par_iter()
        .map(|x| {
            out * (0..arch.width)
                .map(|k| vp.mu[w2 + k] * special::expected_erf(preactivation(vp, arch, prior, k, x)))
                .sum::<f64>()
        })
        .collect())
}

/// Expected squared-error term `Σ_n E_q(y_n − f(x_n))² / (2σ²_noise)` from the
/// exact predictive moments.
pub fn expected_error_exact(
    vp: &VariationalParams,
    arch: &Architecture,
    prior: &PriorConfig,
    dataset: &Dataset,
) -> Result<f64> {
    let m = predictive_moments_exact(vp, arch, prior, dataset.x())?;
    let sum: f64 = dataset
        .y()
        .iter()
        .zip(m.means.iter().zip(&m.variances))
        .map(|(y, (mean, var))| (y - mean).powi(2) + var)
        .sum();
    Ok(sum / (2.0 * prior.sigma2_noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vi::init_variational;
    use approx::assert_abs_diff_eq;

    fn grid() -> DMatrix<f64> {
        DMatrix::from_column_slice(5, 1, &[-2.0, -1.0, 0.0, 0.5, 2.0])
    }

    #[test]
    fn prior_means_vanish() {
        let arch = Architecture::new(1, 12, Activation::Erf).unwrap();
        let vp = VariationalParams::at_prior(&arch);
        let m = posterior_mean_exact_erf(&vp, &arch, &PriorConfig::default(), &grid()).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_output_means_vanish() {
        let arch = Architecture::new(1, 6, Activation::Erf).unwrap();
        let mut vp = init_variational(&arch, 1);
        let w2 = arch.w2_offset();
        vp.mu[w2..].iter_mut().for_each(|m| *m = 0.0);
        let m = posterior_mean_exact_erf(&vp, &arch, &PriorConfig::default(), &grid()).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn wrong_activation_rejected() {
        let arch = Architecture::new(1, 3, Activation::Tanh).unwrap();
        let vp = VariationalParams::at_prior(&arch);
        assert!(matches!(
            posterior_mean_exact_erf(&vp, &arch, &PriorConfig::default(), &grid()),
            Err(Error::WrongActivation(_))
        ));
    }

    #[test]
    fn exact_moments_at_prior_match_prior_variance() {
        for act in [Activation::Erf, Activation::Tanh, Activation::Relu] {
            let arch = Architecture::new(1, 9, act).unwrap();
            let vp = VariationalParams::at_prior(&arch);
            let prior = PriorConfig::default();
            let m = predictive_moments_exact(&vp, &arch, &prior, &grid()).unwrap();
            for (i, x) in [-2.0, -1.0, 0.0, 0.5, 2.0].iter().enumerate() {
                assert_eq!(m.means[i], 0.0);
                let v = model::activation_prior_variance(&arch, &prior, &[*x]);
                assert_abs_diff_eq!(m.variances[i], v, epsilon = 1e-10 * v.max(1.0));
            }
        }
    }

    #[test]
    fn point_mass_limit() {
        let arch = Architecture::new(1, 4, Activation::Relu).unwrap();
        let mut vp = init_variational(&arch, 8);
        vp.rho.iter_mut().for_each(|r| *r = -30.0);
        let prior = PriorConfig::default();
        let m = predictive_moments_exact(&vp, &arch, &prior, &grid()).unwrap();
        let s = posterior_predictive(&vp, &arch, &prior, &grid(), 20, 1, false).unwrap();
        let at_mean = vp.mean_params(&arch).unwrap();
        for (i, x) in [-2.0, -1.0, 0.0, 0.5, 2.0].iter().enumerate() {
            let f = model::forward(&arch, &prior, &at_mean, &[*x]).unwrap();
            assert_abs_diff_eq!(m.means[i], f, epsilon = 1e-10);
            assert!(m.variances[i] < 1e-12);
            assert_abs_diff_eq!(s.moments.means[i], f, epsilon = 1e-10);
            assert!(s.moments.variances[i] < 1e-20);
        }
    }
}
