//! Mean-field Gaussian variational inference for the single-layer network.

mod elbo;
mod params;
mod predictive;
mod train;

pub use elbo::{elbo_estimate, elbo_gradient, ElboBreakdown, ElboObjective};
pub use params::{init_variational, kl_to_prior, VariationalParams};
pub use predictive::{
    expected_error_exact, posterior_mean_exact_erf, posterior_predictive, predictive_moments_exact,
    ExactMoments, PosteriorSamples,
};
pub use train::{
    epoch_seed, init_seed, train, train_from, TraceRow, TrainConfig, TrainError, TrainTrace,
};
