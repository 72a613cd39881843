//! Mean-field variational inference for wide single-hidden-layer Bayesian
//! neural networks, the matching infinite-width Gaussian-process baseline, and
//! the bound showing the variational posterior mean shrinks to the prior mean
//! as the width grows.
//!
//! * [`special`]: erf, the normal CDF, closed-form Gaussian expectations and
//!   the elementary inequalities used by the bound.
//! * [`model`]: architecture, prior, forward pass and prior predictive moments.
//! * [`data`]: datasets, z-scoring and upcrossings.
//! * [`bound`]: `C_X`, `C_{X,x*}`, the width bound and its verification report.
//! * [`vi`]: variational family, KL, ELBO and gradient, training, predictive.
//! * [`nngp`]: infinite-width kernels and exact GP regression.

pub mod bound;
pub mod data;
pub mod error;
pub mod model;
pub mod nngp;
pub mod quadrature;
pub mod seed;
pub mod special;
pub mod vi;

pub use error::{Error, Result};
