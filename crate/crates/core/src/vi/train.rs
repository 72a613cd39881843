use std::f64::consts::PI;

use thiserror::Error;

use crate::data::Dataset;
use crate::error::Error;
use crate::model::{Architecture, PriorConfig};
use crate::seed;

use super::elbo::ElboObjective;
use super::params::{init_variational, VariationalParams};

/// Full-batch momentum SGD on `−ELBO` with global-norm clipping and cosine
/// annealing with warm restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub mc_samples: usize,
    pub clip_norm: f64,
    pub restart_period: usize,
    pub lr_min: f64,
    pub seed: u64,
    pub record_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20_000,
            learning_rate: 1e-3,
            momentum: 0.9,
            mc_samples: 64,
            clip_norm: 10.0,
            restart_period: 500,
            lr_min: 0.0,
            seed: 0,
            record_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.mc_samples == 0 || self.restart_period == 0 || self.record_every == 0 {
            return bad("mc_samples, restart_period and record_every must be positive".into());
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if !(self.lr_min >= 0.0) || self.lr_min > self.learning_rate {
            return bad(format!("lr_min must lie in [0, learning_rate], got {}", self.lr_min));
        }
        Ok(())
    }

    /// Learning rate at `epoch`:
    /// `lr_min + ½(lr − lr_min)(1 + cos(π (t mod T) / T))`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let t = (epoch % self.restart_period) as f64 / self.restart_period as f64;
        self.lr_min + 0.5 * (self.learning_rate - self.lr_min) * (1.0 + (PI * t).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub elbo: f64,
    pub kl: f64,
    pub expected_nll: f64,
    pub learning_rate: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize, trace: TrainTrace },
}

const INIT_STREAM: u64 = 0x1;
const EPOCH_STREAM: u64 = 0x2;

/// Seed of the Monte Carlo draws used at `epoch` of a run seeded with `run_seed`.
pub fn epoch_seed(run_seed: u64, epoch: usize) -> u64 {
    seed::derive(seed::derive(run_seed, EPOCH_STREAM), epoch as u64)
}

/// Seed of the variational initialization of a run seeded with `run_seed`.
pub fn init_seed(run_seed: u64) -> u64 {
    seed::derive(run_seed, INIT_STREAM)
}

/// Trains from the normal–inverse-gamma initialization.
pub fn train(
    arch: &Architecture,
    prior: &PriorConfig,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(VariationalParams, TrainTrace), TrainError> {
    let init = init_variational(arch, init_seed(cfg.seed));
    train_from(init, arch, prior, dataset, cfg)
}

/// Trains from a given starting point.
pub fn train_from(
    mut vp: VariationalParams,
    arch: &Architecture,
    prior: &PriorConfig,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(VariationalParams, TrainTrace), TrainError> {
    cfg.validate()?;
    vp.check(arch)?;
    let objective = ElboObjective::new(arch, prior, dataset, cfg.mc_samples)?;
    let p = arch.num_params();
    let mut velocity = vec![0.0; 2 * p];
    let mut trace = TrainTrace::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        let (breakdown, mut grad) = objective.value_and_gradient(&vp, epoch_seed(cfg.seed, epoch))?;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let row = TraceRow {
            epoch,
            elbo: breakdown.elbo,
            kl: breakdown.kl,
            expected_nll: breakdown.expected_nll,
            learning_rate: lr,
            grad_norm,
        };
        if !breakdown.elbo.is_finite() || !grad_norm.is_finite() {
            trace.rows.push(row);
            return Err(TrainError::NonFinite { epoch, trace });
        }
        if epoch % cfg.record_every == 0 || epoch + 1 == cfg.epochs {
            trace.rows.push(row);
        }
        if grad_norm > cfg.clip_norm {
            let scale = cfg.clip_norm / grad_norm;
            grad.iter_mut().for_each(|g| *g *= scale);
        }
        for (v, g) in velocity.iter_mut().zip(&grad) {
            *v = cfg.momentum * *v + g;
        }
        let (v_mu, v_rho) = velocity.split_at(p);
        vp.mu.iter_mut().zip(v_mu).for_each(|(m, v)| *m -= lr * v);
        vp.rho.iter_mut().zip(v_rho).for_each(|(r, v)| *r -= lr * v);
    }
    Ok((vp, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;

    fn two_points() -> Dataset {
        Dataset::from_pairs(&[(-1.0, -1.0), (1.0, 1.0)]).unwrap()
    }

    #[test]
    fn schedule_restarts() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate_at(0), 1e-3);
        assert!((cfg.learning_rate_at(250) - 5e-4).abs() < 1e-15);
        assert!(cfg.learning_rate_at(499) < 1e-7);
        assert_eq!(cfg.learning_rate_at(500), 1e-3);
        assert_eq!(cfg.learning_rate_at(1250), cfg.learning_rate_at(250));
    }

    #[test]
    fn zero_epochs_returns_init() {
        let arch = Architecture::new(1, 8, Activation::Erf).unwrap();
        let cfg = TrainConfig { epochs: 0, seed: 3, ..TrainConfig::default() };
        let (vp, trace) = train(&arch, &PriorConfig::default(), &two_points(), &cfg).unwrap();
        assert_eq!(vp, init_variational(&arch, init_seed(3)));
        assert!(trace.rows.is_empty());
    }

    #[test]
    fn trace_epochs_increase_and_run_is_deterministic() {
        let arch = Architecture::new(1, 8, Activation::Tanh).unwrap();
        let cfg = TrainConfig { epochs: 55, record_every: 10, mc_samples: 4, ..TrainConfig::default() };
        let (a, ta) = train(&arch, &PriorConfig::default(), &two_points(), &cfg).unwrap();
        let (b, tb) = train(&arch, &PriorConfig::default(), &two_points(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let epochs: Vec<usize> = ta.rows.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 10, 20, 30, 40, 50, 54]);
    }

    #[test]
    fn invalid_config_rejected() {
        let arch = Architecture::new(1, 2, Activation::Erf).unwrap();
        let cfg = TrainConfig { momentum: 1.0, ..TrainConfig::default() };
        assert!(matches!(
            train(&arch, &PriorConfig::default(), &two_points(), &cfg),
            Err(TrainError::Invalid(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let arch = Architecture::new(1, 2, Activation::Relu).unwrap();
        let mut vp = VariationalParams::at_prior(&arch);
        vp.mu[0] = f64::NAN;
        let cfg = TrainConfig { epochs: 3, mc_samples: 2, ..TrainConfig::default() };
        match train_from(vp, &arch, &PriorConfig::default(), &two_points(), &cfg) {
            Err(TrainError::NonFinite { epoch, trace }) => {
                assert_eq!(epoch, 0);
                assert_eq!(trace.rows.len(), 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
