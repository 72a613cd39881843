//! Width-independent loss at the prior and the resulting bound on the
//! variational posterior mean for erf networks.
//!
//! Chain: a variational state whose loss (without the likelihood constant) is
//! at most `C_X` has KL at most `C_X`, which caps the summed squared means of
//! every parameter group. Those caps, pushed through the closed-form erf
//! expectation and three elementary inequalities, bound `|E_q f(x*)|` by
//! `sqrt(2σ̃² C_X) · sqrt(1 − exp(−(4/π) C_{X,x*} / K))`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, Activation, Architecture, PriorConfig};
use crate::vi::{self, VariationalParams};

/// `C_X = (1 / (2σ²_noise)) Σ_n (y_n² + V(x_n))`, the expected squared-error
/// term when `q` equals the prior. Independent of the width.
pub fn c_x(dataset: &Dataset, arch: &Architecture, prior: &PriorConfig) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("c_x needs at least one observation"));
    }
    if dataset.input_dim() != arch.input_dim {
        return Err(Error::DimensionMismatch { expected: arch.input_dim, got: dataset.input_dim() });
    }
    let sum: f64 = model::rows(dataset.x())
        .iter()
        .zip(dataset.y().iter())
        .map(|(x, y)| y * y + model::activation_prior_variance(arch, prior, x))
        .sum();
    Ok(sum / (2.0 * prior.sigma2_noise))
}

/// `C_{X,x*} = 2 (D + 1) C_X (σ²_{w1} ‖x*‖² + σ²_{b1})`, the cap on
/// `Σ_k μ̂[z_k]²` at `x*`.
pub fn c_x_xstar(c_x_value: f64, x_star: &[f64], prior: &PriorConfig) -> f64 {
    let d = x_star.len() as f64;
    2.0 * (d + 1.0) * c_x_value * prior.preactivation_variance(x_star)
}

/// `sqrt(2σ̃²_{w2} C_X) · sqrt(1 − exp(−(4/π) C_{X,x*} / K))`.
pub fn theorem_bound(width: usize, c_x_value: f64, c_x_xstar_value: f64, prior: &PriorConfig) -> f64 {
    let k = width as f64;
    let saturation = -(-(4.0 / PI) * c_x_xstar_value / k).exp_m1();
    (2.0 * prior.sigma2_w2_tilde * c_x_value).sqrt() * saturation.sqrt()
}

/// One KL-budget inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BudgetCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Summed squared means per parameter group, on the prior scale of each group:
/// `½ Σ_k (σ μ_k)² ≤ σ² C_X`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlBudget {
    /// One check per input dimension.
    pub w1: Vec<BudgetCheck>,
    pub b1: BudgetCheck,
    pub w2: BudgetCheck,
}

impl KlBudget {
    pub fn all_hold(&self) -> bool {
        self.w1.iter().all(BudgetCheck::holds) && self.b1.holds() && self.w2.holds()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub c_x: f64,
    /// `C_{X,x*}` per test input.
    pub c_x_xstar: Vec<f64>,
    /// `V(x_n)` per training input.
    pub v_of_x: Vec<f64>,
    /// Bound per test input.
    pub bound: Vec<f64>,
    /// `Error + KL` at the variational parameters (likelihood constant removed).
    pub loss_at_params: f64,
    /// `|E_q f(x*)|` per test input.
    pub mean_abs: Vec<f64>,
    pub budget: KlBudget,
    /// `loss_at_params ≤ C_X`.
    pub premise_holds: bool,
    /// The implication `premise ⇒ mean_abs ≤ bound` everywhere.
    pub holds: bool,
}

impl BoundReport {
    pub fn bound_max(&self) -> f64 {
        self.bound.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_abs_max(&self) -> f64 {
        self.mean_abs.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluates every quantity of the bound for a trained erf network.
///
/// The loss uses the exact predictive moments rather than a Monte Carlo
/// estimate, so the implication is checked without sampling slack.
pub fn bound_check(
    vp: &VariationalParams,
    arch: &Architecture,
    prior: &PriorConfig,
    dataset: &Dataset,
    xs: &DMatrix<f64>,
) -> Result<BoundReport> {
    if arch.activation != Activation::Erf {
        return Err(Error::WrongActivation(arch.activation.to_string()));
    }
    vp.check(arch)?;
    let cx = c_x(dataset, arch, prior)?;
    let v_of_x = model::rows(dataset.x())
        .iter()
        .map(|x| model::activation_prior_variance(arch, prior, x))
        .collect();
    let loss_at_params = vi::expected_error_exact(vp, arch, prior, dataset)? + vi::kl_to_prior(vp);
    let means = vi::posterior_mean_exact_erf(vp, arch, prior, xs)?;
    let mut c_x_xstar_v = Vec::with_capacity(xs.nrows());
    let mut bound = Vec::with_capacity(xs.nrows());
    for x in model::rows(xs) {
        let cxx = c_x_xstar(cx, &x, prior);
        c_x_xstar_v.push(cxx);
        bound.push(theorem_bound(arch.width, cx, cxx, prior));
    }
    let mean_abs: Vec<f64> = means.iter().map(|m| m.abs()).collect();

    let (k, d) = (arch.width, arch.input_dim);
    let half_sq = |idx: &mut dyn Iterator<Item = usize>, var: f64| -> BudgetCheck {
        let s: f64 = idx.map(|i| vp.mu[i] * vp.mu[i]).sum();
        BudgetCheck { lhs: 0.5 * var * s, rhs: var * cx }
    };
    let budget = KlBudget {
        w1: (0..d).map(|j| half_sq(&mut (0..k).map(|u| u * d + j), prior.sigma2_w1)).collect(),
        b1: half_sq(&mut (arch.b1_offset()..arch.w2_offset()), prior.sigma2_b1),
        w2: half_sq(&mut (arch.w2_offset()..arch.num_params()), prior.sigma2_w2_tilde),
    };

    let premise_holds = loss_at_params <= cx;
    let holds = !premise_holds || mean_abs.iter().zip(&bound).all(|(m, b)| m <= b);
    Ok(BoundReport {
        c_x: cx,
        c_x_xstar: c_x_xstar_v,
        v_of_x,
        bound,
        loss_at_params,
        mean_abs,
        budget,
        premise_holds,
        holds,
    })
}
