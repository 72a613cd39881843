//! Experiment drivers. Each returns in-memory records in canonical order; the
//! CLI writes them to disk.

use std::f64::consts::PI;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use widthlab_core::bound::{bound_check, c_x, BoundReport};
use widthlab_core::data::{uniform_grid, upcrossings, Dataset};
use widthlab_core::model::{
    activation_prior_variance, rows, sample_prior_functions, Activation, Architecture, McMoments,
};
use widthlab_core::nngp::{gp_fit, gp_predict, sample_gp_prior, Kernel, KernelKind};
use widthlab_core::seed;
use widthlab_core::vi::{
    expected_error_exact, kl_to_prior, posterior_predictive, predictive_moments_exact, train, TrainError,
    VariationalParams,
};

use crate::config::ExperimentConfig;
use crate::datasets::make_dataset;
use crate::records::{
    BoundRow, DataRow, FunctionRow, ParamQuantiles, PosteriorRow, PriorMomentRow, RunRecord, TimingRecord,
    UpcrossingBin, UpcrossingSummary,
};

const PRIOR_STREAM: u64 = 0x10;
const NNGP_STREAM: u64 = 0x11;
const POSTERIOR_STREAM: u64 = 0x12;

/// Seed of the prior function draws at `width`; width 0 stands for the NNGP.
pub fn prior_seed(seed: u64, width: usize) -> u64 {
    seed::derive(seed::derive(seed, PRIOR_STREAM), width as u64)
}

/// The standardized dataset of `cfg`, seeded by `cfg.seed`.
pub fn dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    make_dataset(&cfg.dataset, cfg.seed).with_context(|| format!("loading dataset {}", cfg.dataset.label()))
}

/// Training observations as rows; requires one input dimension.
pub fn dataset_rows(data: &Dataset) -> Result<Vec<DataRow>> {
    require_1d(data)?;
    Ok(data.x().iter().zip(data.y().iter()).map(|(&x, &y)| DataRow { x, y }).collect())
}

fn require_1d(data: &Dataset) -> Result<()> {
    if data.input_dim() != 1 {
        bail!("grid-based outputs need one input dimension, the dataset has {}", data.input_dim());
    }
    Ok(())
}

/// `n_points` evenly spaced inputs over `[min x − padding, max x + padding]`.
pub fn prediction_grid(cfg: &ExperimentConfig, data: &Dataset) -> Result<DMatrix<f64>> {
    require_1d(data)?;
    let lo = data.x().min() - cfg.grid.padding;
    let hi = data.x().max() + cfg.grid.padding;
    let g = uniform_grid(lo, hi, cfg.grid.n_points);
    Ok(DMatrix::from_column_slice(g.len(), 1, &g))
}

pub fn kernel_kind(cfg: &ExperimentConfig) -> KernelKind {
    match cfg.activation {
        Activation::Erf => KernelKind::ErfAnalytic,
        Activation::Relu => KernelKind::ReluArcCosine,
        Activation::Tanh => KernelKind::TanhMonteCarlo {
            n_samples: cfg.nngp.tanh_samples,
            seed: seed::derive(cfg.seed, NNGP_STREAM),
        },
    }
}

fn architecture(cfg: &ExperimentConfig, data: &Dataset, width: usize) -> Result<Architecture> {
    Ok(Architecture::new(data.input_dim(), width, cfg.activation)?)
}

fn train_model(cfg: &ExperimentConfig, data: &Dataset, arch: &Architecture, seed: u64) -> Result<VariationalParams> {
    let tc = widthlab_core::vi::TrainConfig { seed, ..cfg.train.clone() };
    match train(arch, &cfg.prior, data, &tc) {
        Ok((vp, _)) => Ok(vp),
        Err(TrainError::NonFinite { epoch, .. }) => {
            bail!("training diverged at epoch {epoch} (width {}, seed {seed})", arch.width)
        }
        Err(TrainError::Invalid(e)) => Err(e.into()),
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Type-7 quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, frac) = (h.floor() as usize, h - h.floor());
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// One sweep cell with its wall time.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub record: RunRecord,
    pub timing: TimingRecord,
}

/// Trains one `(width, seed)` cell and summarizes it against the prior.
pub fn run_cell(cfg: &ExperimentConfig, data: &Dataset, grid: &DMatrix<f64>, width: usize, seed: u64) -> Result<CellResult> {
    let start = Instant::now();
    let arch = architecture(cfg, data, width)?;
    let label = cfg.dataset.label();
    let activation = cfg.activation.to_string();
    let cx = c_x(data, &arch, &cfg.prior)?;
    let tc = widthlab_core::vi::TrainConfig { seed, ..cfg.train.clone() };
    let record = match train(&arch, &cfg.prior, data, &tc) {
        Ok((vp, _)) => summarize(cfg, data, grid, &arch, &vp, cx, seed)?,
        Err(TrainError::NonFinite { .. }) => RunRecord {
            dataset: label.clone(),
            activation: activation.clone(),
            width,
            seed,
            status: "diverged".into(),
            elbo: f64::NAN,
            kl: f64::NAN,
            expected_nll: f64::NAN,
            c_x: cx,
            loss: f64::NAN,
            loss_premise_holds: false,
            mean_dist: f64::NAN,
            var_dist: f64::NAN,
            median_sigma2_dev: f64::NAN,
            bound_max: f64::NAN,
            mean_abs_max: f64::NAN,
            bound_violations: 0,
        },
        Err(TrainError::Invalid(e)) => return Err(e.into()),
    };
    let timing = TimingRecord { dataset: label, activation, width, seed, wall_time_s: start.elapsed().as_secs_f64() };
    Ok(CellResult { record, timing })
}

fn summarize(
    cfg: &ExperimentConfig,
    data: &Dataset,
    grid: &DMatrix<f64>,
    arch: &Architecture,
    vp: &VariationalParams,
    cx: f64,
    seed: u64,
) -> Result<RunRecord> {
    let prior = &cfg.prior;
    let exact = predictive_moments_exact(vp, arch, prior, grid)?;
    let prior_var: Vec<f64> = rows(grid).iter().map(|x| activation_prior_variance(arch, prior, x)).collect();
    let error = expected_error_exact(vp, arch, prior, data)?;
    let kl = kl_to_prior(vp);
    let expected_nll = error + 0.5 * data.len() as f64 * (2.0 * PI * prior.sigma2_noise).ln();
    let loss = error + kl;
    let premise = loss <= cx;
    let deviations: Vec<f64> = vp.sigma2_all().iter().map(|s| (s - 1.0).abs()).collect();
    let (bound_max, mean_abs_max, bound_violations) = if arch.activation == Activation::Erf {
        let report = bound_check(vp, arch, prior, data, grid)?;
        (report.bound_max(), report.mean_abs_max(), violations(&report))
    } else {
        (f64::NAN, exact.means.iter().fold(0.0, |a: f64, m| a.max(m.abs())), 0)
    };
    Ok(RunRecord {
        dataset: cfg.dataset.label(),
        activation: arch.activation.to_string(),
        width: arch.width,
        seed,
        status: "ok".into(),
        elbo: -(expected_nll + kl),
        kl,
        expected_nll,
        c_x: cx,
        loss,
        loss_premise_holds: premise,
        mean_dist: euclidean(&exact.means, &vec![0.0; exact.means.len()]),
        var_dist: euclidean(&exact.variances, &prior_var),
        median_sigma2_dev: median(&deviations),
        bound_max,
        mean_abs_max,
        bound_violations,
    })
}

fn violations(report: &BoundReport) -> usize {
    if !report.premise_holds {
        return 0;
    }
    report.mean_abs.iter().zip(&report.bound).filter(|(m, b)| m > b).count()
}

/// Convergence sweep output: deterministic records and segregated timings.
#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub runs: Vec<RunRecord>,
    pub timings: Vec<TimingRecord>,
}

/// Trains every `(width, seed)` cell on a pool of `jobs` workers (all cores
/// when `None`) and returns rows sorted by `(width, seed)`.
pub fn run_convergence(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Convergence> {
    let data = dataset(cfg)?;
    let grid = prediction_grid(cfg, &data)?;
    let cells: Vec<(usize, u64)> =
        cfg.widths.iter().flat_map(|&w| cfg.seeds.iter().map(move |&s| (w, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
    let mut results: Vec<CellResult> = pool.install(|| {
        cells.par_iter().map(|&(w, s)| run_cell(cfg, &data, &grid, w, s)).collect::<Result<_>>()
    })?;
    results.sort_by_key(|r| (r.record.width, r.record.seed));
    let (runs, timings) = results.into_iter().map(|r| (r.record, r.timing)).unzip();
    Ok(Convergence { runs, timings })
}

/// Prior draws of the width-`width` network on `grid`, shared by
/// `prior-check` and `posterior`.
pub fn bnn_prior_samples(cfg: &ExperimentConfig, data: &Dataset, grid: &DMatrix<f64>, width: usize) -> Result<Vec<Vec<f64>>> {
    let arch = architecture(cfg, data, width)?;
    Ok(sample_prior_functions(&arch, &cfg.prior, grid, cfg.prior_check.n_functions, prior_seed(cfg.seed, width))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorCheck {
    pub moments: Vec<PriorMomentRow>,
    pub bins: Vec<UpcrossingBin>,
    pub summary: Vec<UpcrossingSummary>,
}

fn upcrossing_stats(
    model: &str,
    width: usize,
    xs: &[f64],
    samples: &[Vec<f64>],
    n_bins: usize,
) -> Result<(Vec<UpcrossingBin>, UpcrossingSummary)> {
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let step = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    let mut per_fn = Vec::with_capacity(samples.len());
    for s in samples {
        let u = upcrossings(xs, s)?;
        for x in &u {
            let b = (((x - lo) / step).floor() as usize).min(n_bins - 1);
            counts[b] += 1;
        }
        per_fn.push(u.len() as f64);
    }
    let n = per_fn.len() as f64;
    let mean = per_fn.iter().sum::<f64>() / n;
    let sd = (per_fn.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(bin, count)| UpcrossingBin {
            model: model.into(),
            width,
            bin,
            lo: lo + step * bin as f64,
            hi: if bin + 1 == n_bins { hi } else { lo + step * (bin + 1) as f64 },
            count,
        })
        .collect();
    let summary = UpcrossingSummary { model: model.into(), width, n_functions: samples.len(), mean_count: mean, sd_count: sd };
    Ok((bins, summary))
}

/// Prior predictive moments and upcrossings at every configured width, plus
/// the NNGP (rows with model `nngp` and width 0).
pub fn run_prior_check(cfg: &ExperimentConfig) -> Result<PriorCheck> {
    let data = dataset(cfg)?;
    let grid = prediction_grid(cfg, &data)?;
    let xs: Vec<f64> = grid.iter().copied().collect();
    let mut out = PriorCheck { moments: Vec::new(), bins: Vec::new(), summary: Vec::new() };
    for &width in &cfg.widths {
        let samples = bnn_prior_samples(cfg, &data, &grid, width)?;
        let m = McMoments::from_samples(&samples);
        for (i, &x) in xs.iter().enumerate() {
            out.moments.push(PriorMomentRow {
                model: "bnn".into(),
                width,
                x,
                mean: m.means[i],
                mean_se: m.mean_se[i],
                variance: m.variances[i],
                variance_se: m.var_se[i],
            });
        }
        let (bins, summary) = upcrossing_stats("bnn", width, &xs, &samples, cfg.prior_check.n_bins)?;
        out.bins.extend(bins);
        out.summary.push(summary);
    }
    let kind = kernel_kind(cfg);
    let kernel = Kernel::new(kind, &cfg.prior, 1)?;
    for &x in &xs {
        let variance = kernel.eval(&[x], &[x])?;
        out.moments.push(PriorMomentRow { model: "nngp".into(), width: 0, x, mean: 0.0, mean_se: 0.0, variance, variance_se: 0.0 });
    }
    let samples = sample_gp_prior(kind, &cfg.prior, &grid, cfg.prior_check.n_functions, prior_seed(cfg.seed, 0))?;
    let (bins, summary) = upcrossing_stats("nngp", 0, &xs, &samples, cfg.prior_check.n_bins)?;
    out.bins.extend(bins);
    out.summary.push(summary);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorOutput {
    pub rows: Vec<PosteriorRow>,
    /// Sampled posterior functions, empty unless requested.
    pub functions: Vec<FunctionRow>,
}

/// Trains the width-`cfg.width` network with seed `cfg.seed` and tabulates
/// its predictive moments next to the prior and the NNGP posterior.
pub fn run_posterior(cfg: &ExperimentConfig) -> Result<PosteriorOutput> {
    let data = dataset(cfg)?;
    let grid = prediction_grid(cfg, &data)?;
    let arch = architecture(cfg, &data, cfg.width)?;
    let vp = train_model(cfg, &data, &arch, cfg.seed)?;
    let exact = predictive_moments_exact(&vp, &arch, &cfg.prior, &grid)?;
    let n_fn = cfg.predictive.n_functions;
    let mc = posterior_predictive(
        &vp,
        &arch,
        &cfg.prior,
        &grid,
        cfg.predictive.n_samples.max(n_fn),
        seed::derive(cfg.seed, POSTERIOR_STREAM),
        n_fn > 0,
    )?;
    let prior_m = McMoments::from_samples(&bnn_prior_samples(cfg, &data, &grid, cfg.width)?);
    let post = gp_fit(data.x(), data.y(), kernel_kind(cfg), &cfg.prior)?;
    let (nngp_mean, nngp_var) = gp_predict(&post, &grid)?;
    let xs: Vec<f64> = grid.iter().copied().collect();
    let rows = (0..xs.len())
        .map(|i| PosteriorRow {
            x: xs[i],
            posterior_mean: exact.means[i],
            posterior_var: exact.variances[i],
            posterior_mean_mc: mc.moments.means[i],
            posterior_var_mc: mc.moments.variances[i],
            prior_mean: prior_m.means[i],
            prior_mean_se: prior_m.mean_se[i],
            prior_var: prior_m.variances[i],
            prior_var_se: prior_m.var_se[i],
            nngp_mean: nngp_mean[i],
            nngp_var: nngp_var[i],
        })
        .collect();
    let functions = mc
        .samples
        .unwrap_or_default()
        .iter()
        .take(n_fn)
        .enumerate()
        .flat_map(|(function, s)| xs.iter().zip(s).map(move |(&x, &f)| FunctionRow { function, x, f }))
        .collect();
    Ok(PosteriorOutput { rows, functions })
}

/// Quantiles of `μ` and `σ²` within each parameter group.
pub fn param_quantiles(vp: &VariationalParams, arch: &Architecture) -> Vec<ParamQuantiles> {
    let groups = [
        ("w1", 0..arch.b1_offset()),
        ("b1", arch.b1_offset()..arch.w2_offset()),
        ("w2", arch.w2_offset()..arch.num_params()),
    ];
    let mut out = Vec::with_capacity(6);
    for (group, range) in groups {
        let means: Vec<f64> = vp.mu[range.clone()].to_vec();
        let vars: Vec<f64> = range.map(|i| vp.sigma2(i)).collect();
        for (stat, values, prior_value) in [("mean", means, 0.0), ("variance", vars, 1.0)] {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let devs: Vec<f64> = values.iter().map(|v| (v - prior_value).abs()).collect();
            out.push(ParamQuantiles {
                group: group.into(),
                stat: stat.into(),
                count: sorted.len(),
                q01: quantile(&sorted, 0.01),
                q25: quantile(&sorted, 0.25),
                q50: quantile(&sorted, 0.50),
                q75: quantile(&sorted, 0.75),
                q99: quantile(&sorted, 0.99),
                median_abs_dev: median(&devs),
            });
        }
    }
    out
}

pub fn run_param_density(cfg: &ExperimentConfig) -> Result<Vec<ParamQuantiles>> {
    let data = dataset(cfg)?;
    let arch = architecture(cfg, &data, cfg.width)?;
    let vp = train_model(cfg, &data, &arch, cfg.seed)?;
    Ok(param_quantiles(&vp, &arch))
}

/// Bound quantities on the grid for one trained erf network.
pub fn run_bound_check(cfg: &ExperimentConfig) -> Result<Vec<BoundRow>> {
    if cfg.activation != Activation::Erf {
        bail!("bound-check needs the erf activation, got {}", cfg.activation);
    }
    let data = dataset(cfg)?;
    let grid = prediction_grid(cfg, &data)?;
    let arch = architecture(cfg, &data, cfg.width)?;
    let vp = train_model(cfg, &data, &arch, cfg.seed)?;
    let r = bound_check(&vp, &arch, &cfg.prior, &data, &grid)?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, &x)| BoundRow {
            x,
            mean_abs: r.mean_abs[i],
            bound: r.bound[i],
            c_x_xstar: r.c_x_xstar[i],
            c_x: r.c_x,
            loss: r.loss_at_params,
            premise_holds: r.premise_holds,
            holds: !r.premise_holds || r.mean_abs[i] <= r.bound[i],
        })
        .collect())
}
