//! Acceptance suite: one PASS/FAIL line per criterion on stdout. The process
//! exits non-zero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use widthlab::config::ExperimentConfig;
use widthlab::datasets::{make_dataset, DatasetSpec};
use widthlab::experiments::run_convergence;
use widthlab::records::RunRecord;
use widthlab_core::bound::c_x;
use widthlab_core::data::{uniform_grid, Dataset};
use widthlab_core::model::{prior_predictive_moments, Activation, Architecture, PriorConfig};
use widthlab_core::nngp::{gp_fit, gp_predict, Kernel, KernelKind};
use widthlab_core::seed;
use widthlab_core::special::{
    cauchy_group_bound, erf, expected_erf, jensen_exp_bound, polya_upper_bound, GaussianScalar,
};
use widthlab_core::vi::{
    elbo_estimate, elbo_gradient, init_variational, kl_to_prior, ElboObjective, VariationalParams,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Mean and standard error of `g(z)`, `z ~ N(mean, var)`.
fn mc_mean(mean: f64, var: f64, n: usize, seed: u64, g: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut rng = seed::rng(seed);
    let sd = var.sqrt();
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let e: f64 = StandardNormal.sample(&mut rng);
        let v = g(mean + sd * e);
        s += v;
        s2 += v * v;
    }
    let nf = n as f64;
    let m = s / nf;
    (m, ((s2 / nf - m * m) / (nf - 1.0)).max(0.0).sqrt())
}

fn c1_expected_erf() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(101);
    let mut inside = 0;
    for case in 0..100 {
        let mu: f64 = rng.random_range(-5.0..=5.0);
        let var: f64 = rng.random_range(0.0..=25.0);
        let exact = expected_erf(GaussianScalar::new(mu, var).unwrap());
        let (m, se) = mc_mean(mu, var, 1_000_000, seed::derive(102, case), erf);
        if (exact - m).abs() <= 3.0 * se {
            inside += 1;
        }
    }
    let t = start.elapsed().as_secs_f64();
    outcome(inside >= 99 && t < 60.0, format!("{inside}/100 within 3 SE, {t:.1} s"))
}

fn c2_inequalities() -> Outcome {
    let mut rng = seed::rng(202);
    let mut violations = [0usize; 3];
    for _ in 0..10_000 {
        let z: f64 = rng.random_range(-8.0..8.0);
        if erf(z).powi(2) > polya_upper_bound(z) {
            violations[0] += 1;
        }
        let k = rng.random_range(1..=200);
        let scale: f64 = rng.random_range(0.01..5.0);
        let mus: Vec<f64> = (0..k).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let c1: f64 = rng.random_range(1e-3..10.0);
        let (lhs, rhs) = jensen_exp_bound(&mus, c1).unwrap();
        if lhs < rhs {
            violations[1] += 1;
        }
        let (r, c) = (rng.random_range(1..=12), rng.random_range(1..=6));
        let a = DMatrix::from_fn(r, c, |_, _| rng.random_range(-10.0..10.0));
        let (lhs, rhs) = cauchy_group_bound(&a).unwrap();
        if lhs > rhs {
            violations[2] += 1;
        }
    }
    outcome(violations == [0, 0, 0], format!("violations polya/jensen/cauchy = {violations:?} over 10⁴ trials each"))
}

fn c3_kl() -> Outcome {
    let mut rng = seed::rng(303);
    let mut outside = 0;
    for state in 0..50 {
        let p = rng.random_range(1..=16);
        let mu: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rho: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.0)).collect();
        let vp = VariationalParams::new(mu.clone(), rho.clone()).unwrap();
        let mut draws = seed::rng(seed::derive(304, state));
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let mut lr = 0.0;
            for i in 0..p {
                let e: f64 = StandardNormal.sample(&mut draws);
                let sigma = rho[i].exp();
                let theta = mu[i] + sigma * e;
                lr += -sigma.ln() - 0.5 * e * e + 0.5 * theta * theta;
            }
            s += lr;
            s2 += lr * lr;
        }
        let nf = n as f64;
        let m = s / nf;
        let se = ((s2 / nf - m * m) / (nf - 1.0)).sqrt();
        if (kl_to_prior(&vp) - m).abs() > 3.0 * se {
            outside += 1;
        }
    }
    outcome(outside == 0, format!("{outside}/50 states outside 3 SE"))
}

fn c4_width_invariance() -> Outcome {
    let start = Instant::now();
    let prior = PriorConfig::default();
    let pts = uniform_grid(-2.0, 2.0, 10);
    let xs = DMatrix::from_column_slice(10, 1, &pts);
    let kernel = Kernel::new(KernelKind::ErfAnalytic, &prior, 1).unwrap();
    let widths = [16, 256, 4096];
    let moments: Vec<_> = widths
        .iter()
        .map(|&k| {
            let arch = Architecture::new(1, k, Activation::Erf).unwrap();
            prior_predictive_moments(&arch, &prior, &xs, 4000, seed::derive(404, k as u64)).unwrap()
        })
        .collect();
    let (mut pair_fail, mut kernel_fail) = (0, 0);
    for i in 0..10 {
        let diag = kernel.eval(&[pts[i]], &[pts[i]]).unwrap();
        for a in 0..3 {
            if (moments[a].variances[i] - diag).abs() > 3.0 * moments[a].var_se[i] {
                kernel_fail += 1;
            }
            for b in a + 1..3 {
                let joint = (moments[a].var_se[i].powi(2) + moments[b].var_se[i].powi(2)).sqrt();
                if (moments[a].variances[i] - moments[b].variances[i]).abs() > 3.0 * joint {
                    pair_fail += 1;
                }
            }
        }
    }
    let t = start.elapsed().as_secs_f64();
    outcome(
        pair_fail == 0 && kernel_fail == 0 && t < 120.0,
        format!("pairwise misses {pair_fail}/30, kernel misses {kernel_fail}/30, {t:.1} s"),
    )
}

fn two_points() -> Dataset {
    make_dataset(&DatasetSpec::TwoPoints, 0).unwrap()
}

fn sine() -> Dataset {
    make_dataset(&DatasetSpec::Sine { n_points: 20, noise_sd: 0.1 }, 0).unwrap()
}

fn c5_gradient() -> Outcome {
    let prior = PriorConfig::default();
    let n_mc = 16;
    let mut worst = 0.0f64;
    for act in [Activation::Erf, Activation::Tanh, Activation::Relu] {
        for k in [2, 8] {
            let arch = Architecture::new(1, k, act).unwrap();
            for d in [two_points(), sine()] {
                for s in 0..2 {
                    let mut vp = init_variational(&arch, s);
                    vp.rho.iter_mut().enumerate().for_each(|(i, r)| *r = -0.4 + 0.07 * (i % 5) as f64);
                    let loss = |v: &VariationalParams| -elbo_estimate(v, &d, &arch, &prior, n_mc, s).unwrap().elbo;
                    let g = elbo_gradient(&vp, &d, &arch, &prior, n_mc, s).unwrap();
                    let p = vp.len();
                    for i in 0..2 * p {
                        let (mut plus, mut minus) = (vp.clone(), vp.clone());
                        let v = if i < p { vp.mu[i] } else { vp.rho[i - p] };
                        let h = 1e-4 * v.abs().max(1.0);
                        if i < p {
                            plus.mu[i] += h;
                            minus.mu[i] -= h;
                        } else {
                            plus.rho[i - p] += h;
                            minus.rho[i - p] -= h;
                        }
                        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                        worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-3));
                    }
                }
            }
        }
    }
    outcome(worst <= 1e-4, format!("max relative error {worst:.2e}"))
}

fn c6_error_at_prior() -> Outcome {
    let prior = PriorConfig::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, d) in [("two_points", two_points()), ("sine", sine())] {
        for k in [125, 2000] {
            let arch = Architecture::new(1, k, Activation::Erf).unwrap();
            let errs = ElboObjective::new(&arch, &prior, &d, 10_000)
                .unwrap()
                .error_samples(&VariationalParams::at_prior(&arch), seed::derive(606, k as u64))
                .unwrap();
            let n = errs.len() as f64;
            let m = errs.iter().sum::<f64>() / n;
            let se = (errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            let cx = c_x(&d, &arch, &prior).unwrap();
            let z = (m - cx) / se;
            pass &= z.abs() <= 3.0;
            lines.push(format!("{name} K={k}: z={z:+.2}"));
        }
    }
    outcome(pass, lines.join(", "))
}

fn sweep_config(activation: Activation) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { activation, widths: vec![125, 1000, 8000], seeds: (0..5).collect(), ..Default::default() };
    cfg.train.epochs = 5000;
    cfg
}

fn medians_by_width(rows: &[RunRecord], widths: &[usize], f: impl Fn(&RunRecord) -> f64) -> Vec<f64> {
    widths
        .iter()
        .map(|&w| median(&rows.iter().filter(|r| r.width == w && r.status == "ok").map(&f).collect::<Vec<_>>()))
        .collect()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" > ")
}

fn c7_bound(rows: &[RunRecord]) -> Outcome {
    let premise: Vec<&RunRecord> = rows.iter().filter(|r| r.status == "ok" && r.loss_premise_holds).collect();
    let bad = premise.iter().filter(|r| r.bound_violations > 0 || r.mean_abs_max > r.bound_max).count();
    let diverged = rows.iter().filter(|r| r.status != "ok").count();
    outcome(
        bad == 0 && !premise.is_empty(),
        format!("{} of {} runs satisfy the premise, {bad} with violations, {diverged} diverged", premise.len(), rows.len()),
    )
}

fn c8_collapse(rows: &[RunRecord], secs: f64) -> Outcome {
    let m = medians_by_width(rows, &[125, 1000, 8000], |r| r.mean_dist);
    let ratio = m[0] / m[2];
    outcome(
        strictly_decreasing(&m) && ratio >= 3.0 && secs <= 1800.0,
        format!("median mean_dist {}, ratio {ratio:.2} (need ≥ 3), sweep {secs:.0} s", fmt_list(&m)),
    )
}

fn c9_variance(rows: &[RunRecord]) -> Outcome {
    let v = medians_by_width(rows, &[125, 8000], |r| r.var_dist);
    let s = medians_by_width(rows, &[125, 8000], |r| r.median_sigma2_dev);
    outcome(
        v[1] < v[0] && s[1] < s[0],
        format!("median var_dist {:.4} -> {:.4}, median |σ²-1| {:.4} -> {:.4}", v[0], v[1], s[0], s[1]),
    )
}

fn c10_activations(sweeps: &[(Activation, Vec<RunRecord>)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (act, rows) in sweeps {
        let m = medians_by_width(rows, &[125, 1000, 8000], |r| r.mean_dist);
        pass &= strictly_decreasing(&m);
        parts.push(format!("{act}: {}", fmt_list(&m)));
    }
    outcome(pass, parts.join("; "))
}

fn c11_nngp() -> Outcome {
    let mut rng = seed::rng(1111);
    let mut worst = 0.0f64;
    for instance in 0..20 {
        let prior = PriorConfig::new(
            rng.random_range(0.5..3.0),
            rng.random_range(0.5..3.0),
            rng.random_range(0.5..3.0),
            rng.random_range(0.01..0.5),
        )
        .unwrap();
        let kind = if instance % 2 == 0 { KernelKind::ErfAnalytic } else { KernelKind::ReluArcCosine };
        let d = 1 + instance % 3;
        let x = DMatrix::from_fn(20, d, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(20, |_, _| rng.random_range(-1.5..1.5));
        let xs = DMatrix::from_fn(15, d, |_, _| rng.random_range(-4.0..4.0));
        let (mean, var) = gp_predict(&gp_fit(&x, &y, kind, &prior).unwrap(), &xs).unwrap();
        let kernel = Kernel::new(kind, &prior, d).unwrap();
        let kx = kernel.gram(&x).unwrap() + DMatrix::identity(20, 20) * prior.sigma2_noise;
        let cross = kernel.matrix(&x, &xs).unwrap();
        let lu = kx.lu();
        let alpha = lu.solve(&y).unwrap();
        let sol = lu.solve(&cross).unwrap();
        for j in 0..15 {
            let r: Vec<f64> = xs.row(j).iter().copied().collect();
            let om = cross.column(j).dot(&alpha);
            let ov = (kernel.eval(&r, &r).unwrap() - cross.column(j).dot(&sol.column(j))).max(0.0);
            worst = worst.max((mean[j] - om).abs()).max((var[j] - ov).abs());
        }
    }
    let d = two_points();
    let (m, _) = gp_predict(&gp_fit(d.x(), d.y(), KernelKind::ErfAnalytic, &PriorConfig::default()).unwrap(), d.x()).unwrap();
    let fit = (m[0] - d.y()[0]).abs().max((m[1] - d.y()[1]).abs());
    outcome(worst <= 1e-8 && fit <= 0.05, format!("max oracle gap {worst:.1e}, two-points max |mean - y| {fit:.4}"))
}

fn c12_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("widthlab-acceptance-{}", std::process::id()));
    let cfg = dir.join("c.ini");
    fs::create_dir_all(&dir).unwrap();
    fs::write(
        &cfg,
        "[dataset]\nname = sine\n[experiment]\nwidths = 16, 64\nseeds = 0, 1\nwidth = 64\nseed = 2\n\
         [train]\nepochs = 100\n[predictive]\nn_samples = 200\nn_functions = 3\n[prior_check]\nn_functions = 100\n",
    )
    .unwrap();
    let commands = ["dataset", "converge", "posterior", "prior-check", "param-density", "bound-check"];
    for tag in ["a", "b"] {
        for c in commands {
            let status = Command::new(env!("CARGO_BIN_EXE_widthlab"))
                .env_remove("WIDTHLAB_SEED")
                .args([c, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(dir.join(tag))
                .status()
                .unwrap();
            assert!(status.success(), "{c} failed");
        }
    }
    let list = |p: &Path| -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = fs::read_dir(p)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|f| f.extension().is_some_and(|e| e == "csv") && !f.ends_with("timings.csv"))
            .collect();
        v.sort();
        v
    };
    let (a, b) = (list(&dir.join("a")), list(&dir.join("b")));
    let same = a.len() == b.len()
        && a.iter().zip(&b).all(|(x, y)| x.file_name() == y.file_name() && fs::read(x).unwrap() == fs::read(y).unwrap());
    let n = a.len();
    fs::remove_dir_all(&dir).ok();
    outcome(same && n == 9, format!("{n} CSVs compared across two runs of {} commands", commands.len()))
}

fn main() {
    let mut failed = 0;
    let mut check = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        println!("criterion {id:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    check(1, "expected erf closed form", &mut c1_expected_erf);
    check(2, "inequality property suites", &mut c2_inequalities);
    check(3, "KL closed form", &mut c3_kl);
    check(4, "prior width invariance", &mut c4_width_invariance);
    check(5, "gradient vs finite differences", &mut c5_gradient);
    check(6, "error at prior equals C_X", &mut c6_error_at_prior);
    check(11, "NNGP exactness", &mut c11_nngp);
    check(12, "CLI determinism", &mut c12_determinism);

    let start = Instant::now();
    let erf_rows = run_convergence(&sweep_config(Activation::Erf), None).map(|c| c.runs);
    let secs = start.elapsed().as_secs_f64();
    match &erf_rows {
        Ok(rows) => {
            check(7, "bound implication", &mut || c7_bound(rows));
            check(8, "width collapse", &mut || c8_collapse(rows, secs));
            check(9, "variance returns to prior", &mut || c9_variance(rows));
        }
        Err(e) => {
            for (id, name) in [(7, "bound implication"), (8, "width collapse"), (9, "variance returns to prior")] {
                check(id, name, &mut || outcome(false, format!("sweep failed: {e:#}")));
            }
        }
    }
    let mut sweeps = Vec::new();
    let mut sweep_err = None;
    for act in [Activation::Tanh, Activation::Relu] {
        match run_convergence(&sweep_config(act), None) {
            Ok(c) => sweeps.push((act, c.runs)),
            Err(e) => sweep_err = Some(format!("{act} sweep failed: {e:#}")),
        }
    }
    check(10, "activation robustness", &mut || match &sweep_err {
        Some(e) => outcome(false, e.clone()),
        None => c10_activations(&sweeps),
    });

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
