//! CSV schemas. Every file has a fixed header, `\n` line endings and floats
//! written with 17 significant digits so that reading a file back reproduces
//! the in-memory values bit for bit.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Round-trip float formatting.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().with_context(|| format!("`{s}` is not a number"))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => bail!("`{other}` is not a boolean"),
    }
}

/// A CSV row type with a fixed header.
pub trait Record: Sized {
    const HEADER: &'static [&'static str];
    fn to_fields(&self) -> Vec<String>;
    fn from_fields(fields: &[&str]) -> Result<Self>;
}

pub fn write_csv<R: Record>(path: &Path, rows: &[R]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(R::HEADER)?;
    for row in rows {
        w.write_record(row.to_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Record>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.clone();
    if header.iter().ne(R::HEADER.iter().copied()) {
        bail!(
            "{}: header `{}` does not match expected `{}`",
            path.display(),
            header.iter().collect::<Vec<_>>().join(","),
            R::HEADER.join(",")
        );
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let fields: Vec<&str> = rec.iter().collect();
            R::from_fields(&fields).with_context(|| format!("{}, line {line}", path.display()))
        })
        .collect()
}

/// Writes plain text with `\n` line endings.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

macro_rules! field {
    (f64, $s:expr) => {
        parse_f64($s)?
    };
    (bool, $s:expr) => {
        parse_bool($s)?
    };
    (String, $s:expr) => {
        $s.to_string()
    };
    ($t:ty, $s:expr) => {
        $s.trim().parse::<$t>().with_context(|| format!("`{}` is not a valid integer", $s))?
    };
}

macro_rules! to_field {
    (f64, $v:expr) => {
        fmt_f64($v)
    };
    ($t:tt, $v:expr) => {
        $v.to_string()
    };
}

/// Declares a record struct whose CSV columns are its fields, in order.
macro_rules! record {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:tt),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            $($(#[$fmeta])* pub $field: $ty),+
        }

        impl Record for $name {
            const HEADER: &'static [&'static str] = &[$(stringify!($field)),+];

            fn to_fields(&self) -> Vec<String> {
                vec![$(to_field!($ty, self.$field)),+]
            }

            fn from_fields(fields: &[&str]) -> Result<Self> {
                if fields.len() != Self::HEADER.len() {
                    bail!("expected {} fields, found {}", Self::HEADER.len(), fields.len());
                }
                let mut it = fields.iter();
                Ok(Self { $($field: field!($ty, it.next().unwrap())),+ })
            }
        }
    };
}

record! {
    /// Observations as used for training (standardized).
    DataRow { x: f64, y: f64 }
}

record! {
    /// One trained (width, seed) cell of a convergence sweep.
    RunRecord {
        dataset: String,
        activation: String,
        width: usize,
        seed: u64,
        /// `ok` or `diverged`.
        status: String,
        elbo: f64,
        kl: f64,
        expected_nll: f64,
        c_x: f64,
        /// `Error + KL` with the likelihood constant removed.
        loss: f64,
        loss_premise_holds: bool,
        /// Euclidean distance over the grid between posterior and prior predictive means.
        mean_dist: f64,
        /// Euclidean distance over the grid between posterior and prior predictive variances.
        var_dist: f64,
        /// Median over all parameters of `|σ² − 1|`.
        median_sigma2_dev: f64,
        bound_max: f64,
        mean_abs_max: f64,
        /// Grid points where the premise holds and `|E_q f| > bound`.
        bound_violations: usize,
    }
}

record! {
    /// Wall-clock time of a sweep cell, kept apart from the deterministic outputs.
    TimingRecord { dataset: String, activation: String, width: usize, seed: u64, wall_time_s: f64 }
}

record! {
    /// Prior predictive moments at one grid point. `model` is `bnn` or
    /// `nngp` (width 0, exact values, zero standard errors).
    PriorMomentRow {
        model: String,
        width: usize,
        x: f64,
        mean: f64,
        mean_se: f64,
        variance: f64,
        variance_se: f64,
    }
}

record! {
    /// Histogram bin of upcrossing locations.
    UpcrossingBin { model: String, width: usize, bin: usize, lo: f64, hi: f64, count: usize }
}

record! {
    /// Upcrossings per sampled function.
    UpcrossingSummary { model: String, width: usize, n_functions: usize, mean_count: f64, sd_count: f64 }
}

record! {
    /// Predictive moments at one grid point for a trained model.
    PosteriorRow {
        x: f64,
        posterior_mean: f64,
        posterior_var: f64,
        posterior_mean_mc: f64,
        posterior_var_mc: f64,
        prior_mean: f64,
        prior_mean_se: f64,
        prior_var: f64,
        prior_var_se: f64,
        nngp_mean: f64,
        nngp_var: f64,
    }
}

record! {
    /// One point of one sampled posterior function.
    FunctionRow { function: usize, x: f64, f: f64 }
}

record! {
    /// Quantiles of a trained variational parameter group.
    ParamQuantiles {
        group: String,
        /// `mean` (μ) or `variance` (σ²).
        stat: String,
        count: usize,
        q01: f64,
        q25: f64,
        q50: f64,
        q75: f64,
        q99: f64,
        /// Median of `|value − prior value|` (prior mean 0, prior variance 1).
        median_abs_dev: f64,
    }
}

record! {
    /// Bound quantities at one test point.
    BoundRow {
        x: f64,
        mean_abs: f64,
        bound: f64,
        c_x_xstar: f64,
        c_x: f64,
        loss: f64,
        premise_holds: bool,
        holds: bool,
    }
}
