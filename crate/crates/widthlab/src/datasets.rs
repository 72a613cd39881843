//! Built-in and file-backed regression datasets.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use widthlab_core::data::{uniform_grid, zscore, Dataset};
use widthlab_core::seed;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// `{(−1, −1), (1, 1)}`.
    TwoPoints,
    /// `y = sin(3x) + ε`, `ε ~ N(0, noise_sd²)`, `x` uniform on `[−2, 2]`.
    Sine { n_points: usize, noise_sd: f64 },
    /// Header `x,y` (or `x1,…,xD,y`), one observation per line.
    Csv(PathBuf),
}

impl DatasetSpec {
    pub fn parse(name: &str) -> Result<Self, String> {
        match name.trim() {
            "two_points" => Ok(Self::TwoPoints),
            "sine" => Ok(Self::Sine { n_points: 20, noise_sd: 0.1 }),
            other => match other.strip_prefix("csv:") {
                Some(path) if !path.is_empty() => Ok(Self::Csv(PathBuf::from(path))),
                _ => Err(format!("unknown dataset `{other}` (expected two_points, sine or csv:<path>)")),
            },
        }
    }

    /// Short label used in CSV outputs.
    pub fn label(&self) -> String {
        match self {
            Self::TwoPoints => "two_points".into(),
            Self::Sine { .. } => "sine".into(),
            Self::Csv(path) => format!("csv:{}", path.display()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error(transparent)]
    Core(#[from] widthlab_core::Error),
}

/// Observations before standardization.
pub fn raw_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset, DatasetError> {
    match spec {
        DatasetSpec::TwoPoints => Ok(Dataset::from_pairs(&[(-1.0, -1.0), (1.0, 1.0)])?),
        DatasetSpec::Sine { n_points, noise_sd } => {
            let mut rng = seed::rng(seed);
            let noise = Normal::new(0.0, *noise_sd).map_err(|e| {
                widthlab_core::Error::InvalidParameter(format!("noise_sd: {e}"))
            })?;
            let pairs: Vec<(f64, f64)> = uniform_grid(-2.0, 2.0, *n_points)
                .into_iter()
                .map(|x| (x, (3.0 * x).sin() + noise.sample(&mut rng)))
                .collect();
            Ok(Dataset::from_pairs(&pairs)?)
        }
        DatasetSpec::Csv(path) => read_xy_csv(path),
    }
}

/// The dataset of `spec`, z-scored. `seed` drives the sine noise.
pub fn make_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset, DatasetError> {
    Ok(zscore(&raw_dataset(spec, seed)?)?)
}

fn read_xy_csv(path: &Path) -> Result<Dataset, DatasetError> {
    let parse_err = |line: u64, message: String| DatasetError::Parse { path: path.to_path_buf(), line, message };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DatasetError::Io { path: path.to_path_buf(), source },
            other => parse_err(1, format!("{other:?}")),
        })?;
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let cols = header.len();
    if cols < 2 || &header[cols - 1] != "y" {
        return Err(parse_err(1, format!("header must end with a `y` column, got `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let d = cols - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols {
            return Err(parse_err(line, format!("expected {cols} fields, found {}", record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("`{field}` in column `{}` is not a number", &header[j])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value in column `{}`", &header[j])));
            }
            if j < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let n = ys.len();
    Ok(Dataset::new(DMatrix::from_row_slice(n, d, &xs), DVector::from_vec(ys))?)
}
