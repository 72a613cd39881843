//! Regression datasets, z-score standardization and upcrossing detection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Affine transform applied by [`zscore`]; `raw = standardized * scale + mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Standardization {
    /// Maps a raw input point into standardized units.
    pub fn standardize_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.x_mean.iter().zip(&self.x_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Empty("dataset needs at least one observation"));
        }
        if x.ncols() == 0 {
            return Err(Error::Empty("dataset needs at least one input column"));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        Ok(Self { x, y, standardization: None })
    }

    /// One-dimensional dataset from `(x, y)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        Self::new(DMatrix::from_column_slice(xs.len(), 1, &xs), DVector::from_vec(ys))
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.is_some()
    }

    /// Inputs as row-major `N × D`.
    pub(crate) fn x_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len());
        for r in self.x.row_iter() {
            out.extend(r.iter().copied());
        }
        out
    }

    /// Restores the raw data recorded before standardization (identity otherwise).
    pub fn unstandardize(&self) -> Dataset {
        let Some(t) = &self.standardization else {
            return self.clone();
        };
        let mut x = self.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.iter_mut().for_each(|v| *v = *v * t.x_scale[j] + t.x_mean[j]);
        }
        let y = self.y.map(|v| v * t.y_scale + t.y_mean);
        Dataset { x, y, standardization: None }
    }
}

// Population mean and standard deviation.
fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Centers and scales every input column and the output to mean 0 and
/// population variance 1.
///
/// A single observation is centered with scale fixed to one.
pub fn zscore(dataset: &Dataset) -> Result<Dataset> {
    let raw = dataset.unstandardize();
    let n = raw.len();
    let mut x = raw.x.clone();
    let mut x_mean = Vec::with_capacity(x.ncols());
    let mut x_scale = Vec::with_capacity(x.ncols());
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let (m, s) = mean_sd(col.as_slice());
        let s = if n == 1 { 1.0 } else { s };
        if !(s > 0.0) {
            return Err(Error::ZeroVariance { column: format!("x{j}") });
        }
        col.iter_mut().for_each(|v| *v = (*v - m) / s);
        x_mean.push(m);
        x_scale.push(s);
    }
    let (y_mean, y_sd) = mean_sd(raw.y.as_slice());
    let y_scale = if n == 1 { 1.0 } else { y_sd };
    if !(y_scale > 0.0) {
        return Err(Error::ZeroVariance { column: "y".into() });
    }
    let y = raw.y.map(|v| (v - y_mean) / y_scale);
    Ok(Dataset {
        x,
        y,
        standardization: Some(Standardization { x_mean, x_scale, y_mean, y_scale }),
    })
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect()
        }
    }
}

/// Locations where `f` crosses zero from below (`f_i < 0 ≤ f_{i+1}`),
/// linearly interpolated between grid points.
pub fn upcrossings(grid: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    if grid.len() != f.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: f.len() });
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::UnsortedGrid { index: i + 1 });
    }
    Ok(grid
        .windows(2)
        .zip(f.windows(2))
        .filter(|(_, v)| v[0] < 0.0 && v[1] >= 0.0)
        .map(|(g, v)| g[0] + (g[1] - g[0]) * (-v[0]) / (v[1] - v[0]))
        .collect())
}
