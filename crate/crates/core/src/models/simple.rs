//! Mean, nearest-neighbor table and least-squares models.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn fit_mean(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

/// 1-nearest neighbor over the stored (normalized) training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableModel {
    pub width: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TableModel {
    pub fn fit(x: ArrayView2<f64>, y: &[f64]) -> Self {
        TableModel { width: x.ncols(), x: x.iter().copied().collect(), y: y.to_vec() }
    }

    /// Ties go to the lowest training index.
    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        let mut at = 0;
        for (i, row) in self.x.chunks_exact(self.width).enumerate() {
            let mut d = 0.0;
            for (a, b) in row.iter().zip(z) {
                let t = a - b;
                d += t * t;
                if d >= best {
                    break;
                }
            }
            if d < best {
                best = d;
                at = i;
            }
        }
        self.y[at]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    /// Ordinary least squares with intercept via SVD, which also copes with
    /// collinear or constant columns (minimum-norm solution).
    pub fn fit(x: ArrayView2<f64>, y: &[f64]) -> Result<Self> {
        let (n, d) = x.dim();
        let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let b = DVector::from_column_slice(y);
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let eps = smax * 1e-10 * (n.max(d + 1)) as f64;
        let beta = svd.solve(&b, eps).map_err(|e| Error::InvalidArgument(format!("least squares: {e}")))?;
        Ok(LinearModel { intercept: beta[0], coef: beta.iter().skip(1).copied().collect() })
    }

    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (c, v) in self.coef.iter().zip(z) {
            acc += c * v;
        }
        acc
    }
}
