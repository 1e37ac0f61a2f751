use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const HOG_PCA_DIMS: usize = 200;
pub const CNN_PCA_DIMS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `k×d`, orthonormal rows sorted by decreasing variance.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
}

/// Top-`k` right singular vectors of the centered data.
///
/// Variances use the `n−1` divisor. Each component's sign is fixed so its
/// largest-magnitude entry (first on ties) is positive.
pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if k == 0 || k > n.min(d) {
        return Err(invalid(format!("PCA dimension {k} outside 1..={} for a {n}x{d} matrix", n.min(d))));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| invalid("SVD did not produce right singular vectors"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let denom = (n.max(2) - 1) as f64;
    let mut components = DMatrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &src) in order.iter().take(k).enumerate() {
        let mut v = v_t.row(src).into_owned();
        let pivot = v.iter().enumerate().fold(0, |best, (i, val)| if val.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        components.set_row(row, &v);
        let s = svd.singular_values[src];
        explained_variance.push(s * s / denom);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    /// `(X − mean)·componentsᵀ`.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "PCA expects {} columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * self.components.transpose())
    }

    /// Maps projected rows back to feature space.
    pub fn inverse_transform(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = z * &self.components;
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        x
    }
}

pub fn pca_transform(model: &PcaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.transform(x)
}
