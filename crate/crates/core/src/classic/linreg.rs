use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    ClosedForm,
    Gradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinRegOptions {
    pub ridge: f64,
    pub method: FitMethod,
    /// Gradient method: iteration cap and stopping threshold on the gradient norm.
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for LinRegOptions {
    fn default() -> Self {
        Self {
            ridge: DEFAULT_RIDGE,
            method: FitMethod::ClosedForm,
            max_iter: 200_000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinRegModel {
    pub weights: DVector<f64>,
    pub bias: f64,
    pub fit_method: FitMethod,
}

impl LinRegModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::Dimension(format!(
                "model has {} weights, input has {} columns",
                self.weights.len(),
                x.ncols()
            )));
        }
        Ok((x * &self.weights).iter().map(|v| v + self.bias).collect())
    }
}

pub fn linreg_fit(x: &DMatrix<f64>, y: &[f64]) -> Result<LinRegModel> {
    linreg_fit_with(x, y, &LinRegOptions::default())
}

/// Minimizes `‖Xw + b − y‖² + λ‖w‖²` with the intercept unpenalized.
pub fn linreg_fit_with(x: &DMatrix<f64>, y: &[f64], opts: &LinRegOptions) -> Result<LinRegModel> {
    let (n, d) = x.shape();
    if n != y.len() || n == 0 {
        return Err(Error::Dimension(format!("{n} rows but {} targets", y.len())));
    }
    if n <= d {
        log::warn!("linear regression with {n} samples and {d} features is underdetermined; ridge {} decides", opts.ridge);
    }
    let x_mean = x.row_mean();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &x_mean;
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = xc.tr_mul(&xc);
    for i in 0..d {
        gram[(i, i)] += opts.ridge;
    }
    let rhs = xc.tr_mul(&yc);
    let weights = match opts.method {
        FitMethod::ClosedForm => gram
            .cholesky()
            .ok_or(Error::Singular { ridge: opts.ridge })?
            .solve(&rhs),
        FitMethod::Gradient => gradient_solve(&gram, &rhs, opts)?,
    };
    let bias = y_mean - (x_mean * &weights)[0];
    Ok(LinRegModel {
        weights,
        bias,
        fit_method: opts.method,
    })
}

/// Gradient descent on `½wᵀAw − bᵀw` with step `1/λmax(A)`.
fn gradient_solve(a: &DMatrix<f64>, b: &DVector<f64>, opts: &LinRegOptions) -> Result<DVector<f64>> {
    let d = b.len();
    let mut v = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut lmax = 0.0;
    for _ in 0..200 {
        let av = a * &v;
        lmax = av.norm();
        if lmax == 0.0 {
            break;
        }
        v = av / lmax;
    }
    if !(lmax > 0.0) {
        return Err(Error::Singular { ridge: opts.ridge });
    }
    let step = 1.0 / (lmax * 1.01);
    let mut w = DVector::zeros(d);
    let scale = b.norm().max(1.0);
    for _ in 0..opts.max_iter {
        let grad = a * &w - b;
        if grad.norm() <= opts.tolerance * scale {
            break;
        }
        w -= grad * step;
    }
    Ok(w)
}
