use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 0.001;
pub const KKT_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Rbf { gamma: DEFAULT_GAMMA }
    }
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub c: f64,
    pub kernel: Kernel,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            kernel: Kernel::default(),
            tolerance: KKT_TOLERANCE,
            max_iter: 1_000_000,
        }
    }
}

/// Soft-margin binary SVM: `f(x) = Σ coef_i·k(sv_i, x) + bias`, with `coef_i = α_i·y_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmBinary {
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
    pub c: f64,
    /// Full `α` over the training set, in training order.
    pub alphas: Vec<f64>,
    /// Dual objective `Σα − ½ΣΣ α_i α_j y_i y_j k_ij` at the solution.
    pub dual_objective: f64,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub violation: f64,
}

impl SvmBinary {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Sequential minimal optimization with maximal-violating-pair selection over a full Gram matrix.
pub fn svm_fit_binary(x: &DMatrix<f64>, y: &[f64], opts: &SvmOptions) -> Result<SvmBinary> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Dimension(format!("{n} rows but {} labels", y.len())));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(invalid("binary SVM labels must be +1 or -1"));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(invalid("binary SVM needs samples of both classes"));
    }
    if !(opts.c > 0.0) {
        return Err(invalid(format!("C must be positive, got {}", opts.c)));
    }
    let pts = rows(x);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = opts.kernel.eval(&pts[i], &pts[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let c = opts.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt < 0.0 && a < c) || (yt > 0.0 && a > 0.0);
    let mut iterations = 0;
    let mut violation;
    loop {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                (i, gmax) = (t, v);
            }
            if in_low(alpha[t], y[t]) && v < gmin {
                (j, gmin) = (t, v);
            }
        }
        violation = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || violation < opts.tolerance || iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }
    if iterations >= opts.max_iter {
        log::warn!("SMO stopped at the iteration cap with KKT violation {violation:.3e}");
    }

    // Offset: average over free vectors, else the midpoint of the feasible interval.
    let (mut ub, mut lb, mut free_sum, mut free_n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 { free_sum / free_n as f64 } else { (ub + lb) / 2.0 };
    // grad = Qα − e, so αᵀQα = αᵀ(grad + e).
    let quad: f64 = alpha.iter().zip(&grad).map(|(a, g)| a * (g + 1.0)).sum();
    let dual_objective = alpha.iter().sum::<f64>() - 0.5 * quad;
    let (mut support_vectors, mut dual_coefficients) = (Vec::new(), Vec::new());
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(pts[t].clone());
            dual_coefficients.push(alpha[t] * y[t]);
        }
    }
    Ok(SvmBinary {
        support_vectors,
        dual_coefficients,
        bias: -rho,
        kernel: opts.kernel,
        c,
        alphas: alpha,
        dual_objective,
        iterations,
        violation,
    })
}

/// Per-column z-scoring fitted on training rows; constant columns keep unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean = x.row_mean().transpose();
        let std = DVector::from_iterator(
            x.ncols(),
            x.column_iter().zip(mean.iter()).map(|(col, m)| {
                let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            }),
        );
        Self { mean, std }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "standardizer has {} columns, input has {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.std[j]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMachine {
    /// Class voted for on a nonnegative decision value.
    pub positive: usize,
    pub negative: usize,
    pub machine: SvmBinary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmOneVsOne {
    /// Class labels in index order.
    pub classes: Vec<usize>,
    pub machines: Vec<PairMachine>,
    pub standardizer: Option<Standardizer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvoPrediction {
    pub label: usize,
    /// Votes per entry of `classes`.
    pub votes: Vec<usize>,
}

/// One binary machine per class pair; the lower class index is the positive side.
pub fn svm_fit_ovo(x: &DMatrix<f64>, labels: &[usize], opts: &SvmOptions, standardize: bool) -> Result<SvmOneVsOne> {
    if labels.len() != x.nrows() {
        return Err(Error::Dimension(format!("{} rows but {} labels", x.nrows(), labels.len())));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(invalid("one-vs-one SVM needs at least two classes"));
    }
    let standardizer = standardize.then(|| Standardizer::fit(x));
    let xs = match &standardizer {
        Some(s) => s.apply(x)?,
        None => x.clone(),
    };
    let pairs: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|a| (a + 1..classes.len()).map(move |b| (a, b)))
        .collect();
    let machines = pairs
        .par_iter()
        .map(|&(a, b)| {
            let idx: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == classes[a] || labels[i] == classes[b])
                .collect();
            let sub = xs.select_rows(&idx);
            let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == classes[a] { 1.0 } else { -1.0 }).collect();
            Ok(PairMachine {
                positive: a,
                negative: b,
                machine: svm_fit_binary(&sub, &y, opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmOneVsOne {
        classes,
        machines,
        standardizer,
    })
}

/// Majority vote; ties go to the lowest class index.
pub fn svm_predict_ovo(model: &SvmOneVsOne, x: &[f64]) -> OvoPrediction {
    let xs: Vec<f64> = match &model.standardizer {
        Some(s) => x.iter().enumerate().map(|(j, v)| (v - s.mean[j]) / s.std[j]).collect(),
        None => x.to_vec(),
    };
    let mut votes = vec![0usize; model.classes.len()];
    for m in &model.machines {
        if m.machine.decision(&xs) >= 0.0 {
            votes[m.positive] += 1;
        } else {
            votes[m.negative] += 1;
        }
    }
    let best = votes.iter().enumerate().fold(0, |b, (i, &v)| if v > votes[b] { i } else { b });
    OvoPrediction {
        label: model.classes[best],
        votes,
    }
}

impl SvmOneVsOne {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<OvoPrediction> {
        x.row_iter()
            .map(|r| svm_predict_ovo(self, &r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }
}
