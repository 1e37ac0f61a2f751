//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use ndgrad::{GraphBuilder, Layer};
use pricenet::classic::Kernel;
use pricenet::datakit::Image;
use pricenet::features::PcaModel;
use pricenet::models::{Head, PriceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn random_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, j| rng.gen_range(-1.0..1.0) * (j + 1) as f64)
}

/// Largest deviation between a PCA model and the eigendecomposition of the
/// sample covariance (variances, and components up to sign).
pub fn pca_vs_covariance(x: &DMatrix<f64>, model: &PcaModel) -> f64 {
    let n = x.nrows();
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    let cov = c.transpose() * &c / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut worst = 0.0f64;
    for (row, &i) in order.iter().take(model.output_dim()).enumerate() {
        worst = worst.max((model.explained_variance[row] - eig.eigenvalues[i]).abs());
        let v = eig.eigenvectors.column(i);
        let comp = model.components.row(row);
        let sign = comp.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>().signum();
        for (a, b) in comp.iter().zip(v.iter()) {
            worst = worst.max((a - sign * b).abs());
        }
    }
    worst
}

/// Two overlapping 2-D classes, six points each.
pub fn twelve_points() -> (DMatrix<f64>, Vec<f64>) {
    let pts = [
        (0.0, 0.2, 1.0),
        (0.5, 1.0, 1.0),
        (1.2, 0.4, 1.0),
        (0.8, 1.6, 1.0),
        (1.9, 1.1, 1.0),
        (1.4, 2.2, 1.0),
        (2.1, 2.4, -1.0),
        (1.0, 1.2, -1.0),
        (2.8, 1.7, -1.0),
        (2.5, 3.0, -1.0),
        (3.3, 2.6, -1.0),
        (1.7, 1.4, -1.0),
    ];
    let x = DMatrix::from_fn(12, 2, |i, j| if j == 0 { pts[i].0 } else { pts[i].1 });
    (x, pts.iter().map(|p| p.2).collect())
}

/// Euclidean projection onto `{0 ≤ α ≤ C, Σ yα = 0}` by bisection on the multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(a, yi)| (a - mu * yi).clamp(0.0, c)).collect() };
    let g = |mu: f64| at(mu).iter().zip(y).map(|(a, yi)| a * yi).sum::<f64>();
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximized SVM dual objective by projected gradient ascent.
pub fn projected_gradient_dual(x: &DMatrix<f64>, y: &[f64], c: f64, kernel: Kernel) -> f64 {
    let n = y.len();
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * kernel.eval(&rows[i], &rows[j]));
    let step = 1.0 / q.norm();
    let mut a = vec![0.0; n];
    for _ in 0..200_000 {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[(i, j)] * a[j]).sum::<f64>()).collect();
        let v: Vec<f64> = a.iter().zip(&grad).map(|(ai, gi)| ai + step * gi).collect();
        a = project(&v, y, c);
    }
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * q[(i, j)];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// `confusion[truth][pred]` by direct counting.
pub fn tally(preds: &[usize], truths: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0usize; k]; k];
    for (&p, &t) in preds.iter().zip(truths) {
        m[t][p] += 1;
    }
    m
}

/// Per-class (precision, recall, f1) from a confusion matrix, 0 on empty denominators.
pub fn scores_from_tally(m: &[Vec<usize>]) -> Vec<(f64, f64, f64)> {
    let k = m.len();
    (0..k)
        .map(|c| {
            let tp = m[c][c] as f64;
            let predicted: usize = (0..k).map(|t| m[t][c]).sum();
            let actual: usize = m[c].iter().sum();
            let p = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let r = if actual > 0 { tp / actual as f64 } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            (p, r, f)
        })
        .collect()
}

/// Regression "network" that is a single dense map over CHW pixels.
pub fn linear_model(side: usize, seed: u64) -> PriceModel<f64> {
    let mut b = GraphBuilder::<f64>::new(&[3, side, side], seed).unwrap();
    let flat = b.add("flat", Layer::Flatten, &[0]).unwrap();
    let out = b.add("out", Layer::dense(3 * side * side, 1), &[flat]).unwrap();
    let mut g = b.build(out).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in g.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    PriceModel::new(g, Head::Reg, [0.45, 0.5, 0.55]).unwrap()
}

pub fn linear_weights(m: &PriceModel<f64>) -> Vec<f64> {
    let w = m.graph.params().iter().find(|p| p.name.ends_with("weight")).unwrap();
    w.value.data().to_vec()
}

pub fn random_image(side: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(side, side, (0..side * side * 3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

/// Brute-force occlusion delta of a linear model: Σ over the window of weight·(fill − pixel).
pub fn linear_occlusion_delta(
    weights: &[f64],
    image: &Image,
    fill: [f32; 3],
    (y0, x0): (usize, usize),
    window: usize,
) -> f64 {
    let (h, w) = (image.height(), image.width());
    let mut delta = 0.0;
    for y in y0..y0 + window {
        for x in x0..x0 + window {
            let p = image.pixel(y, x);
            for ch in 0..3 {
                delta += weights[ch * h * w + y * w + x] * (fill[ch] as f64 - p[ch] as f64);
            }
        }
    }
    delta
}
