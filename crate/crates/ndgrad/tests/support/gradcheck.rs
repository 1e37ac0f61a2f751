//! Central finite-difference oracle for layer gradients.
//!
//! The scalar objective is `L = Σ c ⊙ y` for a fixed random projection `c`, so
//! `∂L/∂y = c` seeds backward. Each checked element is perturbed by ±h and the
//! objective re-evaluated with a fresh forward pass.

#![allow(dead_code)]

use ndgrad::{Graph, GraphBuilder, Layer, Mode, Tensor};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
pub const FLOOR: f64 = 1e-6;

pub const LAYER_KINDS: [&str; 11] = [
    "conv2d",
    "batchnorm2d",
    "relu",
    "maxpool2d",
    "globalavgpool",
    "dense",
    "concat_depth",
    "add",
    "softmax",
    "dropout",
    "flatten",
];

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

fn objective(graph: &mut Graph<f64>, input: &Tensor<f64>, proj: &[f64]) -> f64 {
    graph.set_dropout_step(0);
    let y = graph.forward(input, Mode::Train).expect("forward");
    y.data().iter().zip(proj).map(|(a, b)| a * b).sum()
}

/// Largest relative error over sampled input and parameter coordinates.
pub fn max_gradient_error(graph: &mut Graph<f64>, input: &Tensor<f64>, seed: u64, per_tensor: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out_len = {
        graph.set_dropout_step(0);
        graph.forward(input, Mode::Train).expect("forward").len()
    };
    let proj: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    graph.set_dropout_step(0);
    let y = graph.forward(&input.clone().with_requires_grad(true), Mode::Train).unwrap();
    let seed_grad = Tensor::new(y.shape().to_vec(), proj.clone()).unwrap();
    let input_grad = graph.backward(&seed_grad).unwrap().expect("input grad requested");
    let param_grads: Vec<Vec<f64>> = graph
        .params()
        .iter()
        .map(|p| p.value.grad().map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; p.value.len()]))
        .collect();

    let mut worst = 0.0f64;
    let pick = |n: usize, rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        idx.truncate(per_tensor);
        idx
    };

    let mut x = input.clone();
    for i in pick(x.len(), &mut rng) {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + STEP;
        let up = objective(graph, &x, &proj);
        x.data_mut()[i] = orig - STEP;
        let down = objective(graph, &x, &proj);
        x.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        worst = worst.max(rel_err(input_grad.data()[i], numeric));
    }
    for (pi, analytic) in param_grads.iter().enumerate() {
        let n = graph.params()[pi].value.len();
        for i in pick(n, &mut rng) {
            let orig = graph.params()[pi].value.data()[i];
            graph.params_mut()[pi].value.data_mut()[i] = orig + STEP;
            let up = objective(graph, input, &proj);
            graph.params_mut()[pi].value.data_mut()[i] = orig - STEP;
            let down = objective(graph, input, &proj);
            graph.params_mut()[pi].value.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    worst
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Values bounded away from zero (relu kink).
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// Distinct values on a 0.01 lattice, shuffled (no pooling ties within ±h).
fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    vals.shuffle(rng);
    Tensor::new(shape.to_vec(), vals).unwrap()
}

/// One randomized graph around a single layer kind, plus an input batch.
pub fn layer_case(kind: &str, case: u64) -> (Graph<f64>, Tensor<f64>, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ (case * 7919) ^ kind.len() as u64);
    let batch = rng.gen_range(1..=3);
    let c = rng.gen_range(1..=4);
    let h = rng.gen_range(3..=6);
    let w = rng.gen_range(3..=6);
    let seed = rng.gen();
    let (graph, input) = match kind {
        "conv2d" => {
            let k = [1, 3][rng.gen_range(0..2)];
            let stride = rng.gen_range(1..=2);
            let pad = if k == 3 { rng.gen_range(0..=1) } else { 0 };
            let oc = rng.gen_range(1..=4);
            let mut b = GraphBuilder::new(&[c, h, w], seed).unwrap();
            let n = b.add("conv", Layer::conv(c, oc, k, stride, pad), &[0]).unwrap();
            let mut g = b.build(n).unwrap();
            for p in g.params_mut() {
                if p.name.ends_with("bias") {
                    p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
                }
            }
            (g, uniform(&[batch, c, h, w], -1.0, 1.0, &mut rng))
        }
        "batchnorm2d" => {
            let batch = batch.max(2);
            let mut b = GraphBuilder::new(&[c, h, w], seed).unwrap();
            let n = b.add("bn", Layer::batchnorm(c), &[0]).unwrap();
            let mut g = b.build(n).unwrap();
            for p in g.params_mut() {
                p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
            }
            (g, uniform(&[batch, c, h, w], -2.0, 2.0, &mut rng))
        }
        "relu" => {
            let mut b = GraphBuilder::new(&[c, h, w], seed).unwrap();
            let n = b.add("relu", Layer::Relu, &[0]).unwrap();
            (b.build(n).unwrap(), away_from_zero(&[batch, c, h, w], &mut rng))
        }
        "maxpool2d" => {
            let k = rng.gen_range(2..=3);
            let stride = rng.gen_range(1..=2);
            let pad = rng.gen_range(0..k.min(2));
            let mut b = GraphBuilder::new(&[c, h, w], seed).unwrap();
            let n = b
                .add(
                    "pool",
                    Layer::MaxPool2d {
                        kernel: k,
                        stride,
                        padding: pad,
                    },
                    &[0],
                )
                .unwrap();
            (b.build(n).unwrap(), distinct(&[batch, c, h, w], &mut rng))
        }
        "globalavgpool" => {
            let mut b = GraphBuilder::new(&[c, h, w], seed).unwrap();
            let n = b.add("gap", Layer::GlobalAvgPool, &[0]).unwrap();
            (b.build(n).unwrap(), uniform(&[batch, c, h, w], -1.0, 1.0, &mut rng))
        }
        "dense" => {
            let fin = rng.gen_range(1..=8);
            let fout = rng.gen_range(1..=6);
            let mut b = GraphBuilder::new(&[fin], seed).unwrap();
            let n = b.add("fc", Layer::dense(fin, fout), &[0]).unwrap();
            (b.build(n).unwrap(), uniform(&[batch, fin], -1.0, 1.0, &mut rng))
        }
        "concat_depth" => {
            let oc = rng.gen_range(1..=3);
            let mut b = GraphBuilder::new(&[c, h, w], seed).unwrap();
            let conv = b.add("conv", Layer::conv(c, oc, 3, 1, 1), &[0]).unwrap();
            let n = b.add("cat", Layer::ConcatDepth, &[0, conv, 0]).unwrap();
            (b.build(n).unwrap(), uniform(&[batch, c, h, w], -1.0, 1.0, &mut rng))
        }
        "add" => {
            let mut b = GraphBuilder::new(&[c, h, w], seed).unwrap();
            let conv = b.add("conv", Layer::conv(c, c, 1, 1, 0), &[0]).unwrap();
            let n = b.add("sum", Layer::Add, &[0, conv]).unwrap();
            (b.build(n).unwrap(), uniform(&[batch, c, h, w], -1.0, 1.0, &mut rng))
        }
        "softmax" => {
            let f = rng.gen_range(2..=7);
            let mut b = GraphBuilder::new(&[f], seed).unwrap();
            let n = b.add("softmax", Layer::Softmax, &[0]).unwrap();
            (b.build(n).unwrap(), uniform(&[batch, f], -2.0, 2.0, &mut rng))
        }
        "dropout" => {
            let p = rng.gen_range(0.1..0.7);
            let mut b = GraphBuilder::new(&[c, h, w], seed).unwrap();
            let n = b.add("drop", Layer::Dropout { p }, &[0]).unwrap();
            (b.build(n).unwrap(), uniform(&[batch, c, h, w], -1.0, 1.0, &mut rng))
        }
        "flatten" => {
            let mut b = GraphBuilder::new(&[c, h, w], seed).unwrap();
            let f = b.add("flat", Layer::Flatten, &[0]).unwrap();
            let n = b.add("fc", Layer::dense(c * h * w, 2), &[f]).unwrap();
            (b.build(n).unwrap(), uniform(&[batch, c, h, w], -1.0, 1.0, &mut rng))
        }
        other => panic!("unknown layer kind {other}"),
    };
    let desc = format!("{:?}", input.shape());
    (graph, input, desc)
}
