use ndgrad::{GraphBuilder, Layer, Mode, NdError, RmsProp, Tensor};
use proptest::prelude::*;

/// Direct valid cross-correlation, used as the oracle for the GEMM path.
fn correlate(x: &[f64], h: usize, w: usize, k: &[f64], kh: usize, kw: usize) -> Vec<f64> {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            for a in 0..kh {
                for b in 0..kw {
                    out[i * ow + j] += x[(i + a) * w + j + b] * k[a * kw + b];
                }
            }
        }
    }
    out
}

#[test]
fn identity_pointwise_conv() {
    let mut b = GraphBuilder::<f64>::new(&[1, 5, 3], 0).unwrap();
    let c = b.add("conv", Layer::conv(1, 1, 1, 1, 0), &[0]).unwrap();
    let mut g = b.build(c).unwrap();
    g.param_mut("conv.weight").unwrap().value.data_mut()[0] = 1.0;
    let x = Tensor::from_fn(&[2, 1, 5, 3], |i| (i as f64).sin());
    let y = g.forward(&x, Mode::Eval).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn all_ones_kernel_matches_correlation_oracle() {
    let mut b = GraphBuilder::<f64>::new(&[1, 4, 4], 0).unwrap();
    let c = b.add("conv", Layer::conv(1, 1, 3, 1, 0), &[0]).unwrap();
    let mut g = b.build(c).unwrap();
    g.param_mut("conv.weight").unwrap().value.data_mut().fill(1.0);
    let x: Vec<f64> = (1..=16).map(|v| v as f64).collect();
    let y = g.forward(&Tensor::new(vec![1, 1, 4, 4], x.clone()).unwrap(), Mode::Eval).unwrap();
    let expected = correlate(&x, 4, 4, &[1.0; 9], 3, 3);
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.data(), expected.as_slice());
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut b = GraphBuilder::<f64>::new(&[4], 0).unwrap();
    let s = b.add("sm", Layer::Softmax, &[0]).unwrap();
    let mut g = b.build(s).unwrap();
    let y = g.forward(&Tensor::zeros(&[1, 4]), Mode::Eval).unwrap();
    assert_eq!(y.data(), &[0.25; 4]);
}

#[test]
fn scalar_dense_chain_rule() {
    let mut b = GraphBuilder::<f64>::new(&[1], 0).unwrap();
    let d = b.add("fc", Layer::dense(1, 1), &[0]).unwrap();
    let mut g = b.build(d).unwrap();
    g.param_mut("fc.weight").unwrap().value.data_mut()[0] = 2.0;
    let x = Tensor::new(vec![1, 1], vec![3.5]).unwrap().with_requires_grad(true);
    g.forward(&x, Mode::Train).unwrap();
    let gin = g.backward(&Tensor::new(vec![1, 1], vec![1.0]).unwrap()).unwrap().unwrap();
    assert_eq!(gin.data(), &[2.0]);
    assert_eq!(g.param("fc.weight").unwrap().value.grad().unwrap(), &[3.5]);
}

#[test]
fn dead_relu_passes_no_gradient() {
    let mut b = GraphBuilder::<f64>::new(&[1], 0).unwrap();
    let r = b.add("relu", Layer::Relu, &[0]).unwrap();
    let mut g = b.build(r).unwrap();
    let x = Tensor::new(vec![1, 1], vec![-1.0]).unwrap().with_requires_grad(true);
    g.forward(&x, Mode::Train).unwrap();
    let gin = g.backward(&Tensor::new(vec![1, 1], vec![1.0]).unwrap()).unwrap().unwrap();
    assert_eq!(gin.data(), &[0.0]);
}

#[test]
fn parameter_counts() {
    let mut b = GraphBuilder::<f32>::new(&[10], 0).unwrap();
    let d = b.add("fc", Layer::dense(10, 5), &[0]).unwrap();
    assert_eq!(b.build(d).unwrap().count_params().total(), 55);

    let mut b = GraphBuilder::<f32>::new(&[3, 8, 8], 0).unwrap();
    let c = b.add("conv", Layer::conv(3, 16, 3, 1, 1), &[0]).unwrap();
    let mut g = b.build(c).unwrap();
    assert_eq!(g.count_params().total(), 448);
    g.set_trainable(c, false);
    let count = g.count_params();
    assert_eq!((count.trainable, count.frozen), (0, 448));
}

#[test]
fn batchnorm_train_output_is_standardized() {
    let mut b = GraphBuilder::<f64>::new(&[3, 5, 4], 1).unwrap();
    let n = b.add("bn", Layer::batchnorm(3), &[0]).unwrap();
    let mut g = b.build(n).unwrap();
    let x = Tensor::from_fn(&[4, 3, 5, 4], |i| ((i * 37 % 101) as f64) * 0.3 + (i % 3) as f64 * 5.0);
    let y = g.forward(&x, Mode::Train).unwrap();
    for c in 0..3 {
        let vals: Vec<f64> = (0..4)
            .flat_map(|b| {
                let off = (b * 3 + c) * 20;
                y.data()[off..off + 20].to_vec()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-5, "channel {c} mean {mean}");
        // epsilon inside the square root shrinks variance slightly
        assert!((var - 1.0).abs() < 1e-5 * 10.0, "channel {c} var {var}");
    }
}

#[test]
fn dropout_eval_identity_and_train_rate() {
    let p = 0.3;
    let mut b = GraphBuilder::<f64>::new(&[1000], 9).unwrap();
    let d = b.add("drop", Layer::Dropout { p }, &[0]).unwrap();
    let mut g = b.build(d).unwrap();
    let x = Tensor::full(&[10, 1000], 2.0);
    assert_eq!(g.forward(&x, Mode::Eval).unwrap(), x);
    let y = g.forward(&x, Mode::Train).unwrap();
    let zeros = y.data().iter().filter(|&&v| v == 0.0).count();
    let frac = zeros as f64 / y.len() as f64;
    assert!((frac - p).abs() < 0.02, "dropped fraction {frac}");
    let scaled = 2.0 / (1.0 - p);
    assert!(y.data().iter().all(|&v| v == 0.0 || (v - scaled).abs() < 1e-12));
}

#[test]
fn frozen_parameters_are_not_updated() {
    let mut b = GraphBuilder::<f64>::new(&[3], 4).unwrap();
    let a = b.add("a", Layer::dense(3, 3), &[0]).unwrap();
    let c = b.add("c", Layer::dense(3, 1), &[a]).unwrap();
    let mut g = b.build(c).unwrap();
    g.set_trainable(a, false);
    let before_a = g.param("a.weight").unwrap().value.clone();
    let before_c = g.param("c.weight").unwrap().value.clone();
    let x = Tensor::from_fn(&[2, 3], |i| i as f64 - 2.0);
    g.forward(&x, Mode::Train).unwrap();
    g.backward(&Tensor::full(&[2, 1], 1.0)).unwrap();
    assert!(g.param("a.weight").unwrap().value.grad().is_some());
    RmsProp::new(0.1).step(&mut g).unwrap();
    assert_eq!(g.param("a.weight").unwrap().value.data(), before_a.data());
    assert_ne!(g.param("c.weight").unwrap().value.data(), before_c.data());
}

#[test]
fn non_finite_gradient_rejects_step() {
    let mut b = GraphBuilder::<f64>::new(&[2], 4).unwrap();
    let a = b.add("a", Layer::dense(2, 1), &[0]).unwrap();
    let mut g = b.build(a).unwrap();
    g.forward(&Tensor::full(&[1, 2], 1.0), Mode::Train).unwrap();
    g.backward(&Tensor::full(&[1, 1], 1.0)).unwrap();
    let mut opt = RmsProp::new(0.1);
    opt.step(&mut g).unwrap();
    let state = g.state();
    let acc = opt.accumulators().to_vec();
    g.param_mut("a.weight").unwrap().value.set_grad(vec![f64::NAN, 0.0]).unwrap();
    assert!(matches!(opt.step(&mut g), Err(NdError::NonFiniteGradient { .. })));
    assert_eq!(g.state(), state);
    assert_eq!(opt.accumulators(), acc.as_slice());
}

#[test]
fn zero_learning_rate_leaves_graph_unchanged() {
    let mut b = GraphBuilder::<f32>::new(&[2, 4, 4], 4).unwrap();
    let c = b.add("c", Layer::conv(2, 3, 3, 1, 1), &[0]).unwrap();
    let mut g = b.build(c).unwrap();
    let before = g.state();
    let mut opt = RmsProp::new(0.0);
    for _ in 0..3 {
        let y = g.forward(&Tensor::full(&[1, 2, 4, 4], 0.5), Mode::Train).unwrap();
        g.backward(&Tensor::full(y.shape(), 1.0)).unwrap();
        opt.step(&mut g).unwrap();
    }
    assert_eq!(g.state(), before);
}

#[test]
fn grad_through_intermediate_node_is_exposed() {
    let mut b = GraphBuilder::<f64>::new(&[1, 2, 2], 0).unwrap();
    let r = b.add("relu", Layer::Relu, &[0]).unwrap();
    let gap = b.add("gap", Layer::GlobalAvgPool, &[r]).unwrap();
    let mut g = b.build(gap).unwrap();
    g.forward(&Tensor::new(vec![1, 1, 2, 2], vec![1.0, -1.0, 2.0, 3.0]).unwrap(), Mode::Eval)
        .unwrap();
    g.backward(&Tensor::full(&[1, 1], 1.0)).unwrap();
    assert_eq!(g.node_grad(r).unwrap().data(), &[0.25; 4]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_rows_are_distributions(vals in prop::collection::vec(-30.0f64..30.0, 2..12)) {
        let f = vals.len();
        let mut b = GraphBuilder::<f64>::new(&[f], 0).unwrap();
        let s = b.add("sm", Layer::Softmax, &[0]).unwrap();
        let mut g = b.build(s).unwrap();
        let y = g.forward(&Tensor::new(vec![1, f], vals).unwrap(), Mode::Eval).unwrap();
        let sum: f64 = y.data().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
        prop_assert!(y.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn forward_shapes_match_inference(
        c in 1usize..4, h in 3usize..12, w in 3usize..12,
        oc in 1usize..5, k in prop::sample::select(vec![1usize, 3]), stride in 1usize..3, pad in 0usize..2,
        pk in 2usize..4, ps in 1usize..3,
    ) {
        let mut b = GraphBuilder::<f32>::new(&[c, h, w], 0).unwrap();
        let conv = b.add("conv", Layer::conv(c, oc, k, stride, pad), &[0]).unwrap();
        let Ok(pool) = b.add("pool", Layer::MaxPool2d { kernel: pk, stride: ps, padding: 0 }, &[conv]) else {
            return Ok(());
        };
        let gap = b.add("gap", Layer::GlobalAvgPool, &[pool]).unwrap();
        let expected_conv = b.shape(conv).to_vec();
        let expected_pool = b.shape(pool).to_vec();
        let mut g = b.build(gap).unwrap();
        g.forward(&Tensor::full(&[2, c, h, w], 0.1), Mode::Eval).unwrap();
        prop_assert_eq!(&g.activation(conv).unwrap().shape()[1..], expected_conv.as_slice());
        prop_assert_eq!(&g.activation(pool).unwrap().shape()[1..], expected_pool.as_slice());
        prop_assert_eq!(g.activation(gap).unwrap().shape(), &[2, oc]);
    }
}

#[test]
fn population_stats_average_the_batch_statistics() {
    let mut b = GraphBuilder::<f64>::new(&[2, 3, 3], 1).unwrap();
    let n = b.add("bn", Layer::batchnorm(2), &[0]).unwrap();
    let mut g = b.build(n).unwrap();
    let batches: Vec<Tensor<f64>> = (0..3)
        .map(|k| Tensor::from_fn(&[k + 2, 2, 3, 3], |i| ((i * 29 + k * 7) % 53) as f64 * 0.1 - k as f64))
        .collect();
    g.set_dropout_step(9);
    let spec = g.spec();
    for (k, x) in batches.iter().enumerate() {
        g.accumulate_population_stats(x, k).unwrap();
    }
    assert_eq!(g.spec(), spec);
    assert_eq!(g.dropout_step(), 9);

    let (mut means, mut vars) = (vec![0.0; 2], vec![0.0; 2]);
    for x in &batches {
        let batch = x.shape()[0];
        for c in 0..2 {
            let vals: Vec<f64> = (0..batch).flat_map(|s| x.data()[(s * 2 + c) * 9..(s * 2 + c + 1) * 9].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            means[c] += m / 3.0;
            vars[c] += vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64 / 3.0;
        }
    }
    let running: Vec<&[f64]> = g.buffers().iter().map(|b| b.value.data()).collect();
    for c in 0..2 {
        assert!((running[0][c] - means[c]).abs() < 1e-12, "mean {c}");
        assert!((running[1][c] - vars[c]).abs() < 1e-12, "var {c}");
    }
}
