mod support;

use support::gradcheck::{layer_case, max_gradient_error, LAYER_KINDS};

#[test]
fn every_layer_kind_matches_finite_differences() {
    for kind in LAYER_KINDS {
        for case in 0..5 {
            let (mut graph, input, desc) = layer_case(kind, case);
            let err = max_gradient_error(&mut graph, &input, case, 64);
            assert!(err < 1e-4, "{kind} case {case} input {desc}: rel err {err:e}");
        }
    }
}

#[test]
fn single_precision_gradients_are_close() {
    // Same check through an f32 copy of the graph: analytic f32 gradients
    // against the f64 finite differences.
    for kind in ["conv2d", "dense", "batchnorm2d"] {
        let (mut g64, input, _) = layer_case(kind, 11);
        let mut g32 = g64.cast::<f32>();
        let x32 = input.cast::<f32>().with_requires_grad(true);
        let y = g32.forward(&x32, ndgrad::Mode::Train).unwrap();
        let seed = ndgrad::Tensor::full(y.shape(), 1.0f32);
        let gin = g32.backward(&seed).unwrap().unwrap();

        let y64 = g64.forward(&input.clone().with_requires_grad(true), ndgrad::Mode::Train).unwrap();
        let gin64 = g64.backward(&ndgrad::Tensor::full(y64.shape(), 1.0)).unwrap().unwrap();
        for (a, b) in gin.data().iter().zip(gin64.data()) {
            let rel = (*a as f64 - b).abs() / b.abs().max(1e-3);
            assert!(rel < 1e-2, "{kind}: {a} vs {b}");
        }
    }
}
