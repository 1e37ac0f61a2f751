use ndgrad::{mse_loss, GraphBuilder, Mode, RmsProp, Tensor};
use pricenet::datakit::Image;
use pricenet::models::{
    argmax, attach_head, build_fire, build_pricenet, FireSpec, Head, HeadSpec, PriceModel, PriceNetSpec, Stage,
    TargetScaling, FEATURE_NODE, PARAM_BUDGET,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn fire_graph(depth: usize, spec: &FireSpec) -> ndgrad::Graph<f64> {
    let mut b = GraphBuilder::new(&[depth, 6, 6], 1).unwrap();
    let out = build_fire(&mut b, "fire", spec, 0).unwrap();
    b.build(out).unwrap()
}

/// Counts each layer's parameters independently of the module's own formula.
fn tally(layers: &[(usize, usize, usize)], bn_channels: &[usize]) -> usize {
    layers.iter().map(|&(cin, cout, k)| cin * cout * k * k + cout).sum::<usize>() + bn_channels.iter().map(|c| 2 * c).sum::<usize>()
}

#[test]
fn fire_depths_and_parameter_tally() {
    let spec = FireSpec::new(16, 64, 64, true);
    let mut g = fire_graph(128, &spec);
    assert_eq!(g.output_shape(), &[128, 6, 6]);
    let y = g.forward(&random_input(&[2, 128, 6, 6], 3), Mode::Eval).unwrap();
    assert_eq!(y.shape(), &[2, 128, 6, 6]);
    let expected = tally(&[(128, 16, 1), (16, 64, 1), (16, 64, 3)], &[16, 64, 64]);
    assert_eq!(g.count_params().total(), expected);
    assert_eq!(spec.param_count(128), expected);
    let mut b = GraphBuilder::<f64>::new(&[96, 6, 6], 1).unwrap();
    assert!(build_fire(&mut b, "fire", &spec, 0).is_err());
}

#[test]
fn zero_expand_residual_is_identity_and_passes_gradient() {
    let spec = FireSpec::new(4, 6, 6, true);
    let mut g = fire_graph(12, &spec);
    for p in g.params_mut() {
        let zero = p.name.starts_with("fire.expand") && !p.name.contains("_bn.gamma");
        if zero {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let x = random_input(&[1, 12, 6, 6], 8);
    let y = g.forward(&x, Mode::Eval).unwrap();
    assert_eq!(y.data(), x.data());
    g.forward(&x.clone().with_requires_grad(true), Mode::Eval).unwrap();
    let dx = g.backward(&Tensor::full(&[1, 12, 6, 6], 1.0)).unwrap().unwrap();
    assert!(dx.data().iter().all(|&v| v != 0.0));
}

#[test]
fn paper_layout_parameter_budget() {
    for head in [Head::Reg, Head::Class(4)] {
        let spec = PriceNetSpec::paper(head);
        let g = build_pricenet::<f32>(&spec, 0).unwrap();
        let total = g.count_params().total();
        assert!((PARAM_BUDGET.0..=PARAM_BUDGET.1).contains(&total), "{total}");
    }
}

#[test]
fn heads_and_reproducibility() {
    let spec = PriceNetSpec::desk(Head::Class(4), 0.25);
    let mut g = build_pricenet::<f64>(&spec, 5).unwrap();
    let x = random_input(&[3, 3, 64, 64], 1);
    let y = g.forward(&x, Mode::Eval).unwrap();
    assert_eq!(y.shape(), &[3, 4]);
    for row in y.data().chunks(4) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&p| p >= 0.0));
    }
    let again = build_pricenet::<f64>(&spec, 5).unwrap();
    assert_eq!(g.state(), again.state());

    let mut reg = build_pricenet::<f64>(&PriceNetSpec::desk(Head::Reg, 0.25), 5).unwrap();
    let y = reg.forward(&x, Mode::Eval).unwrap();
    assert_eq!(y.shape(), &[3, 1]);
    assert!(y.is_finite());
}

#[test]
fn invalid_layout_names_transition() {
    let mut spec = PriceNetSpec::desk(Head::Reg, 0.25);
    spec.stages.insert(1, Stage::Fire(FireSpec::new(4, 8, 8, true)));
    let msg = build_pricenet::<f32>(&spec, 0).err().unwrap().to_string();
    assert!(msg.contains("stage 1"), "{msg}");
}

#[test]
fn attach_head_freezes_trunk() {
    let spec = PriceNetSpec::desk(Head::Class(4), 0.25);
    let trunk = build_pricenet::<f64>(&spec, 2).unwrap();
    let head = HeadSpec {
        hidden_units: Some(10),
        head: Head::Reg,
    };
    let mut g = attach_head(&trunk, FEATURE_NODE, &head, true).unwrap();
    assert_eq!(g.output_shape(), &[1]);
    let gap_depth = trunk.node(trunk.node_id(FEATURE_NODE).unwrap()).shape[0];
    let head_tally = tally(&[(gap_depth, 10, 1), (10, 1, 1)], &[]);
    assert_eq!(g.count_params().trainable, head_tally);

    let before = g.params().iter().map(|p| (p.name.clone(), p.trainable, p.value.data().to_vec())).collect::<Vec<_>>();
    let x = random_input(&[4, 3, 64, 64], 3);
    let y = g.forward(&x, Mode::Train).unwrap();
    let (_, grad) = mse_loss(&y, &[1.0, -1.0, 0.5, 2.0]).unwrap();
    g.backward(&grad).unwrap();
    RmsProp::new(0.01).step(&mut g).unwrap();
    for ((name, trainable, old), p) in before.iter().zip(g.params()) {
        if *trainable {
            assert_ne!(old.as_slice(), p.value.data(), "{name} should move");
        } else {
            assert_eq!(old.as_slice(), p.value.data(), "{name} should be frozen");
        }
    }
    let out_name = trunk.node(trunk.output()).name.clone();
    assert!(attach_head(&trunk, &out_name, &head, false).is_err());
}

#[test]
fn price_model_roundtrip_and_decoding() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PriceNetSpec::desk(Head::Reg, 0.25);
    let mut m = PriceModel::<f32>::from_spec(&spec, 4).unwrap();
    m.meta.target = TargetScaling { mean: 300.0, scale: 50.0 };
    m.meta.channel_means = [0.4, 0.5, 0.6];
    let img = Image::filled(64, 64, [0.2, 0.7, 0.9]);
    let raw = m.outputs(&[&img], 1).unwrap()[0][0];
    let price = m.predict_prices(&[&img], 1).unwrap()[0];
    assert!((price - (300.0 + 50.0 * raw)).abs() < 1e-9);
    let path = dir.path().join("m.ckpt");
    m.save(&path).unwrap();
    let mut back = PriceModel::<f32>::load(&path).unwrap();
    assert_eq!(back.meta, m.meta);
    assert_eq!(back.meta.spec.as_ref().unwrap().width_multiplier, 0.25);
    assert_eq!(back.predict_prices(&[&img], 1).unwrap()[0], price);
    assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
}
