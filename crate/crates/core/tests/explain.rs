use ndgrad::{Graph, GraphBuilder, Layer, Mode, Tensor};
use pricenet::datakit::Image;
use pricenet::explain::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod support;
use support::{linear_model, linear_occlusion_delta, linear_weights as weights, random_image, rel_err};

#[test]
fn occlusion_matches_linear_closed_form() {
    let side = 16;
    let model = linear_model(side, 2);
    let w = weights(&model);
    let img = random_image(side, 5);
    let fill = model.meta.channel_means;
    for (window, stride) in [(4, 4), (5, 3), (16, 16)] {
        let map = occlusion_heatmap(
            &model,
            &img,
            &OcclusionOptions {
                window,
                stride: Some(stride),
                ..Default::default()
            },
        )
        .unwrap();
        let g = grid_extent(side, window, stride);
        assert_eq!((map.grid.rows, map.grid.cols), (g, g));
        for r in 0..g {
            for c in 0..g {
                let expected = linear_occlusion_delta(&w, &img, fill, (r * stride, c * stride), window);
                assert!((map.grid.get(r, c) - expected).abs() < 1e-6, "window {window} cell ({r},{c})");
            }
        }
    }
}

#[test]
fn occlusion_grid_shape_and_noops() {
    let model = linear_model(224, 1);
    let img = random_image(224, 3);
    let map = occlusion_heatmap(&model, &img, &OcclusionOptions::default()).unwrap();
    assert_eq!((map.grid.rows, map.grid.cols, map.window, map.stride), (8, 8, 28, 28));

    let small = linear_model(16, 7);
    let fill = small.meta.channel_means;
    let pre_filled = occlude(&random_image(16, 1), 0, 0, 4, fill);
    let map = occlusion_heatmap(
        &small,
        &pre_filled,
        &OcclusionOptions {
            window: 4,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(map.grid.get(0, 0).abs() < 1e-6);
    assert!(occlusion_heatmap(&small, &pre_filled, &OcclusionOptions { window: 17, ..Default::default() }).is_err());

    let mut constant = linear_model(16, 7);
    for p in constant.graph.params_mut() {
        if p.name.ends_with("weight") {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let map = occlusion_heatmap(&constant, &random_image(16, 4), &OcclusionOptions { window: 4, ..Default::default() }).unwrap();
    assert!(map.grid.values.iter().all(|&v| v == 0.0));
}

#[test]
fn saliency_of_linear_model_is_channel_max_weight() {
    let side = 8;
    let model = linear_model(side, 9);
    let w = weights(&model);
    let img = random_image(side, 2);
    let s = saliency_map(&model, &img, None).unwrap();
    assert_eq!((s.weights.rows, s.weights.cols, s.target), (side, side, 0));
    for i in 0..side * side {
        let expected = (0..3).map(|c| w[c * side * side + i].abs()).fold(0.0, f64::max);
        assert_eq!(s.weights.values[i], expected);
    }
    assert_eq!(saliency_map(&model, &img, None).unwrap(), s);
}

fn small_classifier(seed: u64) -> Graph<f64> {
    let mut b = GraphBuilder::<f64>::new(&[3, 8, 8], seed).unwrap();
    let c1 = b.add("c1", Layer::conv(3, 4, 3, 1, 1), &[0]).unwrap();
    let r1 = b.add("r1", Layer::Relu, &[c1]).unwrap();
    let feat = b.add("feat", Layer::conv(4, 5, 3, 2, 1), &[r1]).unwrap();
    let r2 = b.add("r2", Layer::Relu, &[feat]).unwrap();
    let gap = b.add("gap", Layer::GlobalAvgPool, &[r2]).unwrap();
    let fc = b.add("fc", Layer::dense(5, 3), &[gap]).unwrap();
    let sm = b.add("softmax", Layer::Softmax, &[fc]).unwrap();
    let mut g = b.build(sm).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in g.params_mut() {
        if p.name.ends_with("bias") {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
        }
    }
    g
}

#[test]
fn saliency_matches_finite_differences() {
    let mut g = small_classifier(11);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::from_fn(&[1, 3, 8, 8], |_| rng.gen_range(-1.0..1.0));
    for target in 0..3 {
        let grad = input_gradient(&mut g, &x, target).unwrap();
        for _ in 0..20 {
            let i = rng.gen_range(0..x.len());
            let h = 1e-5;
            let mut up = x.clone();
            up.data_mut()[i] += h;
            let mut down = x.clone();
            down.data_mut()[i] -= h;
            let fd = (target_score(&mut g, &up, target).unwrap() - target_score(&mut g, &down, target).unwrap()) / (2.0 * h);
            assert!(rel_err(grad.data()[i], fd) < 1e-3, "target {target} index {i}: {} vs {fd}", grad.data()[i]);
        }
    }
}

#[test]
fn gradcam_weights_match_uniform_shift() {
    let mut g = small_classifier(4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::from_fn(&[1, 3, 8, 8], |_| rng.gen_range(-1.0..1.0));
    let id = g.node_id("feat").unwrap();
    for target in 0..3 {
        let cam = grad_cam_tensor(&mut g, &x, target, "feat").unwrap();
        assert_eq!((cam.map.rows, cam.map.cols), (4, 4));
        assert!(cam.map.values.iter().all(|&v| v >= 0.0));
        g.forward(&x, Mode::Eval).unwrap();
        let base = g.activation(id).unwrap().clone();
        let plane = 16;
        for (k, &wk) in cam.channel_weights.iter().enumerate() {
            let h = 1e-5;
            let shifted = |d: f64| {
                let mut a = base.clone();
                a.data_mut()[k * plane..(k + 1) * plane].iter_mut().for_each(|v| *v += d);
                a
            };
            let mut score = |d: f64| {
                g.forward_with(&x, Mode::Eval, &[(id, shifted(d))]).unwrap();
                g.activation(g.logits_node()).unwrap().data()[target]
            };
            let fd = (score(h) - score(-h)) / (2.0 * h) / plane as f64;
            assert!(rel_err(wk, fd) < 1e-3, "channel {k}: {wk} vs {fd}");
        }
        let acts = base.data();
        for i in 0..plane {
            let s: f64 = cam.channel_weights.iter().enumerate().map(|(k, w)| w * acts[k * plane + i]).sum();
            assert_eq!(cam.map.values[i], s.max(0.0));
        }
    }
    assert!(grad_cam_tensor(&mut g, &x, 0, "gap").is_err());
    assert!(grad_cam_tensor(&mut g, &x, 0, "nope").is_err());
}

#[test]
fn gradcam_unit_gradient_gives_relu_of_map() {
    let (h, w) = (5, 6);
    let mut b = GraphBuilder::<f64>::new(&[1, h, w], 3).unwrap();
    let feat = b.add("feat", Layer::conv(1, 1, 3, 1, 1), &[0]).unwrap();
    let gap = b.add("gap", Layer::GlobalAvgPool, &[feat]).unwrap();
    let out = b.add("out", Layer::dense(1, 1), &[gap]).unwrap();
    let mut g = b.build(out).unwrap();
    for p in g.params_mut() {
        if p.name.starts_with("out") {
            let v = if p.name.ends_with("weight") { (h * w) as f64 } else { 0.0 };
            p.value.data_mut().iter_mut().for_each(|x| *x = v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::from_fn(&[1, 1, h, w], |_| rng.gen_range(-1.0..1.0));
    let cam = grad_cam_tensor(&mut g, &x, 0, "feat").unwrap();
    assert!((cam.channel_weights[0] - 1.0).abs() < 1e-12);
    let a = g.activation(g.node_id("feat").unwrap()).unwrap().data().to_vec();
    for (m, v) in cam.map.values.iter().zip(&a) {
        assert!((m - v.max(0.0)).abs() < 1e-12);
    }
}

#[test]
fn render_zero_map_is_white_tint() {
    let img = random_image(16, 1);
    let grid = Grid::zeros(4, 4);
    let hm = render_heatmap(&grid, &img, Colormap::Diverging, Upsample::Nearest).unwrap();
    for (o, p) in hm.overlay.data().iter().zip(img.data()) {
        assert!((o - (0.5 * p + 0.5)).abs() < 1e-6);
    }
    let seq = render_heatmap(&grid, &img, Colormap::Sequential, Upsample::Bilinear).unwrap();
    assert_eq!(seq.overlay.height(), 16);
}

#[test]
fn render_extremes_and_blocks() {
    let img = Image::filled(224, 224, [0.5; 3]);
    let mut grid = Grid::zeros(8, 8);
    for r in 0..8 {
        for c in 0..8 {
            grid.set(r, c, (r * 8 + c) as f64 - 20.0);
        }
    }
    let hm = render_heatmap(&grid, &img, Colormap::Diverging, Upsample::Nearest).unwrap();
    for r in 0..8 {
        for c in 0..8 {
            let first = hm.overlay.pixel(r * 28, c * 28);
            for y in r * 28..(r + 1) * 28 {
                for x in c * 28..(c + 1) * 28 {
                    assert_eq!(hm.overlay.pixel(y, x), first);
                }
            }
        }
    }
    let red = |p: [f32; 3]| p[0] - p[1];
    let top = hm.overlay.pixel(7 * 28, 7 * 28);
    let best = (0..224).flat_map(|y| (0..224).map(move |x| (y, x))).map(|(y, x)| red(hm.overlay.pixel(y, x))).fold(f32::MIN, f32::max);
    assert_eq!(red(top), best);
    assert_eq!(hm.scale, (-43.0, 43.0));
    assert!(render_heatmap(&Grid::new(1, 1, vec![f64::NAN]).unwrap(), &img, Colormap::Diverging, Upsample::Nearest).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.png");
    hm.save_png(&path, &[("method", "occlusion".into())]).unwrap();
    let back = Image::load_png(&path).unwrap();
    assert_eq!(back.height(), 224 + hm.legend.height());
    grid.write_csv(&dir.path().join("grid.csv")).unwrap();
    assert_eq!(Grid::read_csv(&dir.path().join("grid.csv")).unwrap(), grid);
}
