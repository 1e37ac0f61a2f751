use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use pricenet::config::{Layout, RunConfig};
use pricenet::datakit::{
    load_manifest, make_segments, split, synth_generate, AugmentConfig, DatasetManifest, Image, ManifestEntry, Sample,
    SegmentScheme, SynthConfig,
};
use pricenet::explain::{
    grad_cam, occlusion_heatmap, render_heatmap, saliency_map, Colormap, Grid, OcclusionOptions, Upsample,
};
use pricenet::models::{argmax, last_fire_concat, Head, PriceModel};
use pricenet::trainer::{
    classification_table, eval_classification, eval_regression, hyper_search, per_class_table, regression_table,
    train, write_loss_curve, ClassRow, ClassicModel, ParamRange, RegRow, SearchOptions, Task,
};
use serde_json::json;

use crate::run::RunDir;
use crate::{Command, Global, LayoutArg, Method, NetFlags, TaskArg};

/// A mistake in how the command was invoked (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Ctx<'a> {
    global: &'a Global,
    config: RunConfig,
    argv: Vec<String>,
}

impl Ctx<'_> {
    fn open(&self, command: &str) -> Result<RunDir> {
        let run = RunDir::create(
            self.global.out_root.as_deref(),
            self.global.out_dir.as_deref(),
            command,
            self.argv.clone(),
        )?;
        log::info!("run directory: {}", run.path.display());
        Ok(run)
    }

    fn finish(&self, run: RunDir) -> Result<()> {
        let dir = run.finish(&self.config)?;
        println!("artifacts: {}", dir.display());
        Ok(())
    }
}

pub fn dispatch(global: &Global, command: Command) -> Result<()> {
    if let Some(n) = global.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let config = match &global.config {
        Some(path) => RunConfig::load(path).map_err(|e| usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    let mut ctx = Ctx {
        global,
        config,
        argv: std::env::args().collect(),
    };
    match command {
        Command::Synth {
            n,
            seed,
            side,
            noise,
            accessory_rate,
        } => synth(&ctx, n, seed, side, noise, accessory_rate),
        Command::Split {
            manifest,
            train_fraction,
            seed,
        } => {
            if let Some(f) = train_fraction {
                ctx.config.data.train_fraction = f;
            }
            if let Some(s) = seed {
                ctx.config.data.split_seed = s;
            }
            ctx.config.validate().map_err(|e| usage(e.to_string()))?;
            split_cmd(&ctx, &manifest)
        }
        Command::Train { manifest, task, net } => {
            apply_net(&mut ctx.config, &net, task)?;
            train_cmd(&ctx, &manifest)
        }
        Command::Eval { model, manifest } => eval_cmd(&ctx, &model, &manifest),
        Command::Predict { model, images } => predict_cmd(&ctx, &model, &images),
        Command::Baseline {
            train,
            test,
            task,
            network,
            hog_dims,
            cnn_dims,
            svm_c,
            svm_gamma,
        } => {
            let b = &mut ctx.config.baseline;
            if let Some(v) = hog_dims {
                b.hog_pca_dims = v;
            }
            if let Some(v) = cnn_dims {
                b.cnn_pca_dims = v;
            }
            if let Some(v) = svm_c {
                b.svm_c = v;
            }
            if let Some(v) = svm_gamma {
                b.svm_gamma = v;
            }
            ctx.config.validate().map_err(|e| usage(e.to_string()))?;
            baseline_cmd(&ctx, &train, &test, task, network.as_deref())
        }
        Command::Search {
            manifest,
            task,
            budget,
            lr_range,
            batch_size_range,
            hidden_units_range,
            epochs_range,
            refine_points,
            net,
        } => {
            apply_net(&mut ctx.config, &net, task)?;
            let mut space = Vec::new();
            for (name, text, integer) in [
                ("lr", lr_range, false),
                ("batch_size", batch_size_range, true),
                ("hidden_units", hidden_units_range, true),
                ("epochs", epochs_range, true),
            ] {
                if let Some(t) = text {
                    space.push(parse_range(name, &t, integer)?);
                }
            }
            if space.is_empty() {
                space.push(ParamRange::new("learning_rate", 1e-4, 1e-2, 3));
            }
            search_cmd(&ctx, &manifest, space, budget, refine_points)
        }
        Command::Explain {
            model,
            image,
            method,
            window,
            stride,
            class,
            layer,
        } => {
            let e = &mut ctx.config.explain;
            if let Some(w) = window {
                e.window = w;
            }
            if stride.is_some() {
                e.stride = stride;
            }
            if layer.is_some() {
                e.layer = layer;
            }
            ctx.config.validate().map_err(|e| usage(e.to_string()))?;
            explain_cmd(&ctx, &model, &image, method, class)
        }
    }
}

fn apply_net(cfg: &mut RunConfig, net: &NetFlags, task: TaskArg) -> Result<()> {
    let t = &mut cfg.train;
    t.task = match task {
        TaskArg::Reg => Task::Reg,
        TaskArg::Class => Task::Class,
    };
    if let Some(v) = net.epochs {
        t.epochs = v;
    }
    if let Some(v) = net.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = net.lr {
        t.learning_rate = v;
    }
    if let Some(v) = net.lr_decay {
        t.lr_decay = v;
    }
    if let Some(v) = net.hidden_units {
        t.hidden_units = v;
    }
    if let Some(v) = net.dropout {
        t.dropout_p = v;
    }
    if let Some(v) = net.val_fraction {
        t.val_fraction = v;
    }
    if let Some(v) = net.seed {
        t.seed = v;
    }
    if net.no_augment {
        t.augment = AugmentConfig::disabled();
    }
    if let Some(v) = net.model_seed {
        cfg.model.seed = v;
    }
    if let Some(l) = net.layout {
        cfg.model.layout = match l {
            LayoutArg::Desk => Layout::Desk,
            LayoutArg::Paper => Layout::Paper,
        };
    }
    if net.width.is_some() {
        cfg.model.width_multiplier = net.width;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))
}

fn parse_range(name: &str, text: &str, integer: bool) -> Result<ParamRange> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || usage(format!("--{}-range: expected LOW:HIGH:POINTS, got {text:?}", name.replace('_', "-")));
    if parts.len() != 3 {
        return Err(bad());
    }
    let low: f64 = parts[0].parse().map_err(|_| bad())?;
    let high: f64 = parts[1].parse().map_err(|_| bad())?;
    let points: usize = parts[2].parse().map_err(|_| bad())?;
    let key = if name == "lr" { "learning_rate" } else { name };
    let range = ParamRange::new(key, low, high, points);
    let range = if integer { range.integer() } else { range };
    range.validate().map_err(|e| usage(e.to_string()))?;
    Ok(range)
}

fn head_for(cfg: &RunConfig) -> Head {
    match cfg.train.task {
        Task::Reg => Head::Reg,
        Task::Class => Head::Class(cfg.data.segment_cutoffs.len()),
    }
}

fn load_set(manifest: &Path, side: usize) -> Result<(DatasetManifest, Vec<Sample>)> {
    let root = manifest.parent().unwrap_or(Path::new("."));
    let m = load_manifest(manifest, root, side)?;
    let samples = m.load_all()?;
    Ok((m, samples))
}

fn load_model(path: &Path) -> Result<PriceModel> {
    if !path.exists() {
        return Err(anyhow!("checkpoint not found: {}", path.display()));
    }
    PriceModel::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_image(path: &Path, side: usize) -> Result<Image> {
    Ok(Image::load_png(path)?.resize(side, side))
}

fn label(samples: &mut [Sample], scheme: &SegmentScheme) -> Vec<usize> {
    samples
        .iter_mut()
        .map(|s| {
            let l = scheme.label(s.price);
            s.segment = Some(l);
            l
        })
        .collect()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn synth(ctx: &Ctx, n: usize, seed: u64, side: usize, noise: Option<f64>, rate: Option<f64>) -> Result<()> {
    let mut sc = SynthConfig::new(n, seed);
    sc.image_side = side;
    if let Some(v) = noise {
        sc.noise = v;
    }
    if let Some(v) = rate {
        sc.accessory_rate = v;
    }
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if side < 16 {
        return Err(usage(format!("--side must be at least 16, got {side}")));
    }
    if !(0.0..1.0).contains(&sc.noise) || !(0.0..=1.0).contains(&sc.accessory_rate) {
        return Err(usage("--noise must lie in [0, 1) and --accessory-rate in [0, 1]"));
    }
    let mut run = ctx.open("synth")?;
    run.seed("synth", seed);
    let ds = synth_generate(&sc);
    ds.write(&run.path)?;
    for name in ["manifest.csv", "attributes.csv", "images"] {
        run.file(name);
    }
    write_json(&run.file("synth.json"), &sc)?;
    println!("generated {n} samples at {side}x{side}: {}", run.path.join("manifest.csv").display());
    ctx.finish(run)
}

fn split_cmd(ctx: &Ctx, manifest: &Path) -> Result<()> {
    let root = manifest.parent().unwrap_or(Path::new("."));
    let m = load_manifest(manifest, root, pricenet::datakit::manifest::DEFAULT_IMAGE_SIDE)?;
    let d = &ctx.config.data;
    let sp = split(m.len(), d.train_fraction, d.split_seed)?;
    let mut run = ctx.open("split")?;
    run.seed("split", d.split_seed);
    let part = |idx: &[usize]| -> Result<DatasetManifest> {
        let entries = idx
            .iter()
            .map(|&i| {
                let e = &m.entries[i];
                let abs = fs::canonicalize(m.image_path(e))
                    .with_context(|| format!("resolving {}", m.image_path(e).display()))?;
                Ok(ManifestEntry::new(&e.id, abs.to_string_lossy(), e.price))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetManifest::new(entries, root, m.image_side)?)
    };
    part(&sp.train)?.write_csv(&run.file("train.csv"))?;
    part(&sp.test)?.write_csv(&run.file("test.csv"))?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| m.entries[i].id.clone()).collect::<Vec<_>>();
    write_json(
        &run.file("split.json"),
        &json!({
            "source": manifest,
            "train_fraction": d.train_fraction,
            "seed": d.split_seed,
            "train": ids(&sp.train),
            "test": ids(&sp.test),
        }),
    )?;
    println!("{} train / {} test", sp.train.len(), sp.test.len());
    ctx.finish(run)
}

fn train_cmd(ctx: &Ctx, manifest: &Path) -> Result<()> {
    let cfg = &ctx.config;
    let spec = cfg.network(head_for(cfg));
    let (_, mut samples) = load_set(manifest, spec.input_side)?;
    let mut model = PriceModel::<f32>::from_spec(&spec, cfg.model.seed)?;
    if cfg.train.task == Task::Class {
        let prices: Vec<f64> = samples.iter().map(|s| s.price).collect();
        let scheme = make_segments(&prices, &cfg.data.segment_cutoffs)?;
        label(&mut samples, &scheme);
        model.meta.segments = Some(scheme);
    }
    let mut run = ctx.open("train")?;
    run.seed("model", cfg.model.seed);
    run.seed("train", cfg.train.seed);
    let count = model.graph.count_params();
    log::info!(
        "training {} samples, {} trainable parameters, {} epochs",
        samples.len(),
        count.trainable,
        cfg.train.epochs
    );
    let outcome = train(&mut model, &samples, &cfg.train)?;
    model.save(&run.file("model.ckpt"))?;
    write_loss_curve(&run.file("loss_curve.csv"), &outcome.curve)?;
    write_json(
        &run.file("training.json"),
        &json!({
            "best_epoch": outcome.best_epoch,
            "epochs_run": outcome.curve.len(),
            "parameters": count.trainable + count.frozen,
            "fit_ids": outcome.fit_ids,
            "val_ids": outcome.val_ids,
        }),
    )?;
    println!(
        "best epoch {} of {}; checkpoint {}",
        outcome.best_epoch,
        outcome.curve.len(),
        run.path.join("model.ckpt").display()
    );
    ctx.finish(run)
}

fn segments_of(model: &PriceModel) -> Result<SegmentScheme> {
    model
        .meta
        .segments
        .clone()
        .ok_or_else(|| anyhow!("classification checkpoint records no price segments"))
}

fn eval_cmd(ctx: &Ctx, model_path: &Path, manifest: &Path) -> Result<()> {
    let mut model = load_model(model_path)?;
    let (_, mut samples) = load_set(manifest, model.input_side().0)?;
    let bs = ctx.config.train.eval_batch_size;
    let mut run = ctx.open("eval")?;
    match model.head() {
        Head::Reg => {
            let truths: Vec<f64> = samples.iter().map(|s| s.price).collect();
            let images: Vec<&Image> = samples.iter().map(|s| &s.image).collect();
            let preds = model.predict_prices(&images, bs)?;
            let report = eval_regression(&preds, &truths)?;
            let table = regression_table(&[RegRow {
                model: "PriceNet-Reg".into(),
                report: report.clone(),
            }]);
            write_json(&run.file("report.json"), &report)?;
            fs::write(run.file("table.txt"), &table)?;
            let mut w = csv::Writer::from_path(run.file("predictions.csv"))?;
            w.write_record(["id", "price", "predicted"])?;
            for (s, p) in samples.iter().zip(&preds) {
                w.write_record([s.id.clone(), s.price.to_string(), p.to_string()])?;
            }
            w.flush()?;
            print!("{table}");
            println!("rmse = {:.3}, mae = {:.3}, r2 = {:.3}", report.rmse, report.mae, report.r2);
        }
        Head::Class(k) => {
            let scheme = segments_of(&model)?;
            let truths = label(&mut samples, &scheme);
            let images: Vec<&Image> = samples.iter().map(|s| &s.image).collect();
            let preds = model.predict_classes(&images, bs)?;
            let report = eval_classification(&preds, &truths, k)?;
            let table = classification_table(&[ClassRow {
                model: "PriceNet-Class".into(),
                report: report.clone(),
            }]);
            let per_class = per_class_table(&report);
            write_json(&run.file("report.json"), &report)?;
            fs::write(run.file("table.txt"), format!("{table}\n{per_class}"))?;
            print!("{table}\n{per_class}");
            println!(
                "precision = {:.3}, recall = {:.3}, f1 = {:.3}, accuracy = {:.3}",
                report.macro_precision, report.macro_recall, report.macro_f1, report.accuracy
            );
        }
    }
    ctx.finish(run)
}

fn predict_cmd(ctx: &Ctx, model_path: &Path, images: &[PathBuf]) -> Result<()> {
    let mut model = load_model(model_path)?;
    let side = model.input_side().0;
    let loaded = images
        .iter()
        .map(|p| load_image(p, side))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Image> = loaded.iter().collect();
    let bs = ctx.config.train.eval_batch_size;
    let mut run = ctx.open("predict")?;
    let mut rows = Vec::new();
    match model.head() {
        Head::Reg => {
            for (path, price) in images.iter().zip(model.predict_prices(&refs, bs)?) {
                println!("{}\t{price:.2}", path.display());
                rows.push(json!({ "image": path, "price": price }));
            }
        }
        Head::Class(_) => {
            let scheme = model.meta.segments.clone();
            for (path, probs) in images.iter().zip(model.predict_proba(&refs, bs)?) {
                let class = argmax(&probs);
                let shown: Vec<String> = probs.iter().map(|p| format!("{p:.4}")).collect();
                println!("{}\tclass {class}\t[{}]", path.display(), shown.join(", "));
                let upper = scheme.as_ref().map(|s| s.price_boundaries[class]);
                rows.push(json!({ "image": path, "class": class, "probabilities": probs, "segment_upper_price": upper }));
            }
        }
    }
    write_json(&run.file("predictions.json"), &rows)?;
    ctx.finish(run)
}

fn baseline_cmd(ctx: &Ctx, train_csv: &Path, test_csv: &Path, task: TaskArg, network: Option<&Path>) -> Result<()> {
    let cfg = &ctx.config;
    let mut network = network.map(load_model).transpose()?;
    let side = match &network {
        Some(m) => m.input_side().0,
        None => cfg.network(Head::Reg).input_side,
    };
    let (_, mut train_set) = load_set(train_csv, side)?;
    let (_, mut test_set) = load_set(test_csv, side)?;
    let b = &cfg.baseline;
    let bs = cfg.train.eval_batch_size;
    let mut run = ctx.open("baseline")?;
    let train_prices: Vec<f64> = train_set.iter().map(|s| s.price).collect();
    match task {
        TaskArg::Reg => {
            let test_prices: Vec<f64> = test_set.iter().map(|s| s.price).collect();
            let train_images: Vec<&Image> = train_set.iter().map(|s| &s.image).collect();
            let test_images: Vec<&Image> = test_set.iter().map(|s| &s.image).collect();
            let mut rows = Vec::new();
            let mut fitted = vec![
                ("average", ClassicModel::fit_average(&train_prices)?),
                (
                    "linreg_hog",
                    ClassicModel::fit_linreg_hog(&train_images, &train_prices, b.hog(), b.hog_pca_dims)?,
                ),
            ];
            if let Some(net) = network.as_mut() {
                let lin = ClassicModel::fit_linreg_cnn(
                    net,
                    &b.cnn_layer,
                    &train_images,
                    &train_prices,
                    b.cnn_pca_dims,
                    bs,
                )?;
                fitted.push(("linreg_cnn", lin));
            }
            for (file, m) in &fitted {
                let preds = m.predict_prices(&test_images, network.as_mut(), bs)?;
                rows.push(RegRow {
                    model: m.name().into(),
                    report: eval_regression(&preds, &test_prices)?,
                });
                m.save(&run.file(&format!("{file}.json")))?;
            }
            if let Some(net) = network.as_mut().filter(|n| n.head() == Head::Reg) {
                let preds = net.predict_prices(&test_images, bs)?;
                rows.push(RegRow {
                    model: "PriceNet-Reg".into(),
                    report: eval_regression(&preds, &test_prices)?,
                });
            }
            let table = regression_table(&rows);
            write_json(&run.file("report.json"), &rows)?;
            fs::write(run.file("table.txt"), &table)?;
            print!("{table}");
        }
        TaskArg::Class => {
            let scheme = match network.as_ref().and_then(|n| n.meta.segments.clone()) {
                Some(s) => s,
                None => make_segments(&train_prices, &cfg.data.segment_cutoffs)?,
            };
            let k = scheme.num_classes();
            let train_labels = label(&mut train_set, &scheme);
            let test_labels = label(&mut test_set, &scheme);
            let train_images: Vec<&Image> = train_set.iter().map(|s| &s.image).collect();
            let test_images: Vec<&Image> = test_set.iter().map(|s| &s.image).collect();
            let svm = ClassicModel::fit_svm(&train_images, &train_labels, b.hog(), b.hog_pca_dims, &b.svm())?;
            svm.save(&run.file("svm.json"))?;
            let mut rows = vec![ClassRow {
                model: svm.name().into(),
                report: eval_classification(&svm.predict_classes(&test_images)?, &test_labels, k)?,
            }];
            if let Some(net) = network.as_mut().filter(|n| n.head() == Head::Class(k)) {
                let preds = net.predict_classes(&test_images, bs)?;
                rows.push(ClassRow {
                    model: "PriceNet-Class".into(),
                    report: eval_classification(&preds, &test_labels, k)?,
                });
            }
            write_json(&run.file("segments.json"), &scheme)?;
            let table = classification_table(&rows);
            write_json(&run.file("report.json"), &rows)?;
            fs::write(run.file("table.txt"), &table)?;
            print!("{table}");
        }
    }
    ctx.finish(run)
}

fn search_cmd(ctx: &Ctx, manifest: &Path, space: Vec<ParamRange>, budget: usize, refine_points: usize) -> Result<()> {
    let coarse: usize = space.iter().map(|p| p.coarse_grid().len()).product();
    if budget < coarse {
        return Err(usage(format!("--budget {budget} is smaller than the {coarse}-point coarse grid")));
    }
    let cfg = &ctx.config;
    let head = head_for(cfg);
    let (_, mut samples) = load_set(manifest, cfg.network(head).input_side)?;
    let scheme = if cfg.train.task == Task::Class {
        let prices: Vec<f64> = samples.iter().map(|s| s.price).collect();
        let s = make_segments(&prices, &cfg.data.segment_cutoffs)?;
        label(&mut samples, &s);
        Some(s)
    } else {
        None
    };
    let mut run = ctx.open("search")?;
    run.seed("model", cfg.model.seed);
    run.seed("train", cfg.train.seed);
    let opts = SearchOptions {
        refine_points,
        log_path: Some(run.file("trials.csv")),
        ..SearchOptions::new(budget)
    };
    let result = hyper_search(&space, &opts, |params| {
        let mut trial = cfg.clone();
        for (name, &v) in params {
            match name.as_str() {
                "learning_rate" => trial.train.learning_rate = v,
                "batch_size" => trial.train.batch_size = v as usize,
                "hidden_units" => trial.train.hidden_units = v as usize,
                "epochs" => trial.train.epochs = v as usize,
                _ => unreachable!("search space names are fixed"),
            }
        }
        let mut model = PriceModel::<f32>::from_spec(&trial.network(head), trial.model.seed)?;
        model.meta.segments = scheme.clone();
        let outcome = train(&mut model, &samples, &trial.train)?;
        let metric = outcome
            .curve
            .iter()
            .map(|r| r.val_loss.unwrap_or(r.train_loss))
            .fold(f64::INFINITY, f64::min);
        log::info!("trial {params:?}: {metric:.5}");
        Ok(metric)
    })?;
    write_json(&run.file("search.json"), &result)?;
    println!("rank  metric      params");
    for (rank, t) in result.ranked().take(5).enumerate() {
        let params: BTreeMap<_, _> = t.params.iter().map(|(k, v)| (k.clone(), format!("{v:.4e}"))).collect();
        println!("{:>4}  {:<10.5}  {params:?}", rank + 1, t.metric);
    }
    ctx.finish(run)
}

fn explain_cmd(ctx: &Ctx, model_path: &Path, image_path: &Path, method: Method, class: Option<usize>) -> Result<()> {
    let model = load_model(model_path)?;
    let side = model.input_side().0;
    let image = load_image(image_path, side)?;
    let e = &ctx.config.explain;
    let mut run = ctx.open("explain")?;
    let (grid, colormap, upsample, details): (Grid, Colormap, Upsample, serde_json::Value) = match method {
        Method::Occlusion => {
            let opts = OcclusionOptions {
                window: e.window,
                stride: e.stride,
                class,
                ..OcclusionOptions::default()
            };
            let map = occlusion_heatmap(&model, &image, &opts)?;
            let details = json!({
                "window": map.window,
                "stride": map.stride,
                "base_prediction": map.base_prediction,
                "class": map.class,
                "fill": model.meta.channel_means,
            });
            (map.grid, Colormap::Diverging, Upsample::Nearest, details)
        }
        Method::Saliency => {
            let map = saliency_map(&model, &image, class)?;
            (map.weights, Colormap::Sequential, Upsample::Bilinear, json!({ "target": map.target }))
        }
        Method::Gradcam => {
            let layer = match e.layer.clone() {
                Some(l) => l,
                None => model
                    .meta
                    .spec
                    .as_ref()
                    .and_then(last_fire_concat)
                    .ok_or_else(|| usage("checkpoint records no layout; pass --layer"))?,
            };
            let cam = grad_cam(&model, &image, class, &layer)?;
            let details = json!({
                "layer": cam.layer_name,
                "target": cam.class_index,
                "channel_weights": cam.channel_weights,
            });
            (cam.map, Colormap::Sequential, Upsample::Bilinear, details)
        }
    };
    let heatmap = render_heatmap(&grid, &image, colormap, upsample)?;
    let method_name = format!("{method:?}").to_lowercase();
    heatmap.save_png(&run.file("heatmap.png"), &[("method", method_name.clone())])?;
    grid.write_csv(&run.file("grid.csv"))?;
    write_json(
        &run.file("explain.json"),
        &json!({
            "method": method_name,
            "model": model_path,
            "image": image_path,
            "input_side": side,
            "grid": { "rows": grid.rows, "cols": grid.cols },
            "min": grid.min(),
            "max": grid.max(),
            "scale": [heatmap.scale.0, heatmap.scale.1],
            "details": details,
        }),
    )?;
    println!(
        "{method_name} map {}x{} (range {:.4} to {:.4})",
        grid.rows,
        grid.cols,
        grid.min(),
        grid.max()
    );
    ctx.finish(run)
}
