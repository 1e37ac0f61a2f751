use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn pricenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pricenet"))
        .args(args)
        .env_remove("PRICENET_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pricenet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn synth(tmp: &Path, name: &str, n: usize, side: usize) -> PathBuf {
    let dir = tmp.join(name);
    ok(&["synth", "--n", &n.to_string(), "--seed", "5", "--side", &side.to_string(), "--out-dir", s(&dir)]);
    dir
}

fn train_tiny(tmp: &Path, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let dir = tmp.join(name);
    let manifest = data.join("manifest.csv");
    let mut args = vec!["train", "--manifest", s(&manifest), "--epochs", "1", "--batch-size", "8"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out-dir", s(&dir)]);
    ok(&args);
    dir.join("model.ckpt")
}

#[test]
fn exit_codes_distinguish_success_failure_and_usage() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "data", 4, 32);
    assert!(data.join("manifest.csv").exists());

    let missing = tmp.path().join("nope.ckpt");
    let out = pricenet(&["eval", "--model", s(&missing), "--manifest", s(&data.join("manifest.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint not found"));

    assert_eq!(pricenet(&["synth", "--n", "3", "--bogus"]).status.code(), Some(2));
    assert_eq!(pricenet(&["synth", "--n", "0"]).status.code(), Some(2));
    let bad_config = tmp.path().join("bad.toml");
    fs::write(&bad_config, "[train]\nno_such_field = 1\n").unwrap();
    assert_eq!(pricenet(&["--config", s(&bad_config), "synth", "--n", "2"]).status.code(), Some(2));
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let tmp = TempDir::new().unwrap();
    let a = snapshot(&synth(tmp.path(), "a", 12, 32));
    let b = snapshot(&synth(tmp.path(), "b", 12, 32));
    let data_only = |m: &BTreeMap<PathBuf, Vec<u8>>| {
        m.iter()
            .filter(|(k, _)| k.as_path() != Path::new("run.json"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect::<BTreeMap<_, _>>()
    };
    assert_eq!(data_only(&a), data_only(&b));
    assert!(a.contains_key(Path::new("manifest.csv")));
}

#[test]
fn eval_reports_perfect_fit_and_leaves_inputs_untouched() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "data", 16, 32);
    let model = train_tiny(tmp.path(), &data, "train", &["--width", "0.125"]);
    let before = snapshot(&data);

    let images: Vec<PathBuf> = (0..16).map(|i| data.join(format!("images/s{i:05}.png"))).collect();
    let mut args = vec!["predict", "--model", s(&model)];
    args.extend(images.iter().map(|p| s(p)));
    let pred_dir = tmp.path().join("pred");
    args.extend_from_slice(&["--out-dir", s(&pred_dir)]);
    ok(&args);
    let preds = read_json(&pred_dir.join("predictions.json"));

    let mut csv = String::from("id,path,price\n");
    for (i, row) in preds.as_array().unwrap().iter().enumerate() {
        csv.push_str(&format!("s{i:05},{},{}\n", row["image"].as_str().unwrap(), row["price"].as_f64().unwrap()));
    }
    let perfect = tmp.path().join("perfect.csv");
    fs::write(&perfect, csv).unwrap();
    let stdout = ok(&["eval", "--model", s(&model), "--manifest", s(&perfect), "--out-dir", s(&tmp.path().join("ev"))]);
    assert!(stdout.contains("r2 = 1.000"), "{stdout}");

    ok(&["eval", "--model", s(&model), "--manifest", s(&data.join("manifest.csv")), "--out-dir", s(&tmp.path().join("ev2"))]);
    assert_eq!(before, snapshot(&data));
}

#[test]
fn each_artifact_directory_holds_one_run_record() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().join("runs");
    for _ in 0..2 {
        ok(&["--out-root", s(&root), "synth", "--n", "3", "--side", "32"]);
    }
    let dirs: Vec<PathBuf> = fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 2);
    for d in &dirs {
        let records = snapshot(d).keys().filter(|k| k.ends_with("run.json")).count();
        assert_eq!(records, 1, "{}", d.display());
        let meta = read_json(&d.join("run.json"));
        assert_eq!(meta["command"], "synth");
        assert!(meta["seeds"]["synth"].is_u64());
        assert!(meta["config"]["train"].is_object());
    }
    let taken = tmp.path().join("taken");
    fs::create_dir(&taken).unwrap();
    fs::write(taken.join("x"), "").unwrap();
    assert_eq!(pricenet(&["synth", "--n", "2", "--out-dir", s(&taken)]).status.code(), Some(1));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "data", 8, 64);
    let model = train_tiny(tmp.path(), &data, "train", &["--width", "0.125"]);
    let image = data.join("images/s00000.png");
    let config = tmp.path().join("run.toml");
    fs::write(&config, "[explain]\nwindow = 16\n").unwrap();

    let rows = |name: &str, pre: &[&str], post: &[&str]| -> (i64, Value) {
        let dir = tmp.path().join(name);
        let mut args: Vec<&str> = pre.to_vec();
        args.extend_from_slice(&["explain", "--model", s(&model), "--image", s(&image), "--method", "occlusion"]);
        args.extend_from_slice(post);
        args.extend_from_slice(&["--out-dir", s(&dir)]);
        ok(&args);
        let side = read_json(&dir.join("explain.json"));
        (side["grid"]["rows"].as_i64().unwrap(), read_json(&dir.join("run.json"))["config"]["explain"].clone())
    };
    let (default_rows, default_cfg) = rows("default", &[], &[]);
    assert_eq!(default_cfg["window"], 28);
    assert_eq!(default_rows, 2);
    let (config_rows, config_cfg) = rows("config", &["--config", s(&config)], &[]);
    assert_eq!((config_rows, config_cfg["window"].as_i64()), (4, Some(16)));
    let (flag_rows, flag_cfg) = rows("flag", &["--config", s(&config)], &["--window", "8"]);
    assert_eq!((flag_rows, flag_cfg["window"].as_i64()), (8, Some(8)));
}

#[test]
fn occlusion_on_paper_layout_gives_an_eight_by_eight_grid() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), "data", 8, 224);
    let model = train_tiny(tmp.path(), &data, "train", &["--layout", "paper", "--width", "0.1", "--val-fraction", "0.25"]);
    let dir = tmp.path().join("explain");
    let image = data.join("images/s00003.png");
    ok(&[
        "explain", "--model", s(&model), "--image", s(&image), "--method", "occlusion", "--window", "28", "--out-dir", s(&dir),
    ]);
    let side = read_json(&dir.join("explain.json"));
    assert_eq!(side["input_side"], 224);
    assert_eq!((side["grid"]["rows"].as_i64(), side["grid"]["cols"].as_i64()), (Some(8), Some(8)));
    assert!(dir.join("heatmap.png").exists());
}
