use std::path::Path;
use std::process::{Command, Output};

fn emph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emph")).args(args).output().expect("emph runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(emph(&["synth", "--kind", "four-class"]).status.code(), Some(1));
    assert_eq!(emph(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(emph(&["train", "--synth", "two-class", "--epochs", "many"]).status.code(), Some(1));
    assert_eq!(emph(&["eval", "--checkpoint", "/nonexistent/checkpoint.json"]).status.code(), Some(1));
    assert_eq!(emph(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_reproduces_train_test_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let train = emph(&[
        "train", "--synth", "two-class", "--count", "20", "--modes", "1,5", "--epochs", "60",
        "--sigma", "0.3", "--hidden", "8", "--out", out_s,
    ]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let metrics = read_json(&out.join("metrics.json"));
    for name in ["trajectory.csv", "report.json", "checkpoint.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let ck = out.join("checkpoint.json");
    let eval = json(&emph(&[
        "eval", "--synth", "two-class", "--count", "20", "--checkpoint", ck.to_str().unwrap(),
    ]));
    assert_eq!(eval["test_accuracy"], metrics["test_accuracy"]);
    assert_eq!(eval["test_size"], metrics["test_size"]);
    let rows = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 61);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let data = dir.path().join("data.csv");
    let synth = emph(&["synth", "--kind", "three-class", "--count", "6", "--out", data.to_str().unwrap()]);
    assert!(synth.status.success());
    std::fs::write(
        &cfg,
        format!(
            "input = {}\nmodes = 1,2\nsegments = 2\nepochs = 3\nhidden = 4\nout = {}\n",
            data.display(),
            dir.path().join("o").display()
        ),
    )
    .unwrap();
    let out = emph(&["train", "--config", cfg.to_str().unwrap(), "--epochs", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = read_json(&dir.path().join("o").join("metrics.json"));
    assert_eq!(metrics["epochs"], 7);
    assert_eq!(metrics["directions"].as_array().unwrap().len(), 2);
    assert_eq!(metrics["train_size"].as_u64().unwrap() + metrics["test_size"].as_u64().unwrap(), 24);

    std::fs::write(&cfg, "epochs = 3\nwarp = 9\n").unwrap();
    let bad = emph(&["train", "--synth", "two-class", "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2"));
}

#[test]
fn barcode_and_image_csv() {
    let out = emph(&["barcode", "--radii", "1,1", "--modes", "1,2", "--dimension", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row,dimension,birth,death,composition"));
    assert_eq!(lines.count(), 2);

    let out = emph(&["image", "--synth", "two-class", "--count", "4", "--row", "0", "--resolution", "4", "--sigma", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.split(',').count() == 4));
}

#[test]
fn multipers_demo_matches_worked_example() {
    let v = json(&emph(&["multipers-demo"]));
    let image: Vec<f64> = v["image"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let want = [0.06639, 0.31456, 0.31456, 0.39284];
    assert!(image.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-4), "{image:?}");
    assert_eq!(v["landscape"], serde_json::json!([0.0, 0.0, 0.0, 1.0]));
    let hull = json(&emph(&["multipers-demo", "--area", "hull"]));
    assert_ne!(hull["image"], v["image"]);
    assert_eq!(emph(&["multipers-demo", "--area", "blob"]).status.code(), Some(1));
}

#[test]
fn crossval_reports_every_cell() {
    let v = json(&emph(&[
        "crossval", "--synth", "two-class", "--count", "10", "--modes", "1,5", "--epochs", "5",
        "--hidden", "4", "--folds", "2", "--grid-sigma", "0.5,1", "--grid-segments", "1,2",
    ]));
    assert_eq!(v["crossval"]["cells"].as_array().unwrap().len(), 4);
    assert!(v["crossval"]["best"].as_u64().unwrap() < 4);
}
