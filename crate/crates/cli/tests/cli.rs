use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn subset(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset").join(file)
}

fn bs4nn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bs4nn")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn test_args(model: &Path) -> Vec<String> {
    let (i, l) = (subset("t10k-images-idx3-ubyte.gz"), subset("t10k-labels-idx1-ubyte.gz"));
    ["--model", s(model), "--test-images", s(&i), "--test-labels", s(&l), "--limit-test", "40"]
        .iter()
        .map(|x| x.to_string())
        .collect()
}

/// Trains a small model once per test that needs one.
fn train(dir: &Path) -> PathBuf {
    let out = dir.join("run");
    let (ti, tl) = (subset("train-images-idx3-ubyte.gz"), subset("train-labels-idx1-ubyte.gz"));
    let (vi, vl) = (subset("t10k-images-idx3-ubyte.gz"), subset("t10k-labels-idx1-ubyte.gz"));
    ok(&bs4nn(&[
        "train", "--train-images", s(&ti), "--train-labels", s(&tl), "--test-images", s(&vi), "--test-labels",
        s(&vl), "--limit-train", "60", "--limit-test", "30", "--epochs", "2", "--hidden", "40", "--out", s(&out),
    ]));
    out
}

#[test]
fn train_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = train(dir.path());
    for f in ["checkpoint.bs4n", "model.bs4n", "history.csv", "run_config.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,train_acc,test_acc,eta,mu,wall_seconds");
    assert_eq!(lines.len(), 3);
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(config["architecture"], serde_json::json!([784, 40, 10]));
    assert_eq!(config["train"]["epochs"], 2);
}

#[test]
fn deployment_and_checkpoint_evaluate_identically() {
    let dir = tempfile::tempdir().unwrap();
    let run = train(dir.path());
    let eval = |m: &str, out: &Path| {
        let mut args = vec!["eval".to_string()];
        args.extend(test_args(&run.join(m)));
        args.extend(["--out".into(), s(out).into()]);
        ok(&bs4nn(&args.iter().map(String::as_str).collect::<Vec<_>>()))
    };
    let a = eval("checkpoint.bs4n", &dir.path().join("a"));
    let b = eval("model.bs4n", &dir.path().join("b"));
    assert_eq!(a, b);
    for f in ["summary.csv", "confusion.csv", "firing_times.csv", "spike_counts.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn sweep_default_range_has_41_rows() {
    let dir = tempfile::tempdir().unwrap();
    let run = train(dir.path());
    let mut args = vec!["sweep".to_string()];
    args.extend(test_args(&run.join("model.bs4n")));
    let csv = ok(&bs4nn(&args.iter().map(String::as_str).collect::<Vec<_>>()));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta,accuracy,mean_response_time");
    assert_eq!(lines.len(), 42);
}

#[test]
fn noise_inspect_and_encode_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = train(dir.path());
    let mut args = vec!["noise".to_string()];
    args.extend(test_args(&run.join("model.bs4n")));
    args.extend(["--levels".into(), "0,1".into()]);
    let csv = ok(&bs4nn(&args.iter().map(String::as_str).collect::<Vec<_>>()));
    assert_eq!(csv.lines().count(), 3);

    let maps = dir.path().join("maps");
    let text = ok(&bs4nn(&["inspect", "--model", s(&run.join("checkpoint.bs4n")), "--maps-out", s(&maps), "--maps", "3"]));
    assert!(text.contains("ratio"));
    assert_eq!(fs::read_dir(&maps).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm")).count(), 6);

    let csv = ok(&bs4nn(&["encode", "--images", s(&subset("t10k-images-idx3-ubyte.gz")), "--index", "0"]));
    assert_eq!(csv.lines().count(), 785);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bs4nn(&["train"]).status.code(), Some(1));
    assert_eq!(bs4nn(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("nope.bs4n");
    assert_eq!(bs4nn(&["inspect", "--model", s(&missing)]).status.code(), Some(2));
    let garbage = dir.path().join("garbage.bs4n");
    fs::write(&garbage, b"not a model").unwrap();
    assert_eq!(bs4nn(&["inspect", "--model", s(&garbage)]).status.code(), Some(2));
    let (ti, tl) = (subset("train-images-idx3-ubyte.gz"), subset("train-labels-idx1-ubyte.gz"));
    let bad_theta = bs4nn(&[
        "train", "--train-images", s(&ti), "--train-labels", s(&tl), "--theta", "-1", "--epochs", "1", "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(bad_theta.status.code(), Some(1));
}
