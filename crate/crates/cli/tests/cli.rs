use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_orderness"));
    c.env_remove("ORDERNESS_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn mnist() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-5k")
}

fn gen(dir: &Path, kind: &str, n: &str, size: &str) -> PathBuf {
    let out = dir.join(kind);
    let o = run(&["gen-fixture", "--kind", kind, "--n", n, "--size", size, "--seed", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn so_column(csv: &str) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn diffusion_fixture_orderness_is_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "diffusion", "50", "32");
    let out = dir.path().join("so.csv");
    let o = run(&["orderness", "--data", data.to_str().unwrap(), "--scales", "1", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("seed: 3"));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("scale,so,d_one,d_two,n_triples,seed\n"));
    let so = so_column(&csv);
    assert_eq!(so.len(), 1);
    assert!((0.9..1.1).contains(&so[0]), "so {}", so[0]);

    let again = dir.path().join("again.csv");
    run(&["orderness", "--data", data.to_str().unwrap(), "--scales", "1", "--seed", "3", "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn null_fixtures_and_env_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "const-plus-noise", "200", "24");
    let o = bin()
        .env("ORDERNESS_SEED", "77")
        .args(["orderness", "--data", data.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("seed: 77\n"));
    let csv = stdout.split_once('\n').unwrap().1;
    let so = so_column(csv);
    assert_eq!(so.len(), 8);
    // the coarsest scales see only a 3x3 grid per image
    assert!(so.iter().all(|v| v.abs() < 0.15), "{so:?}");
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(run(&["orderness", "--data", missing.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(run(&["orderness", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));

    // a constant image set has a zero one-hop difference at every scale
    let data = dir.path().join("flat");
    fs::create_dir_all(&data).unwrap();
    let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 6, 0, 0, 0, 6];
    images.extend(std::iter::repeat_n(128u8, 2 * 36));
    fs::write(data.join("images.idx"), images).unwrap();
    fs::write(data.join("labels.idx"), [0, 0, 8, 1, 0, 0, 0, 2, 0, 1]).unwrap();
    let o = run(&["orderness", "--data", data.to_str().unwrap(), "--scales", "1,2"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scale 1"));

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"experiment": "no_such_thing", "seed": 1, "dataset": {"path": "x"}}"#).unwrap();
    let o = run(&["experiment", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("t.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("orderness_vs_swap"));
}

#[test]
fn swap_zero_is_identity_and_records_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "iid", "10", "12");
    let out = dir.path().join("swapped");
    let o = run(&["swap", "--data", data.to_str().unwrap(), "--block-size", "3", "--swaps", "0", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("histograms preserved"));
    let a = fs::read(data.join("images.idx")).unwrap();
    assert_eq!(a, fs::read(out.join("images.idx")).unwrap());

    let out2 = dir.path().join("swapped2");
    let o = run(&["swap", "--data", data.to_str().unwrap(), "--block-size", "3", "--swaps", "7", "--seed", "4", "--out", out2.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(a, fs::read(out2.join("images.idx")).unwrap());
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(out2.join("provenance.json")).unwrap()).unwrap();
    assert_eq!((prov["k"].as_u64(), prov["Ns"].as_u64(), prov["seed"].as_u64()), (Some(3), Some(7), Some(4)));

    let o = run(&["swap", "--data", data.to_str().unwrap(), "--block-size", "7", "--swaps", "1", "--out", out2.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn train_job(dir: &Path, lr: f64, epochs: usize) -> PathBuf {
    let cfg = dir.join("job.json");
    let text = format!(
        r#"{{"seed": 9, "depth": 2,
            "dataset": {{"path": {:?}, "subset": 60, "val_size": 40}},
            "model": {{"width": 4}},
            "train": {{"learning_rate": {lr}, "epochs": {epochs}, "batch_size": 10, "probe_size": 20, "probe_triples": 2000}}}}"#,
        mnist().to_str().unwrap()
    );
    fs::write(&cfg, text).unwrap();
    cfg
}

#[test]
fn train_writes_log_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = train_job(dir.path(), 0.05, 3);
    let log = dir.path().join("log.csv");
    let ckpt = dir.path().join("model.json");
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--out", log.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("seed: 9") && stdout.contains("val_acc"));
    let text = fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,loss,val_acc,fm_so_layer_1,fm_so_layer_2,kernel_so_layer_1,kernel_so_layer_2");
    assert_eq!(lines.len(), 4);
    assert!(ckpt.is_file());

    let log2 = dir.path().join("log2.csv");
    run(&["train", "--config", cfg.to_str().unwrap(), "--out", log2.to_str().unwrap()]);
    assert_eq!(text, fs::read_to_string(&log2).unwrap());
}

#[test]
fn diverged_training_exits_five_with_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    // the step overflows f32, so the weights turn non-finite
    let cfg = train_job(dir.path(), 1e300, 5);
    let log = dir.path().join("log.csv");
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--out", log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&log).unwrap().starts_with("epoch,loss"));
}

#[test]
fn experiment_writes_table_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(
        &cfg,
        r#"{"experiment": "orderness_vs_swap", "seed": 2,
            "dataset": {"fixture": {"kind": "diffusion", "n": 30, "size": 18, "sigma": 0.1, "seed": 1}},
            "swap": {"block_size": 3, "n_swaps": [0, 15]}, "triples": 5000}"#,
    )
    .unwrap();
    let out = dir.path().join("res/table.csv");
    let o = run(&["experiment", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("seed: 8") && stdout.contains("rel_drop_scale3="));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("ns,scale,so,d_one,d_two,n_triples\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 6);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("res/table.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 8);
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
}
