use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mhe::data::{gen_separable_toy, save_xmlc};
use tempfile::TempDir;

fn mhe() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mhe"));
    cmd.env_remove("MHE_DATA_DIR");
    cmd
}

fn run(args: &[&str]) -> Output {
    mhe().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// Value of a `name<TAB>value` line.
fn field(text: &str, name: &str) -> Option<String> {
    text.lines().find_map(|l| {
        let (k, v) = l.split_once('\t')?;
        (k == name).then(|| v.split('\t').next().unwrap().to_string())
    })
}

fn toy(dir: &TempDir, name: &str, classes: usize, seed: u64) -> PathBuf {
    let path = dir.path().join(name);
    save_xmlc(&gen_separable_toy(classes, 8, 6.0, seed).unwrap(), &path).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_toy(dir: &TempDir, data: &Path, out: &str, extra: &[&str]) -> (Output, PathBuf) {
    let ckpt = dir.path().join(out);
    let mut args = vec!["train", "--data", s(data), "--out", s(&ckpt)];
    args.extend_from_slice(extra);
    for (flag, default) in [("--epochs", "20"), ("--lr", "0.05")] {
        if !extra.contains(&flag) {
            args.extend([flag, default]);
        }
    }
    (run(&args), ckpt)
}

#[test]
fn plan_reports_balanced_heads() {
    let out = run(&["plan", "--classes", "1728000", "--heads", "3", "--strategy", "mhp"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(field(&text, "lengths").unwrap(), "120,120,120");
    assert_eq!(field(&text, "parameters").unwrap(), (360 * 512).to_string());
}

#[test]
fn plan_single_head_and_explicit_lengths() {
    let out = run(&["plan", "--classes", "10", "--heads", "1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(field(&stdout(&out), "lengths").unwrap(), "10");

    let out = run(&["plan", "--classes", "3956", "--heads", "2", "--lengths", "172,23"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "capacity").unwrap(), "3956");
}

#[test]
fn plan_usage_errors_exit_one() {
    assert_eq!(code(&run(&["plan"])), 1);
    assert_eq!(code(&run(&["plan", "--classes", "100", "--lengths", "5,5"])), 1);
    assert_eq!(code(&run(&["plan", "--classes", "10", "--strategy", "tree"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
}

#[test]
fn help_documents_every_subcommand() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for sub in ["plan", "train", "predict", "eval", "oracle-check", "theory", "MHE_DATA_DIR"] {
        assert!(text.contains(sub), "missing {sub}");
    }
    let out = run(&["train", "--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("--emit-metrics"));
}

#[test]
fn train_reaches_full_accuracy_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(&dir, "toy.txt", 16, 1);
    let metrics = dir.path().join("metrics.tsv");
    let (out, a) = train_toy(&dir, &data, "a.ckpt", &["--seed", "4", "--emit-metrics", s(&metrics)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("epoch 20\t"));
    let written = std::fs::read_to_string(&metrics).unwrap();
    assert_eq!(field(&written, "accuracy").unwrap(), "1");

    let (out, b) = train_toy(&dir, &data, "b.ckpt", &["--seed", "4"]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn every_strategy_trains() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(&dir, "toy.txt", 12, 2);
    for (strategy, extra) in [
        ("vanilla", vec![]),
        ("mhc", vec!["--beam-width", "3", "--lr", "0.03"]),
        ("mhs", vec!["--heads", "3", "--sample-heads", "2", "--batch-size", "4", "--lr", "0.2"]),
    ] {
        let mut args = vec!["--strategy", strategy];
        args.extend(extra);
        let (out, _) = train_toy(&dir, &data, strategy, &args);
        assert_eq!(code(&out), 0, "{strategy}: {}", stderr(&out));
        assert_eq!(field(&stdout(&out), "accuracy").unwrap(), "1", "{strategy}");
    }
}

#[test]
fn undersized_plan_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(&dir, "toy.txt", 16, 1);
    let (out, ckpt) = train_toy(&dir, &data, "c.ckpt", &["--lengths", "3,3"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("smaller than"));
    assert!(!stdout(&out).contains("epoch"));
    assert!(!ckpt.exists());
}

#[test]
fn eval_and_predict_on_a_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(&dir, "toy.txt", 16, 1);
    let (_, ckpt) = train_toy(&dir, &data, "m.ckpt", &[]);
    let metrics = dir.path().join("eval.tsv");
    let out = run(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--k", "1,2,5", "--emit-metrics", s(&metrics)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(field(&text, "accuracy").unwrap(), "1");
    for k in ["p@1", "p@2", "p@5"] {
        assert!(field(&text, k).is_some(), "missing {k}");
    }
    assert_eq!(std::fs::read_to_string(metrics).unwrap(), text);

    let out = run(&["predict", "--checkpoint", s(&ckpt), "--data", s(&data), "--top-k", "3"]);
    assert_eq!(code(&out), 0);
    let lines: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 16 * 8);
    // Examples cycle through the classes in order.
    assert!(lines[..16]
        .iter()
        .enumerate()
        .all(|(k, l)| l.split(' ').count() == 3 && l.split(' ').next() == Some(&k.to_string())));
}

#[test]
fn eval_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(&dir, "toy.txt", 16, 1);
    let (out, ckpt) = train_toy(&dir, &data, "m.ckpt", &["--epochs", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let other = toy(&dir, "other.txt", 12, 1);
    let out = run(&["eval", "--checkpoint", s(&ckpt), "--data", s(&other)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("features"));

    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes[..4].copy_from_slice(b"JUNK");
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, bytes).unwrap();
    let out = run(&["eval", "--checkpoint", s(&bad), "--data", s(&data)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("magic"));

    let out = run(&["eval", "--checkpoint", s(&dir.path().join("missing.ckpt")), "--data", s(&data)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn data_dir_variable_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    toy(&dir, "toy.txt", 8, 1);
    let ckpt = dir.path().join("m.ckpt");
    let out = mhe()
        .env("MHE_DATA_DIR", dir.path())
        .args(["train", "--data", "toy.txt", "--out", s(&ckpt), "--epochs", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(&["train", "--data", "toy.txt", "--out", s(&ckpt), "--epochs", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plan.cfg");
    std::fs::write(&cfg, "# planning defaults\nclasses = 1000\nheads = 3\nfeature-dim = 10\n").unwrap();
    let out = run(&["plan", "--config", s(&cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(field(&stdout(&out), "lengths").unwrap(), "10,10,10");
    assert_eq!(field(&stdout(&out), "parameters").unwrap(), "300");

    let out = run(&["plan", "--config", s(&cfg), "--heads", "2"]);
    assert_eq!(field(&stdout(&out), "lengths").unwrap(), "32,32");

    std::fs::write(&cfg, "classes = 10\nepochs = 3\n").unwrap();
    assert_eq!(code(&run(&["plan", "--config", s(&cfg)])), 1);
    assert_eq!(code(&run(&["plan", "--config", s(&dir.path().join("none.cfg"))])), 2);
}

#[test]
fn oracle_check_passes_and_guards_capacity() {
    let out = run(&["oracle-check", "--trials", "1000", "--max-heads", "4", "--max-length", "8", "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("1000 agree"));

    let out = run(&["oracle-check", "--trials", "0"]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("warning"));

    let out = run(&["oracle-check", "--trials", "100", "--inject-ties"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("10 ties skipped"), "{}", stdout(&out));
    assert!(stdout(&out).contains("0 disagree"));

    assert_eq!(code(&run(&["oracle-check", "--max-heads", "4", "--max-length", "40"])), 1);
}

#[test]
fn theory_theorem4_holds() {
    let out = run(&["theory", "theorem4", "--trials", "100"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("holds: 100/100"));
}

#[test]
fn theory_saddle_restarts_agree() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("saddle.tsv");
    let out = run(&["theory", "saddle", "--seed", "2", "--out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(report).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 11);
}

#[test]
fn theory_fig5_cross_entropy_beats_frobenius() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("ce.tsv");
    let out = run(&["theory", "fig5", "--loss", "ce", "--out", s(&traj)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(traj).unwrap();
    let last: Vec<&str> = text.lines().last().unwrap().split('\t').collect();
    assert_eq!(last[0], "30000");
    assert!(last[1].parse::<f64>().unwrap() >= 0.95, "{text}");

    let traj = dir.path().join("fro.tsv");
    let out = run(&["theory", "fig5", "--loss", "frobenius", "--out", s(&traj)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(traj).unwrap();
    let acc: f64 = text.lines().last().unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!(acc <= 0.2, "{text}");
}

#[test]
fn theory_rejects_unknown_experiments() {
    assert_eq!(code(&run(&["theory", "theorem9"])), 1);
}
