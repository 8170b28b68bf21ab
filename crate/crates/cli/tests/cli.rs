//! Command-line behaviour: help, exit codes and reproducible outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hscmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hscmt")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for class in fs::read_dir(dir).unwrap() {
        let class = class.unwrap().path();
        if !class.is_dir() {
            continue;
        }
        for f in fs::read_dir(&class).unwrap() {
            let f = f.unwrap().path();
            out.push((f.strip_prefix(dir).unwrap().display().to_string(), fs::read(&f).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn every_command_has_help() {
    for cmd in ["train", "eval", "features", "gradcheck", "synth"] {
        let out = hscmt(&[cmd, "--help"]);
        assert!(out.status.success(), "{cmd} --help failed");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn missing_or_ambiguous_data_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hscmt(&["train", "--preset", "micro", "--epochs", "1", "--out", p(&dir.path().join("a"))]);
    assert_eq!(out.status.code(), Some(2));
    let missing = dir.path().join("does-not-exist");
    let out = hscmt(&["train", "--preset", "micro", "--data", p(&missing), "--out", p(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = hscmt(&["train", "--preset", "micro", "--data", p(&missing), "--synthetic", "4", "--out", p(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_reproducible_and_class_balanced() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert!(hscmt(&["synth", "--n", "3", "--size", "32", "--seed", "11", "--out", p(d)]).status.success());
    }
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 12);
    assert_eq!(fa, fb);
}

#[test]
fn completed_run_directory_is_refused_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let args = ["train", "--preset", "micro", "--synthetic", "4", "--epochs", "0", "--out", p(&out_dir)];
    assert!(hscmt(&args).status.success());
    assert_eq!(hscmt(&args).status.code(), Some(2));
    assert!(hscmt(&[&args[..], &["--force"]].concat()).status.success());
}

#[test]
fn eval_rejects_class_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert!(hscmt(&["train", "--preset", "micro", "--synthetic", "4", "--epochs", "0", "--out", p(&run)]).status.success());
    let data = dir.path().join("data");
    assert!(hscmt(&["synth", "--n", "2", "--size", "32", "--out", p(&data)]).status.success());
    fs::remove_dir_all(data.join("ring")).unwrap();
    let out = hscmt(&["eval", "--checkpoint", p(&run.join("last")), "--data", p(&data), "--split", "all", "--out", p(&dir.path().join("e"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
