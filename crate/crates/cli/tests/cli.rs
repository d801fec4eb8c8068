use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsa"))
        .args(args)
        .output()
        .expect("failed to start qsa")
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> Vec<u8> {
    let path = dir.join(name);
    let mut full: Vec<&str> = args.to_vec();
    let p = path.to_str().unwrap().to_string();
    full.extend(["--out", &p]);
    let out = qsa(&full);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    fs::read(&path).unwrap()
}

const SUBCOMMANDS: [&[&str]; 4] = [
    &[
        "nmse",
        "--dim",
        "128",
        "--clients",
        "1,4",
        "--trials",
        "2",
        "--seed",
        "5",
    ],
    &[
        "train", "--rounds", "3", "--seed", "5", "--attack", "--defend",
    ],
    &[
        "defense", "--rounds", "3", "--seed", "5", "--format", "json",
    ],
    &["cost", "--clients", "20,100"],
];

#[test]
fn identical_flags_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for (k, args) in SUBCOMMANDS.iter().enumerate() {
        let a = run_to(dir.path(), &format!("a{k}"), args);
        let b = run_to(dir.path(), &format!("b{k}"), args);
        assert!(!a.is_empty());
        assert_eq!(a, b, "{args:?}");
    }
}

#[test]
fn seed_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_to(
        dir.path(),
        "a",
        &[
            "nmse",
            "--dim",
            "64",
            "--clients",
            "3",
            "--trials",
            "1",
            "--seed",
            "1",
        ],
    );
    let b = run_to(
        dir.path(),
        "b",
        &[
            "nmse",
            "--dim",
            "64",
            "--clients",
            "3",
            "--trials",
            "1",
            "--seed",
            "2",
        ],
    );
    assert_ne!(a, b);
}

#[test]
fn nmse_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(run_to(dir.path(), "n.csv", SUBCOMMANDS[0])).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "scheme,scales,mode,d,n,trials,nmse_mean,nmse_stderr"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("SQ,global,exact/global,128,1,2,"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "[experiment]\nscheme = \"KSQ\"\nscales = \"local\"\napproach = \"III\"\ndims = [64]\nclients = [2]\ntrials = 1\n\n[output]\nformat = \"json\"\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let text = String::from_utf8(run_to(
        dir.path(),
        "o",
        &["nmse", "--config", c, "--clients", "3"],
    ))
    .unwrap();
    assert!(text.trim_start().starts_with('['));
    assert!(text.contains("\"scheme\": \"KSQ\""));
    assert!(text.contains("\"mode\": \"exact/III\""));
    assert!(text.contains("\"n\": 3"));
}

#[test]
fn self_check_passes() {
    let out = qsa(&["--self-check", "cost"]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.lines().filter(|l| l.starts_with("PASS")).count() >= 7,
        "{err}"
    );
    assert!(!err.contains("FAIL"));
}

#[test]
fn invalid_settings_fail() {
    assert!(!qsa(&["nmse", "--scales", "local", "--approach", "global"])
        .status
        .success());
    assert!(!qsa(&["nmse", "--scheme", "PQ"]).status.success());
    assert!(!qsa(&["nmse", "--trials", "0"]).status.success());
    assert!(!qsa(&["nmse", "--config", "/nonexistent/c.toml"])
        .status
        .success());
    assert!(!qsa(&["cost", "--out", "/nonexistent-dir/x.csv"])
        .status
        .success());
}
