use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mflang() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mflang"));
    cmd.env_remove("MFLANG_OUT_DIR");
    cmd
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// A shipped config with some top-level fields replaced, written to `dir`.
fn variant(name: &str, dir: &Path, edits: serde_json::Value) -> PathBuf {
    let mut value: serde_json::Value =
        serde_json::from_slice(&std::fs::read(configs().join(name)).unwrap()).unwrap();
    for (k, v) in edits.as_object().unwrap() {
        value[k] = v.clone();
    }
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    mflang().args(args).output().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn help_exits_cleanly() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("kinetic-constants"));
}

#[test]
fn kinetic_constants_prints_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("unitfields.json");
    let out = run(&[
        "kinetic-constants",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("eta0 = 0.26794919"), "{text}");
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn mismatched_subcommand_and_missing_files_are_errors() {
    let cfg = configs().join("unitfields.json");
    let out = run(&["poc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kinetic-constants"));

    let out = run(&["poc", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_criteria_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(
        "fixed_point_lq.json",
        dir.path(),
        serde_json::json!({ "fixed_point": { "max_iter": 2 } }),
    );
    let out = run(&[
        "fixed-point",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["pass"], false);
}

#[test]
fn output_directory_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let cfg = configs().join("unitfields.json");
    let out = mflang()
        .env("MFLANG_OUT_DIR", &target)
        .args(["kinetic-constants", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("summary.json").exists());
}

fn small_contraction(dir: &Path) -> PathBuf {
    variant(
        "contraction.json",
        dir,
        serde_json::json!({ "n": 300, "horizon": 0.5, "replicas": 3 }),
    )
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_contraction(dir.path());
    let outs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("run{k}"))).collect();
    for out in &outs {
        let o = run(&[
            "contraction",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert_eq!(files(&outs[0]), files(&outs[1]));

    let other = dir.path().join("seed8");
    run(&[
        "contraction",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert_ne!(
        std::fs::read(outs[0].join("trace_coupled.csv")).unwrap(),
        std::fs::read(other.join("trace_coupled.csv")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_contraction(dir.path());
    let mut results = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = run(&[
            "contraction",
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        results.push(files(&out));
    }
    assert_eq!(results[0], results[1]);
}
