use std::path::Path;
use std::process::{Command, Output};

fn dg_resmin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dg-resmin")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_shows_every_case() {
    let o = dg_resmin(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["case1", "case2", "case3", "manufactured"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing from\n{text}");
    }
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dg_resmin(&["run", "case1", "--out-dir", out, "--threads", "1", "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let case = dir.path().join("case1");
    for f in ["violations.csv", "cross_section.csv", "solution.vtk", "newton_log.csv", "metadata.txt"] {
        assert!(case.join(f).is_file(), "{f} missing");
    }
    let meta = std::fs::read_to_string(case.join("metadata.txt")).unwrap();
    assert!(meta.lines().any(|l| l == "seed = 7"), "{meta}");
    let text = stdout(&o);
    assert!(text.contains("violation"));
}

#[test]
fn flags_and_config_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "p = 2\ntol = 1e-4\n[penalty]\nupper_sign = \"printed\"\n").unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dg_resmin(&[
        "run",
        "case1",
        "--config",
        cfg.to_str().unwrap(),
        "--no-penalty",
        "--inflow",
        "coercive",
        "--out-dir",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = std::fs::read_to_string(Path::new(out).join("case1/metadata.txt")).unwrap();
    let get = |key: &str| {
        meta.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
            .unwrap_or_default()
    };
    assert_eq!(get("degree"), "2");
    assert_eq!(get("penalty"), "false");
    assert_eq!(get("inflow"), "coercive");
    assert_eq!(get("upper_sign"), "printed");
}

#[test]
fn study_writes_table_and_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dg_resmin(&["study", "manufactured", "--levels", "3", "--out-dir", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("manufactured/study.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(dir.path().join("manufactured/slopes.txt").is_file());
    assert!(stdout(&o).contains("slopes"));
}

#[test]
fn bad_input_fails_cleanly() {
    for args in [
        &["run", "nope"][..],
        &["run", "case1", "--theta-mark", "0"],
        &["run", "case1", "--upper-sign", "sideways"],
        &["study", "case1", "--mode", "random"],
    ] {
        let o = dg_resmin(args);
        assert!(!o.status.success(), "{args:?} succeeded");
    }
    let o = dg_resmin(&["run", "nope"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("case1"));
}
