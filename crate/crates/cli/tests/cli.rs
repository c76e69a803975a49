use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "nx=16\nny=8\nm=12\nT=0.1\nh=0.01\nnoise_modes=4\nsnapshots=true\nchecks=mass,friction\n";

fn slipns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slipns"))
        .args(args)
        .env_remove("SLIPNS_WORKERS")
        .output()
        .expect("spawn slipns")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_artifacts_and_checks_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.txt", SMALL);
    let out = tmp.path().join("run");
    let o = slipns(&["run", "--config", &cfg, "--seed", "3", "--paths", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.txt", "path_0000.csv", "path_0001.csv", "summary.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let s = summary(&out);
    assert_eq!(s["n_paths"], 2);
    assert_eq!(s["hard_failure"], false);
    assert_eq!(s["paths"][1]["seed"], 4);
    let header = fs::read_to_string(out.join("path_0000.csv")).unwrap();
    assert!(header.starts_with("step,t,mass,"));
    assert_eq!(header.lines().count(), 1 + 11);

    for suite in ["energy", "mass", "friction", "weakforms", "ops"] {
        let c = slipns(&["check", "--record", out.to_str().unwrap(), "--suite", suite]);
        assert!(
            matches!(c.status.code(), Some(0) | Some(2)),
            "suite {suite}: {:?} {}",
            c.status,
            String::from_utf8_lossy(&c.stderr)
        );
        let report: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
        assert!(report.is_object());
    }
    let m = slipns(&["check", "--record", out.to_str().unwrap(), "--suite", "mass"]);
    assert_eq!(m.status.code(), Some(0));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.txt", SMALL);
    let mut dumps = Vec::new();
    for i in 0..2 {
        let out = tmp.path().join(format!("r{i}"));
        let o = slipns(&["run", "--config", &cfg, "--seed", "9", "--paths", "2", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        let mut files: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_owned(), fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        dumps.push((files, o.stdout));
    }
    assert!(dumps[0] == dumps[1]);
}

#[test]
fn sweep_over_alpha_records_each_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.txt", SMALL);
    let out = tmp.path().join("sweep");
    let o = slipns(&[
        "sweep", "--config", &cfg, "--param", "alpha", "--values", "0.1,0.01", "--out", out.to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("sweep.json").exists());
    assert!(out.join("value_00.csv").exists() && out.join("value_01.csv").exists());
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.txt", SMALL);
    let out = tmp.path().join("sweep");
    let o = slipns(&["sweep", "--config", &cfg, "--param", "colour", "--values", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.txt", "nx=16\nny=8\ngamma=0.5\nbogus_key=1\n");
    let o = slipns(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bogus_key"), "{err}");
    assert!(!tmp.path().join("o").join("summary.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(slipns(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(slipns(&["check", "--record", ".", "--suite", "nope"]).status.code(), Some(1));
    assert_eq!(slipns(&["--help"]).status.code(), Some(0));
}

#[test]
fn injected_cfl_violation_is_a_hard_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "fault.txt",
        "nx=16\nny=8\nm=12\nT=0.5\nh=0.05\ncfl=1000000\nu0_amp=20\nnoise_modes=4\n",
    );
    let out = tmp.path().join("fault");
    let o = slipns(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let s = summary(&out);
    assert_eq!(s["hard_failure"], true);
    assert_eq!(s["exit_code"], 3);
    let failure = &s["paths"][0]["failure"];
    assert_eq!(failure["step"], 0);
    assert!(failure["error"].as_str().unwrap().contains("non-positive density"));
}

#[test]
fn soft_check_failure_exits_two_with_complete_artifacts() {
    // the explicit step's O(h) energy production makes the ensemble margin negative
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "energy.txt", &SMALL.replace("checks=mass,friction", "checks=energy,mass"));
    let out = tmp.path().join("run");
    let o = slipns(&["run", "--config", &cfg, "--seed", "3", "--paths", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let s = summary(&out);
    assert_eq!(s["hard_failure"], false);
    assert_eq!(s["checks"]["energy"]["inequality_holds"], false);
    assert_eq!(s["checks"]["energy"]["envelope_holds"], true);
}
