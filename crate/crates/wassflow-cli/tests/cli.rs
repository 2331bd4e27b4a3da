use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wassflow_cli::experiments::CATALOG;

fn wassflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wassflow")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const HEAT: &str = "experiment = heat-axioms\nseed = 7\n\n[manifold]\nkind = flat-torus\nresolution = 12\nside = 1.0\n\n[params]\nsamples = 4\n";

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn heat_axioms_run_writes_tables_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), HEAT);
    let o = wassflow(&["run", &cfg, "--out", "out"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("out");
    for t in ["mass", "symmetry", "semigroup"] {
        let text = fs::read_to_string(out.join("heat-axioms").join(format!("{t}.csv"))).unwrap();
        // Header plus 2 dilatons x 4 samples.
        assert_eq!(text.lines().count(), 9, "{t}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["seed"], 7);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiments"][0]["params"]["samples"], 4.0);
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), HEAT);
    assert!(wassflow(&["run", &cfg, "--out", "a"], tmp.path()).status.success());
    assert!(wassflow(&["run", &cfg, "--out", "b", "--threads", "1"], tmp.path()).status.success());
    assert_eq!(files(&tmp.path().join("a")), files(&tmp.path().join("b")));
}

#[test]
fn time_below_t_min_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{HEAT}\n[schedule]\nt = 1e-9, 1e-3\n"));
    let o = wassflow(&["run", &cfg, "--out", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_min"), "{}", stderr(&o));
}

#[test]
fn unknown_experiment_lists_valid_names() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "experiment = heat-axiom\n");
    let o = wassflow(&["run", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for name in CATALOG {
        assert!(e.contains(name), "{name} missing from: {e}");
    }
}

#[test]
fn unknown_tolerance_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), HEAT);
    let o = wassflow(&["run", &cfg, "--tol-override", "varadhan=0.1"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("varadhan"));
}

#[test]
fn failed_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), HEAT);
    let o = wassflow(&["run", &cfg, "--out", "out", "--tol-override", "mass=1e-300"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL heat-axioms"));
}

#[test]
fn list_prints_catalog() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wassflow(&["list"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 13);
    for name in CATALOG {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}");
    }
}

#[test]
fn help_mentions_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wassflow(&["--help"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("run") && text.contains("list"));
}
