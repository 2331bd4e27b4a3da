//! Full acceptance run: every experiment at its default configuration,
//! wall-clock limits for the timed criteria and a byte comparison of a
//! complete rerun. Prints one line per criterion.
//!
//! Takes about fifteen minutes on one core. The summary is written straight
//! to stderr, so it shows in plain `cargo test` output. Run it alone with
//! `cargo test -p wassflow-cli --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use wassflow_cli::config::ExperimentConfig;
use wassflow_cli::experiments::CATALOG;
use wassflow_cli::report::ExperimentReport;

const TIME_LIMITS: [(&str, u8, Duration); 2] =
    [("heat-axioms", 1, Duration::from_secs(30)), ("beta-consistency", 5, Duration::from_secs(300))];

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::from_text(&format!("experiment = {name}\nseed = 0\n")).unwrap()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let mut reports: Vec<ExperimentReport> = Vec::new();
    let mut times = BTreeMap::new();
    let mut identical = Vec::new();
    for name in CATALOG {
        let cfg = config(name);
        let first = tmp.path().join("first").join(name);
        let start = Instant::now();
        let report = wassflow_cli::run(&cfg, &first).unwrap_or_else(|e| panic!("{name}: {e}"));
        times.insert(name, start.elapsed());
        writeln!(std::io::stderr(), "{name}: {:.1} s, passed = {}", start.elapsed().as_secs_f64(), report.passed)
            .unwrap();
        let second = tmp.path().join("second").join(name);
        wassflow_cli::run(&cfg, &second).unwrap_or_else(|e| panic!("{name} rerun: {e}"));
        identical.push((name, tree(&first) == tree(&second)));
        reports.extend(report.experiments);
    }

    let mut lines = Vec::new();
    let mut all = true;
    for criterion in 1..=13u8 {
        let mut notes = Vec::new();
        let mut ok = true;
        if criterion == 13 {
            let bad: Vec<&str> = identical.iter().filter(|(_, same)| !same).map(|(n, _)| *n).collect();
            ok = bad.is_empty();
            notes.push(if ok {
                format!("{} experiments rerun byte-identical", identical.len())
            } else {
                format!("differs: {}", bad.join(", "))
            });
        }
        let mut seen = 0;
        for r in &reports {
            for c in r.checks.iter().filter(|c| c.criterion == criterion) {
                seen += 1;
                ok &= c.passed;
                if !c.passed {
                    notes.push(format!("{}: {} = {:.4e}", r.experiment, c.name, c.value));
                }
            }
        }
        for (name, crit, limit) in TIME_LIMITS {
            if crit == criterion {
                let t = times[name];
                ok &= t < limit;
                notes.push(format!("{name} {:.1} s (limit {} s)", t.as_secs_f64(), limit.as_secs()));
            }
        }
        if criterion != 13 && seen == 0 {
            ok = false;
            notes.push("no checks recorded".into());
        } else if criterion != 13 {
            notes.insert(0, format!("{seen} checks"));
        }
        all &= ok;
        lines.push(format!("criterion {criterion:>2}: {} ({})", if ok { "PASS" } else { "FAIL" }, notes.join("; ")));
    }
    // Written to the raw handle so the summary shows without --nocapture.
    let mut err = std::io::stderr().lock();
    for l in &lines {
        writeln!(err, "{l}").unwrap();
    }
    drop(err);
    assert!(all, "acceptance failures:\n{}", lines.join("\n"));
}
