use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_distorted"));
    c.env_remove("DISTORTED_OUT");
    c
}

fn run(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut c = bin();
    c.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let p = dir.join("config.json");
        std::fs::write(&p, text).unwrap();
        c.arg("--config").arg(p);
    }
    c.output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

fn check<'a>(r: &'a Value, name: &str) -> &'a Value {
    r["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

fn metric(c: &Value, name: &str) -> f64 {
    c["metrics"].as_array().unwrap().iter().find(|m| m["name"] == name).unwrap()["value"].as_f64().unwrap()
}

const SMALL: &str = r#""grid": {"r_max": 40, "n_r": 400, "k_max": 8, "n_k": 64, "l_max": 1}"#;

#[test]
fn free_transform_check_passes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"potential": {{"form": "zero"}}, {SMALL}}}"#);
    let o = run(&["transform-check"], Some(&cfg), d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path());
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["experiment"], "transform-check");
    let c = check(&r, "plancherel_inversion");
    assert_eq!(c["criterion"], 1);
    assert!(metric(c, "plancherel_defect") <= 1e-6);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    assert_eq!(r["config"]["grid"]["n_r"], 400);
    assert!(d.path().join("out/spectrum.csv").exists());
}

#[test]
fn invalid_exponents_fail_before_compute() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["estimates"], Some(r#"{"estimates": {"p": 4, "q": 4, "r": 3}}"#), d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid exponent"));
    assert!(!d.path().join("out").exists());
}

#[test]
fn schema_and_range_validation() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["spectra"], Some(r#"{"grid_spec": {}}"#), d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));

    let tiny = r#"{"grid": {"r_max": 40, "n_r": 100, "k_max": 8, "n_k": 64, "l_max": 0}}"#;
    let o = run(&["spectra"], Some(tiny), d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.n_r"));
    // past validation; the coarse grid may still miss the oracle thresholds
    let o = run(&["spectra", "--unsafe"], Some(tiny), d.path());
    assert_ne!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(d.path())["config"]["unsafe"], true);

    let o = run(&["spectra"], Some(r#"{"experiment": "nls"}"#), d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical_and_cached() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = format!(r#"{{{SMALL}, "seed": 7}}"#);
    for d in [&a, &b] {
        let o = run(&["spectra"], Some(&cfg), d.path());
        assert!(o.status.success());
        assert!(String::from_utf8_lossy(&o.stderr).contains("1 misses"));
    }
    for f in ["delta.csv", "spectrum.json"] {
        assert_eq!(std::fs::read(a.path().join("out").join(f)).unwrap(), std::fs::read(b.path().join("out").join(f)).unwrap());
    }
    let (mut ra, mut rb) = (report(a.path()), report(b.path()));
    ra["created"] = Value::Null;
    rb["created"] = Value::Null;
    assert_eq!(ra, rb);

    let o = run(&["spectra"], Some(&cfg), a.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("1 hits, 0 misses"));

    let s = tempfile::tempdir().unwrap();
    let o = bin().arg("summary").arg(a.path().join("out/report.json")).arg(b.path().join("out/report.json")).arg("--out").arg(s.path()).output().unwrap();
    assert!(o.status.success());
    let text = std::fs::read_to_string(s.path().join("summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    let strip = |r: &Vec<&str>| r.iter().enumerate().filter(|(i, _)| *i != 1).map(|(_, c)| c.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(&rows[0]), strip(&rows[2]));
    assert_eq!(strip(&rows[1]), strip(&rows[3]));
}

#[test]
fn summary_edge_cases() {
    let d = tempfile::tempdir().unwrap();
    let o = bin().arg("summary").arg("--out").arg(d.path()).output().unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(d.path().join("summary.csv")).unwrap(), "run_id,created,experiment,check,criterion,pass,hard,metrics\n");

    let bad = d.path().join("old.json");
    std::fs::write(&bad, r#"{"schema_version": 0, "checks": []}"#).unwrap();
    let o = bin().arg("summary").arg(&bad).arg("--out").arg(d.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema version"));
}

#[test]
fn stage_errors_leave_a_partial_report() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"r_max": 40, "n_r": 800, "k_max": 8, "n_k": 480, "l_max": 0}}"#;
    let o = run(&["mkernel"], Some(cfg), d.path());
    assert_eq!(o.status.code(), Some(1));
    let r = report(d.path());
    assert_eq!(r["partial"], true);
    let err = r["error"].as_str().unwrap();
    assert!(err.contains("stage free M-kernel") && err.contains("memory"), "{err}");
}

#[test]
fn commutators_vanish_only_without_potential() {
    let cfg = |pot: &str| {
        format!(
            r#"{{"potential": {pot}, "estimates": {{"commutator_grid": {{"r_max": 200, "n_r": 4000, "k_max": 12, "n_k": 768, "l_max": 1}},
               "symbols": ["quadratic_ratio"], "holder_dilations": [0, 1]}}}}"#
        )
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&["estimates"], Some(&cfg(r#"{"form": "zero"}"#)), a.path());
    run(&["estimates"], Some(&cfg(r#"{"form": "gaussian", "v0": 1.0, "a": 1.0}"#)), b.path());
    let read = |d: &Path| std::fs::read_to_string(d.join("out/commutator.csv")).unwrap();
    let free: Vec<f64> = read(a.path()).lines().skip(1).flat_map(|l| l.split(',').skip(1).map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect();
    let dist: Vec<f64> = read(b.path()).lines().skip(1).flat_map(|l| l.split(',').skip(1).map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect();
    assert!(free.iter().all(|&x| x == 0.0));
    assert!(dist.iter().all(|&x| x > 0.0 && x.is_finite()));
    assert_eq!(check(&report(b.path()), "commutator")["pass"], true);
}

#[test]
fn nls_default_populates_decay_and_scattering() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["nls"], None, d.path());
    let r = report(d.path());
    let c = check(&r, "nls_run");
    assert_eq!(c["criterion"], 11);
    assert!((metric(c, "slope_p6") + 1.0).abs() <= 0.15);
    assert!((metric(c, "slope_p4") + 0.75).abs() <= 0.15);
    assert!(metric(c, "final_increment") > 0.0);
    assert!(o.status.success(), "{}", serde_json::to_string_pretty(c).unwrap());
    let diag = std::fs::read_to_string(d.path().join("out/diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 202);
}
