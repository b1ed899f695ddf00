use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qdgf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdgf"))
        .current_dir(dir)
        .env_remove("QDGF_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn tail_of_two_mode_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qdgf(tmp.path(), &["tail", "--kind", "complex", "--eigs", "2,1", "--u", "1", "--mc-draws", "0", "--out-dir", "t"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&tmp.path().join("t/tail.csv"));
    assert_eq!(r[0], ["u", "P_inversion", "P_closed_form", "P_mc", "mc_sigma", "lower_bound", "C1"]);
    let closed: f64 = r[1][2].parse().unwrap();
    let inv: f64 = r[1][1].parse().unwrap();
    let exact = 2.0 * (-0.5f64).exp() - (-1.0f64).exp();
    assert!((closed - exact).abs() < 1e-12, "{closed}");
    assert!((inv - exact).abs() < 1e-9, "{inv}");
    let m = manifest(&tmp.path().join("t"));
    assert_eq!(m["experiment"], "tail");
    assert_eq!(m["outputs"], serde_json::json!(["tail.csv"]));
}

#[test]
fn exemplar_point_writes_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qdgf(tmp.path(), &["exemplar-point", "--out-dir", "e"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("e");
    let spec = rows(&dir.join("spectrum.csv"));
    assert_eq!(spec[0], ["index", "branch", "eigenvalue", "cluster_id"]);
    let top: f64 = spec[1][2].parse().unwrap();
    assert!((top - 1.0).abs() < 1e-9, "{top}");
    let profile = qdgf_core::io::load_field(dir.join("profile.csv"), None).unwrap();
    assert_eq!(profile.grid().points_per_axis(), &[61]);
    let cmp: Value = serde_json::from_str(&fs::read_to_string(dir.join("comparison.json")).unwrap()).unwrap();
    assert!(cmp.is_object());
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.json"), r#"{"sigmaa": 2.0}"#).unwrap();
    let o = qdgf(tmp.path(), &["--config", "bad.json", "exemplar-point", "--out-dir", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigmaa"), "{}", stderr(&o));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn invalid_values_are_configuration_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["exemplar-point", "--points", "60", "--out-dir", "x"][..],
        &["tail", "--out-dir", "x"][..],
        &["--workers", "0", "tail", "--eigs", "1", "--u", "1", "--out-dir", "x"][..],
    ] {
        let o = qdgf(tmp.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!tmp.path().join("x").exists(), "{args:?}");
    }
}

#[test]
fn config_experiment_must_match_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"experiment": "tail", "eigs": [1], "u": [1]}"#).unwrap();
    let o = qdgf(tmp.path(), &["--config", "c.json", "spectrum", "--out-dir", "x"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qdgf(tmp.path(), &["--config", "c.json", "run", "--mc-draws", "0", "--out-dir", "x"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("x/tail.csv").exists());
}

#[test]
fn numerical_failure_rolls_back() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qdgf(
        tmp.path(),
        &["condition", "--u", "1000", "--method", "rejection", "--samples", "10", "--out-dir", "deep/run"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!tmp.path().join("deep").exists());
}

#[test]
fn flags_override_config_and_are_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"sigma": 0.5, "points": 41, "seed": 3}"#).unwrap();
    let o = qdgf(tmp.path(), &["--config", "c.json", "spectrum", "--sigma", "0.7", "--out-dir", "s"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&tmp.path().join("s"));
    assert_eq!(m["config"]["sigma"], 0.7);
    assert_eq!(m["config"]["points"], 41);
    assert_eq!(m["seed"], 3);
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qdgf"))
        .current_dir(tmp.path())
        .env("QDGF_OUT_DIR", "from-env")
        .args(["tail", "--eigs", "1", "--u", "1", "--mc-draws", "0"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("from-env/tail.csv").exists());
}

#[test]
fn concentration_is_deterministic_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["concentration", "--samples", "200", "--seed", "11"];
    let a = qdgf(tmp.path(), &[&["--workers", "1"][..], &common, &["--out-dir", "a"]].concat());
    let b = qdgf(tmp.path(), &[&["--workers", "3"][..], &common, &["--out-dir", "b"]].concat());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    let ca = fs::read(tmp.path().join("a/concentration.csv")).unwrap();
    let cb = fs::read(tmp.path().join("b/concentration.csv")).unwrap();
    assert_eq!(ca, cb);
    let r = rows(&tmp.path().join("a/concentration.csv"));
    assert_eq!(r[0], ["u", "method", "epsilon", "p_exceed", "p_err", "ess", "median_D", "frac_below_eps"]);
    assert_eq!(r.len(), 6);
}

#[test]
fn sample_fields_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qdgf(tmp.path(), &["sample", "--samples", "3", "--out-dir", "s"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = rows(&tmp.path().join("s/samples.csv"));
    assert_eq!(r.len(), 4);
    for (i, row) in r[1..].iter().enumerate() {
        let f = qdgf_core::io::load_field(tmp.path().join(format!("s/fields/sample_{i:05}.csv")), None).unwrap();
        let q: f64 = row[1].parse().unwrap();
        let v = f.value(f.grid().origin(), 0);
        assert!((v.norm_sqr() - q).abs() < 1e-8 * q.max(1.0), "{} vs {q}", v.norm_sqr());
    }
}
