use std::path::Path;
use std::process::{Command, Output};

fn riesz_lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riesz-lab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("RIESZ_LAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn body(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).expect("report written");
    let mut v: serde_json::Value = serde_json::from_str(&text).expect("valid json");
    v["body"].take()
}

#[test]
fn bounds_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = riesz_lab(dir.path(), &["bounds", "--workers", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(body(&dir.path().join("bounds.json"))["pass"], true);
}

#[test]
fn identity_check_passes_then_fails_at_an_impossible_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let o = riesz_lab(dir.path(), &["identity-check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("identity-check.csv").exists());

    let o = riesz_lab(dir.path(), &["identity-check", "--tol", "1e-30"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert_eq!(body(&dir.path().join("identity-check.json"))["pass"], false);
}

#[test]
fn too_few_paths_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = riesz_lab(dir.path(), &["mc", "--set", "mc.n_paths=10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mc.n_paths"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = riesz_lab(dir.path(), &["mc", "--set", "mc.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));

    let o = riesz_lab(dir.path(), &["mc", "--workers", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--workers"), "{}", stderr(&o));
}

#[test]
fn heisenberg_pointwise_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("heis.toml");
    std::fs::write(&cfg, "[geometry]\nkind = \"heisenberg\"\nradius = 12.0\nlambda_max = 6\nk_max = 8\n[mc]\nestimator = \"pointwise\"\n").unwrap();
    let o = riesz_lab(dir.path(), &["mc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mc.estimator"), "{}", stderr(&o));
}

#[test]
fn mc_report_body_does_not_depend_on_workers() {
    let small = ["--set", "mc.n_paths=2000", "--set", "mc.y0=1.0", "--seed", "11"];
    let mut bodies = Vec::new();
    for workers in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let mut args = vec!["mc", "--workers", workers];
        args.extend(small);
        let o = riesz_lab(dir.path(), &args);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
        let mut b = body(&dir.path().join("mc.json"));
        b["config"]["output"].take();
        bodies.push(b);
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn dump_kernel_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = riesz_lab(dir.path(), &["dump-kernel"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("dump-kernel.json").exists());
}
