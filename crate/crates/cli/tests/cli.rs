use std::path::PathBuf;
use std::process::{Command, Output};

fn patchbeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchbeam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn lists_every_scenario() {
    let o = patchbeam(&["list-scenarios"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 8);
    for name in ["periodic-dynamics", "inclusions", "full-domain-reference"] {
        assert!(out.contains(name), "{out}");
    }
}

#[test]
fn validate_accepts_shipped_config() {
    let o = patchbeam(&["validate", &config("spectrum.toml")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ok (spectrum)"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "scenario = \"spectrum\"\n[geometry]\nnx = 2\n").unwrap();
    let o = patchbeam(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("geometry.nx"), "{}", stderr(&o));

    let o = patchbeam(&["run", &config("spectrum.toml"), "--override", "no-equals-sign"]);
    assert_eq!(o.status.code(), Some(2));

    let o = patchbeam(&["run", &config("spectrum.toml"), "--override", "geometry.colour=3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("geometry.colour"), "{}", stderr(&o));

    let o = patchbeam(&["validate", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_bundle_and_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ff");
    let o = patchbeam(&[
        "run",
        &config("fixed-fixed-equilibrium.toml"),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("(seed 3)"), "{text}");
    for file in ["errors.csv", "deflection.csv", "reference.csv", "metadata.toml"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let meta = std::fs::read_to_string(out.join("metadata.toml")).unwrap();
    assert!(meta.contains("seed = 3"), "{meta}");
}

#[test]
fn solver_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = patchbeam(&[
        "run",
        &config("fixed-fixed-equilibrium.toml"),
        "--out",
        dir.path().to_str().unwrap(),
        "--override",
        "equilibrium.max_iter=1",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("did not converge"), "{}", stderr(&o));
}
