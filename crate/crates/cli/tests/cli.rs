use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zidlab"))
        .current_dir(root())
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn analyze_reports_density() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--format", "json", "analyze", "maps/density.map"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("3/101"), "{text}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("analyze.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["command"], "analyze");
    assert_eq!(report["result"]["edges"], 101);
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["analyze", "maps/no_such.map"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["analyze", "maps/density_variants.map", "--variant", "9"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["density-experiment", "--seeds", "5..1"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(1));
}

#[test]
fn only_requested_formats_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--format", "csv", "density-experiment", "--oracle-only"]);
    assert!(o.status.success());
    let names: Vec<String> =
        std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.iter().all(|n| n.ends_with(".csv")), "{names:?}");
    let body = std::fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    let first = body.lines().next().unwrap();
    assert!(first.starts_with("# config: {"), "{first}");
    let config: serde_json::Value = serde_json::from_str(&first["# config: ".len()..]).unwrap();
    assert_eq!(config["oracle_only"], true);
}
