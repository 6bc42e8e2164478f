//! End-to-end behaviour of the `lattice-spectra` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lattice-spectra"));
    c.env_remove("LATTICE_SPECTRA_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_config(name: &str, body: &str) -> String {
    let p = scratch(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

/// Compare against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

#[test]
fn golden_square_bands_csv() {
    golden("bands_square_16.csv", &stdout(&["bands", "--lattice", "square", "--grid", "16", "--format", "csv"]));
}

#[test]
fn golden_kagome_bands_json() {
    golden("bands_kagome_32.json", &stdout(&["bands", "--lattice", "kagome", "--grid", "32"]));
}

#[test]
fn golden_hexagonal_thresholds_json() {
    golden("thresholds_hexagonal.json", &stdout(&["thresholds", "--lattice", "hexagonal"]));
}

#[test]
fn golden_offspectrum_green_csv() {
    let args = ["green", "--lattice", "square", "--z", "0.5,0.5", "--radius", "1", "--grid", "256", "--format", "csv"];
    golden("green_square_offspectrum.csv", &stdout(&args));
}

#[test]
fn csv_tables_carry_a_schema_line() {
    let out = stdout(&["thresholds", "--lattice", "square", "--format", "csv"]);
    assert!(out.starts_with("# lattice-spectra/thresholds/v1\n"), "{out}");
}

#[test]
fn output_is_independent_of_thread_count() {
    let args = ["green", "--lattice", "hexagonal", "--energy", "0.3", "--method", "pv_delta", "--radius", "2"];
    let one = bin().args(args).env("LATTICE_SPECTRA_THREADS", "1").output().unwrap();
    let three = bin().args(args).env("LATTICE_SPECTRA_THREADS", "3").output().unwrap();
    assert!(one.status.success() && three.status.success());
    assert_eq!(one.stdout, three.stdout);
}

#[test]
fn report_config_replays_to_the_same_report() {
    let first = stdout(&["dos", "--lattice", "square", "--energies", "-0.4,0.3", "--resolution", "64"]);
    let report: serde_json::Value = serde_json::from_str(&first).unwrap();
    let cfg = write_config("replay.json", &report["config"].to_string());
    assert_eq!(stdout(&["--config", &cfg]), first);
}

#[test]
fn output_flag_writes_the_same_bytes() {
    let path = scratch("bands.csv");
    let p = path.to_string_lossy();
    let args = ["bands", "--lattice", "triangular", "--grid", "16", "--format", "csv"];
    let mut with_file = args.to_vec();
    with_file.extend(["-o", &p]);
    let printed = stdout(&args);
    assert!(stdout(&with_file).is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), printed);
}

#[test]
fn timings_appear_only_on_request() {
    let plain: serde_json::Value = serde_json::from_str(&stdout(&["bands", "--lattice", "square", "--grid", "8"])).unwrap();
    assert!(plain.get("timings").is_none());
    let timed: serde_json::Value =
        serde_json::from_str(&stdout(&["bands", "--lattice", "square", "--grid", "8", "--timings"])).unwrap();
    assert!(timed["timings"].as_array().is_some_and(|t| !t.is_empty()));
}

#[test]
fn invalid_configuration_exits_with_2() {
    assert_eq!(code(&["--config", &write_config("empty.json", "{}")]), 2);
    let unknown = r#"{"task": "bands", "lattice": {"name": "square", "dim": 2}, "colour": 1}"#;
    assert_eq!(code(&["--config", &write_config("unknown.json", unknown)]), 2);
    let no_lattice = r#"{"task": "bands"}"#;
    assert_eq!(code(&["--config", &write_config("nolattice.json", no_lattice)]), 2);
    assert_eq!(code(&["--config", "/nonexistent/config.json"]), 2);
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["bands", "--lattice", "pentagonal"]), 2);
    assert_eq!(code(&["bands", "--lattice", "kagome", "--dim", "3"]), 2);
    assert_eq!(code(&["verify", "--criteria", "14"]), 2);
}

#[test]
fn numerical_failure_exits_with_3() {
    // Too close to the spectrum for the requested grid.
    assert_eq!(code(&["green", "--lattice", "square", "--z", "0.5,0.01", "--radius", "1", "--grid", "64"]), 3);
    // A threshold energy.
    assert_eq!(code(&["green", "--lattice", "square", "--energy", "0.0", "--radius", "1"]), 3);
}

#[test]
fn failed_assertion_exits_with_4() {
    assert_eq!(code(&["verify", "--criteria", "7", "--surface-sign", "-1"]), 4);
}

#[test]
fn identities_suite_passes() {
    let out = run(&["verify", "--suite", "identities", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# lattice-spectra/verify/v1\n"));
}
