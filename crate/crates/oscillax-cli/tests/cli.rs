use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn oscillax(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oscillax")).args(args).arg("--out").arg(dir).output().unwrap()
}

fn with_fixtures() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let out = oscillax(dir.path(), &["fixtures"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let p = dir.path().to_path_buf();
    (dir, p)
}

fn fixture(dir: &Path, name: &str) -> String {
    dir.join(format!("{name}.json")).to_str().unwrap().to_string()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fixtures_are_written_and_reload() {
    let (_t, d) = with_fixtures();
    for name in ["FIX-ZZ", "FIX-PP", "FIX-PN", "FIX-ZP", "FIX-PZ"] {
        let v = json(d.join(format!("{name}.json")));
        assert!(v["left"].is_array() && v["right"].is_array(), "{name}");
    }
}

#[test]
fn classify_reports_the_subcase() {
    let (_t, d) = with_fixtures();
    let out = oscillax(&d, &["classify", &fixture(&d, "FIX-PP")]);
    assert!(out.status.success());
    let v = json(d.join("FIX-PP.classify.json"));
    assert_eq!(v["subcase"], "B2");
    assert_eq!(v["case"], "(P,P)");
    assert_eq!(v["exponent"], 1.5);
    let zz = oscillax(&d, &["classify", &fixture(&d, "FIX-ZZ")]);
    assert!(zz.status.success());
    assert_eq!(json(d.join("FIX-ZZ.classify.json"))["rate"], 1.0);
}

#[test]
fn evolve_writes_the_full_sequence() {
    let (_t, d) = with_fixtures();
    let out = oscillax(&d, &["evolve", &fixture(&d, "FIX-ZZ"), "--from", "0", "--to", "0", "-n", "4096"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(d.join("FIX-ZZ.evolve.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["n", "value", "leak"]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4096);
    let last = &rows[4095];
    assert_eq!(&last[0], "4096");
    assert!(last[2].parse::<f64>().unwrap() <= 1e-10);
    // P_0[X_n = 0] ~ n^{-1/2}
    let v: f64 = last[1].parse().unwrap();
    assert!(v > 0.0 && v < 0.1);
}

#[test]
fn rational_evolve_has_exact_column() {
    let (_t, d) = with_fixtures();
    let out = oscillax(&d, &["evolve", &fixture(&d, "FIX-ZZ"), "--from", "0", "--to", "1", "-n", "2", "--rational"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(d.join("FIX-ZZ.evolve.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["n", "value", "leak", "value_exact"]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(&rows[1][0], "2");
    assert_eq!(&rows[1][3], "1/4");
}

#[test]
fn identity_suite_passes() {
    let (_t, d) = with_fixtures();
    let out = oscillax(&d, &["verify", &fixture(&d, "FIX-ZZ"), "--suite", "identities"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(d.join("FIX-ZZ.verify.json"))["passed"], true);
}

#[test]
fn bad_model_exits_two() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"left": [[-1, "1/2"], [1, "1/3"]], "right": [[-1, "1/2"], [1, "1/2"]], "two_media": true}"#)
        .unwrap();
    let out = oscillax(dir.path(), &["classify", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let missing = oscillax(dir.path(), &["classify", "/nonexistent/model.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn undersized_window_exits_three() {
    let (_t, d) = with_fixtures();
    let out =
        oscillax(&d, &["evolve", &fixture(&d, "FIX-ZZ"), "--from", "0", "--to", "0", "-n", "400", "--window", "10"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulation_does_not_depend_on_thread_count() {
    let (_t, d) = with_fixtures();
    let m = fixture(&d, "FIX-PN");
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let sub = d.join(format!("t{threads}"));
        fs::create_dir_all(&sub).unwrap();
        let out =
            oscillax(&sub, &["simulate", &m, "-n", "64", "--paths", "20000", "--seed", "9", "--threads", threads]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read_to_string(sub.join("FIX-PN.simulate.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn kernel_csv_lists_the_arrival_grid() {
    let (_t, d) = with_fixtures();
    let out = oscillax(&d, &["kernel", &fixture(&d, "FIX-ZZ"), "-n", "16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(d.join("FIX-ZZ.kernel.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["n", "x", "y", "Qn", "Tn"]);
    // three arrival states, 17 times
    assert_eq!(r.records().count(), 17 * 9);
}

#[test]
fn spectrum_report_has_its_fields() {
    let (_t, d) = with_fixtures();
    let out = oscillax(&d, &["spectrum", &fixture(&d, "FIX-PN")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(d.join("FIX-PN.spectrum.json"));
    for key in ["rho_psi", "residual", "defect_max", "markovian", "gap", "window", "H", "nu"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["markovian"], true);
}
