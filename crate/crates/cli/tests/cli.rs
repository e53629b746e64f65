use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gpx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpx")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let o = gpx(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SPACE_2D: &str = r#"[
  {"name": "x", "type": "continuous", "lower": 0.0, "upper": 1.0},
  {"name": "z", "type": "continuous", "lower": 0.0, "upper": 1.0}
]"#;

/// `n` rows of `sin(3x) + z^2` on a scrambled grid, or a constant when `flat`.
fn write_2d(dir: &Path, n: usize, flat: bool) {
    fs::write(dir.join("space.json"), SPACE_2D).unwrap();
    let mut text = String::from("x,z,response\n");
    for i in 0..n {
        let x = i as f64 / (n - 1) as f64;
        let z = ((i * 37) % n) as f64 / (n - 1) as f64;
        let y = if flat { 1.5 } else { (3.0 * x).sin() + z * z };
        text.push_str(&format!("{x},{z},{y}\n"));
    }
    fs::write(dir.join("data.csv"), text).unwrap();
}

fn fit_2d(dir: &Path, n: usize) {
    write_2d(dir, n, false);
    ok(dir, &["fit", "--space", "space.json", "--data", "data.csv", "--starts", "2", "--out", "fit"]);
}

#[test]
fn benchmark_writes_dataset_and_space() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["benchmark", "cantilever", "--n", "25", "--seed", "3", "--out", "b"]);
    let data = fs::read_to_string(tmp.path().join("b/data.csv")).unwrap();
    assert!(data.starts_with("L,S,I,response\n"));
    assert_eq!(data.lines().count(), 26);
    let space = json(&tmp.path().join("b/space.json"));
    assert_eq!(space.as_array().unwrap().len(), 3);
}

#[test]
fn fit_splits_eighty_twenty() {
    let tmp = tempfile::tempdir().unwrap();
    write_2d(tmp.path(), 300, false);
    ok(tmp.path(), &["fit", "--space", "space.json", "--data", "data.csv", "--starts", "1", "--out", "fit"]);
    let report = json(&tmp.path().join("fit/report.json"));
    assert_eq!(report["fit"]["n_train"], 240);
    assert_eq!(report["fit"]["n_test"], 60);
    assert_eq!(report["metadata"]["command"], "fit");
    assert_eq!(report["metadata"]["rng"], "ChaCha20");
    assert!(tmp.path().join("fit/model.json").exists());
    assert!(!tmp.path().join("fit/timings.json").exists());
}

#[test]
fn timings_are_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    write_2d(tmp.path(), 20, false);
    ok(tmp.path(), &["fit", "--space", "space.json", "--data", "data.csv", "--starts", "1", "--timings", "--out", "fit"]);
    let t = json(&tmp.path().join("fit/timings.json"));
    assert!(t["fit"].as_f64().unwrap() >= 0.0);
    let report = fs::read_to_string(tmp.path().join("fit/report.json")).unwrap();
    assert!(!report.contains("seconds") && !report.contains("timings"));
}

#[test]
fn malformed_csv_names_row_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("space.json"), SPACE_2D).unwrap();
    fs::write(tmp.path().join("data.csv"), "x,z,response\n0.1,0.2,1\n0.3,abc,2\n").unwrap();
    let o = gpx(tmp.path(), &["fit", "--space", "space.json", "--data", "data.csv", "--out", "fit"]);
    assert_eq!(o.status.code(), Some(gpx_cli::EXIT_VALIDATION));
    assert!(stderr(&o).contains("row 2, column z"), "{}", stderr(&o));
}

#[test]
fn out_of_bounds_row_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("space.json"), SPACE_2D).unwrap();
    fs::write(tmp.path().join("data.csv"), "x,z,response\n0.1,0.2,1\n0.3,1.7,2\n0.5,0.5,0\n").unwrap();
    let o = gpx(tmp.path(), &["fit", "--space", "space.json", "--data", "data.csv", "--out", "fit"]);
    assert_eq!(o.status.code(), Some(gpx_cli::EXIT_VALIDATION));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));
}

#[test]
fn constant_response_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    write_2d(tmp.path(), 12, true);
    let o = gpx(tmp.path(), &["fit", "--space", "space.json", "--data", "data.csv", "--starts", "2", "--out", "fit"]);
    assert_eq!(o.status.code(), Some(gpx_cli::EXIT_NUMERICAL));
    assert!(stderr(&o).contains("degenerate"), "{}", stderr(&o));
}

#[test]
fn model_version_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fit_2d(tmp.path(), 20);
    let mut model = json(&tmp.path().join("fit/model.json"));
    model["version"] = Value::from(99);
    fs::write(tmp.path().join("old.json"), model.to_string()).unwrap();
    let o = gpx(tmp.path(), &["explain", "--model", "old.json", "--explain", "pdp", "--out", "e"]);
    assert_eq!(o.status.code(), Some(gpx_cli::EXIT_VALIDATION));
    assert!(stderr(&o).contains("version mismatch"), "{}", stderr(&o));
}

#[test]
fn explain_without_selection_is_metadata_only() {
    let tmp = tempfile::tempdir().unwrap();
    fit_2d(tmp.path(), 20);
    ok(tmp.path(), &["explain", "--model", "fit/model.json", "--out", "e"]);
    let names: Vec<String> = fs::read_dir(tmp.path().join("e")).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(names, vec!["report.json"]);
    let report = json(&tmp.path().join("e/report.json"));
    assert_eq!(report["blocks"].as_array().unwrap().len(), 0);
    assert_eq!(report["metadata"]["command"], "explain");
    assert!(report["model"]["kernel"].is_object());
}

#[test]
fn explain_writes_requested_blocks() {
    let tmp = tempfile::tempdir().unwrap();
    fit_2d(tmp.path(), 30);
    ok(
        tmp.path(),
        &["explain", "--model", "fit/model.json", "--explain", "pdp,ice,shap,sobol,importance", "--grid-size", "8", "--n-base", "128", "--out", "e"],
    );
    let dir = tmp.path().join("e");
    for f in ["pdp_x.csv", "pdp_z.csv", "ice_centered_x.csv", "shap_values.csv", "sobol.csv", "importance.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let pdp = fs::read_to_string(dir.join("pdp_x.csv")).unwrap();
    assert!(pdp.starts_with("feature,grid_value,curve_id,prediction\n"));
    assert!(fs::read_to_string(dir.join("sobol.csv")).unwrap().starts_with("feature,S1,ST\n"));
}

#[test]
fn sobol_is_refused_for_categorical_models() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["fit", "--benchmark", "cantilever", "--n", "30", "--starts", "1", "--out", "fit"]);
    let o = gpx(tmp.path(), &["explain", "--model", "fit/model.json", "--explain", "pdp,sobol", "--out", "e"]);
    assert_eq!(o.status.code(), Some(gpx_cli::EXIT_VALIDATION));
    assert!(stderr(&o).contains("categorical features: I"), "{}", stderr(&o));
    assert!(!tmp.path().join("e/pdp_L.csv").exists());
}

#[test]
fn bad_reference_level_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["fit", "--benchmark", "cantilever", "--n", "30", "--starts", "1", "--out", "fit"]);
    let o = gpx(tmp.path(), &["explain", "--model", "fit/model.json", "--explain", "shap", "--reference", "I=Z", "--out", "e"]);
    assert_eq!(o.status.code(), Some(gpx_cli::EXIT_VALIDATION));
}

fn conformal_widths(dir: &Path, csv: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(dir.join(csv)).unwrap();
    let h = rdr.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let (lo, hi) = (col("conf_lower"), col("conf_upper"));
    rdr.records().map(|r| {
        let r = r.unwrap();
        r[hi].parse::<f64>().unwrap() - r[lo].parse::<f64>().unwrap()
    }).collect()
}

#[test]
fn conformal_width_is_constant_and_shrinks_with_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["fit", "--benchmark", "wing", "--n", "40", "--starts", "1", "--out", "fit"]);
    let mut widths = Vec::new();
    for alpha in ["0.05", "0.2", "0.5"] {
        let out = format!("c{alpha}");
        ok(tmp.path(), &["conformal", "--model", "fit/model.json", "--alpha", alpha, "--n-validation", "25", "--out", &out]);
        let w = conformal_widths(&tmp.path().join(&out), "conformal.csv");
        assert_eq!(w.len(), 25);
        for v in &w {
            assert!((v - w[0]).abs() <= 1e-9 * w[0].abs().max(1.0));
        }
        let report = json(&tmp.path().join(&out).join("report.json"));
        assert_eq!(report["blocks"][0]["n_cal"], 8);
        widths.push(w[0]);
    }
    assert!(widths[0] >= widths[1] && widths[1] >= widths[2], "{widths:?}");
}

#[test]
fn conformal_single_feature_mode() {
    let tmp = tempfile::tempdir().unwrap();
    fit_2d(tmp.path(), 30);
    let mut val = String::from("x,z\n");
    for i in 0..10 {
        val.push_str(&format!("{},{}\n", i as f64 / 9.0, 1.0 - i as f64 / 9.0));
    }
    fs::write(tmp.path().join("val.csv"), val).unwrap();
    ok(tmp.path(), &["conformal", "--model", "fit/model.json", "--data", "val.csv", "--single-feature", "--out", "c"]);
    let report = json(&tmp.path().join("c/report.json"));
    let blocks = report["blocks"].as_array().unwrap();
    assert_eq!(blocks.iter().map(|b| b["feature"].as_str().unwrap()).collect::<Vec<_>>(), ["all", "x", "z"]);
    assert_eq!(blocks[0]["coverage"]["conformal"], Value::Null);
    for f in ["conformal.csv", "conformal_x.csv", "conformal_z.csv"] {
        assert_eq!(conformal_widths(&tmp.path().join("c"), f).len(), 10, "{f}");
    }
    let single = fs::read_to_string(tmp.path().join("c/conformal_x.csv")).unwrap();
    assert!(single.starts_with("x,y_true,mean,"));
}

#[test]
fn conformal_on_dataset_model_needs_points() {
    let tmp = tempfile::tempdir().unwrap();
    fit_2d(tmp.path(), 20);
    let o = gpx(tmp.path(), &["conformal", "--model", "fit/model.json", "--out", "c"]);
    assert_eq!(o.status.code(), Some(gpx_cli::EXIT_VALIDATION));
    assert!(stderr(&o).contains("--data"), "{}", stderr(&o));
}

#[test]
fn report_runs_all_applicable_blocks() {
    let tmp = tempfile::tempdir().unwrap();
    write_2d(tmp.path(), 25, false);
    ok(
        tmp.path(),
        &["report", "--space", "space.json", "--data", "data.csv", "--starts", "1", "--grid-size", "6", "--n-base", "64", "--out", "r"],
    );
    let report = json(&tmp.path().join("r/report.json"));
    assert!(report["fit"].is_object());
    assert!(!report["blocks"].as_array().unwrap().is_empty());
    assert_eq!(report["conformal"].as_array().unwrap().len(), 0);
    assert!(tmp.path().join("r/sobol.csv").exists());
    assert!(tmp.path().join("r/model.json").exists());
}

#[test]
fn source_flags_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    write_2d(tmp.path(), 10, false);
    let o = gpx(tmp.path(), &["fit", "--benchmark", "wing", "--space", "space.json", "--data", "data.csv", "--out", "fit"]);
    assert!(!o.status.success());
}
