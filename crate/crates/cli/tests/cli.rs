use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gwr_cli::io::read_measures;
use gwr_core::{wasserstein_distance, FittedModel, GaussianMeasure};

fn gwr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwr")).args(args).output().expect("gwr runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn code(out: &Output) -> Option<i32> {
    out.status.code()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path, units: usize, seed: u64) -> String {
    let out = gwr(&["synth", "--units", &units.to_string(), "--seed", &seed.to_string(), "--out", &path(dir, "syn")]);
    assert!(out.status.success(), "{}", stderr(&out));
    path(dir, "syn/data.csv")
}

#[test]
fn simulate_is_deterministic_and_summarized() {
    let tmp = tempfile::tempdir().unwrap();
    let config = path(tmp.path(), "cfg.json");
    fs::write(&config, r#"{"d": 2, "n": 20, "samples": 30, "model": {"kind": "basic"}, "runs": 4, "new_predictors": 10, "seed": 5}"#)
        .unwrap();
    for name in ["a", "b"] {
        let out = gwr(&["simulate", "--config", &config, "--out", &path(tmp.path(), name)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = fs::read(tmp.path().join("a/runs.csv")).unwrap();
    assert_eq!(a, fs::read(tmp.path().join("b/runs.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("run,awd_proposed,awd_alternative,proj_proposed,proj_alternative\n0,"));
    assert_eq!(text.lines().count(), 5);

    let summary: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["runs"], 4);
    assert!(summary["proposed"]["median"].as_f64().unwrap() > 0.0);
    assert!(summary["alternative"]["median"].as_f64().unwrap() > 0.0);

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    // a different seed changes the records
    let out = gwr(&["simulate", "--config", &config, "--seed", "6", "--out", &path(tmp.path(), "c")]);
    assert!(out.status.success());
    assert_ne!(fs::read(tmp.path().join("c/runs.csv")).unwrap(), fs::read(tmp.path().join("a/runs.csv")).unwrap());
}

#[test]
fn simulate_preset_reports_medians() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gwr(&["simulate", "--preset", "fig2-desk", "--runs", "2", "--out", &path(tmp.path(), "p")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("p/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["d"], 2);
    assert_eq!(summary["config"]["samples"], 500);
    assert!(summary["proposed"]["median"].is_number() && summary["alternative"]["median"].is_number());
}

#[test]
fn simulate_config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"d": 2, "n": 20, "samples": 30, "model": {"kind": "basic"}, "runs": 0, "seed": 5}"#, "runs must be positive"),
        ("{\"d\": 2,\n \"n\": 20,\n \"sample\": 30}", "line 3"),
        (r#"{"d": 2, "n": "many"}"#, "line 1"),
        (r#"{"d": 2, "n": 20, "samples": 30, "model": {"kind": "basic"}, "runs": 2, "seed": 5, "t_dof": 1.5}"#, "t_dof"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let config = path(tmp.path(), &format!("cfg{i}.json"));
        fs::write(&config, text).unwrap();
        let out = gwr(&["simulate", "--config", &config, "--out", &path(tmp.path(), "x")]);
        assert_eq!(code(&out), Some(2), "{text}");
        assert!(stderr(&out).contains(needle), "{}", stderr(&out));
    }
    let out = gwr(&["simulate", "--preset", "fig9", "--out", &path(tmp.path(), "x")]);
    assert_eq!(code(&out), Some(2));
    let out = gwr(&["simulate", "--out", &path(tmp.path(), "x")]);
    assert_eq!(code(&out), Some(2));
}

#[test]
fn fit_writes_model_with_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 30, 1);
    let out = gwr(&["fit", "--data", &data, "--out", &path(tmp.path(), "m")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("m/model.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!((doc["d1"].as_u64(), doc["d2"].as_u64()), (Some(2), Some(2)));
    assert_eq!(doc["model"]["kind"], "basic");
    assert!(text.trim_start().starts_with("{\n  \"schema_version\": 1"));
    FittedModel::from_json(&text).unwrap();

    let out = gwr(&["fit", "--data", &data, "--kind", "lowrank", "--rank", "2", "--seed", "3", "--out", &path(tmp.path(), "lr")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("lr/model.json")).unwrap()).unwrap();
    assert_eq!(doc["model"]["rank"], 2);
    assert!(doc["factors"].is_object());
}

#[test]
fn fit_usage_and_degeneracy_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 10, 2);
    let out_dir = path(tmp.path(), "x");
    let out = gwr(&["fit", "--data", &data, "--kind", "lowrank", "--out", &out_dir]);
    assert_eq!(code(&out), Some(2));
    assert!(stderr(&out).contains("--rank"));
    let out = gwr(&["fit", "--data", &data, "--split", "first:1", "--out", &out_dir]);
    assert_eq!(code(&out), Some(3));
    assert!(stderr(&out).contains("degenerate reference"));
    let out = gwr(&["fit", "--data", &data, "--split", "first:1", "--allow-single-unit", "--out", &out_dir]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = gwr(&["fit", "--data", &data, "--split", "upto:1850", "--out", &out_dir]);
    assert_eq!(code(&out), Some(2));
    let out = gwr(&["fit", "--data", &data, "--kind", "cubic", "--out", &out_dir]);
    assert_eq!(code(&out), Some(2));
}

#[test]
fn malformed_csv_reports_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("unit_id,role,c1\na,predictor,1\na,response,2\nb,predictor,NaN\nb,response,1\n", "row 4"),
        ("unit_id,role,c1\na,predictor,1\na,response,inf\n", "row 3"),
        ("unit_id,role,c1\na,predictor,1\na,response,1e\n", "row 3"),
        ("unit,role,c1\na,predictor,1\n", "header"),
        ("unit_id,role,c1\na,predictor,1\nb,predictor,2\nb,response,1\n", "no response rows"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let data = path(tmp.path(), &format!("d{i}.csv"));
        fs::write(&data, text).unwrap();
        let out = gwr(&["fit", "--data", &data, "--out", &path(tmp.path(), "x")]);
        assert_eq!(code(&out), Some(2), "{text}");
        assert!(stderr(&out).contains(needle), "{}", stderr(&out));
    }
}

/// Rows whose 1/N moments are exactly `m`: `m ± √d · (column i of Σ^{1/2})`.
fn rows_with_moments(m: &GaussianMeasure) -> Vec<Vec<f64>> {
    let d = m.dim();
    let root = m.cov().as_matrix().clone().symmetric_eigen();
    let sqrt = &root.eigenvectors * nalgebra::DMatrix::from_diagonal(&root.eigenvalues.map(f64::sqrt)) * root.eigenvectors.transpose();
    let mut rows = Vec::new();
    for i in 0..d {
        for sign in [1.0, -1.0] {
            rows.push((0..d).map(|k| m.mean()[k] + sign * (d as f64).sqrt() * sqrt[(k, i)]).collect());
        }
    }
    rows
}

#[test]
fn predicting_the_input_reference_gives_the_output_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 25, 4);
    let out = gwr(&["fit", "--data", &data, "--out", &path(tmp.path(), "m")]);
    assert!(out.status.success());
    let model = FittedModel::from_json(&fs::read_to_string(tmp.path().join("m/model.json")).unwrap()).unwrap();
    let mut csv = String::from("unit_id,role,c1,c2\n");
    for row in rows_with_moments(model.ref_in().measure()) {
        csv.push_str(&format!("ref,predictor,{},{}\n", row[0], row[1]));
    }
    let input = path(tmp.path(), "ref.csv");
    fs::write(&input, csv).unwrap();
    let out = gwr(&["predict", "--model", &path(tmp.path(), "m/model.json"), "--data", &input, "--out", &path(tmp.path(), "p")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_measures(fs::read(tmp.path().join("p/predictions.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].projected, Some(false));
    // output carries 9 significant digits
    assert!(wasserstein_distance(&rows[0].measure, model.ref_out().measure()).unwrap() < 1e-7);
}

#[test]
fn projected_predictions_carry_flag_and_eta() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 30, 5);
    let out = gwr(&["fit", "--data", &data, "--out", &path(tmp.path(), "m")]);
    assert!(out.status.success());
    // a steep negated tensor pushes most predictions outside the range
    let mut doc: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("m/model.json")).unwrap()).unwrap();
    for v in doc["tensor"].as_array_mut().unwrap() {
        *v = serde_json::json!(-20.0 * v.as_f64().unwrap());
    }
    let steep = path(tmp.path(), "steep.json");
    fs::write(&steep, doc.to_string()).unwrap();
    let out = gwr(&["predict", "--model", &steep, "--data", &data, "--out", &path(tmp.path(), "p")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_measures(fs::read(tmp.path().join("p/predictions.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(rows.len(), 30);
    let projected: Vec<_> = rows.iter().filter(|r| r.projected == Some(true)).collect();
    assert!(!projected.is_empty());
    for r in &rows {
        let eta = r.eta.unwrap();
        if r.projected == Some(true) {
            assert!(eta > 0.0 && eta < 1.0, "{eta}");
        } else {
            assert_eq!(eta, 1.0);
        }
    }
}

#[test]
fn predict_rejects_bad_models() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 10, 6);
    let out_dir = path(tmp.path(), "p");
    let bad = path(tmp.path(), "bad.json");
    fs::write(&bad, "{\"schema_version\": 1, ").unwrap();
    assert_eq!(code(&gwr(&["predict", "--model", &bad, "--data", &data, "--out", &out_dir])), Some(2));
    fs::write(&bad, "{\"schema_version\": 99}").unwrap();
    assert_eq!(code(&gwr(&["predict", "--model", &bad, "--data", &data, "--out", &out_dir])), Some(2));
    let missing = path(tmp.path(), "none.json");
    assert_eq!(code(&gwr(&["predict", "--model", &missing, "--data", &data, "--out", &out_dir])), Some(2));
}

#[test]
fn eval_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    // 1-d unit-variance Gaussians: distances equal the mean gaps 1, 2, 4, 8, 16
    let mut pred = String::from("unit_id,projected,eta,m1,cov_1_1\n");
    let mut obs = String::from("unit_id,m1,cov_1_1\n");
    for (i, gap) in [8.0, 1.0, 16.0, 2.0, 4.0].iter().enumerate() {
        pred.push_str(&format!("u{i},false,1,0,1\n"));
        obs.push_str(&format!("u{i},{gap},1\n"));
    }
    let (p, o) = (path(tmp.path(), "pred.csv"), path(tmp.path(), "obs.csv"));
    fs::write(&p, &pred).unwrap();
    fs::write(&o, &obs).unwrap();
    let out = gwr(&["eval", "--predicted", &p, "--observed", &o, "--out", &path(tmp.path(), "e")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with('#') && lines[0].contains("linear"));
    assert_eq!(&lines[1..], &["n,min,q25,median,q75,max", "5,1,2,4,8,16"]);
    assert_eq!(fs::read_to_string(tmp.path().join("e/summary.csv")).unwrap(), text);
    assert!(fs::read_to_string(tmp.path().join("e/discrepancies.csv")).unwrap().starts_with("unit_id,wasserstein\nu0,8\n"));

    // single pair: all statistics equal
    fs::write(&p, "unit_id,m1,cov_1_1\nz,0,4\n").unwrap();
    fs::write(&o, "unit_id,m1,cov_1_1\nz,0,1\n").unwrap();
    let out = gwr(&["eval", "--predicted", &p, "--observed", &o]);
    assert!(String::from_utf8(out.stdout).unwrap().ends_with("\n1,1,1,1,1,1\n"));

    // an unmatched unit is an input error
    fs::write(&o, "unit_id,m1,cov_1_1\ny,0,1\n").unwrap();
    assert_eq!(code(&gwr(&["eval", "--predicted", &p, "--observed", &o])), Some(2));
}

#[test]
fn barycenter_examples() {
    let tmp = tempfile::tempdir().unwrap();
    // unit moments N(0, 1) and N(2, 9); their barycenter is N(1, 4)
    let data = path(tmp.path(), "two.csv");
    fs::write(&data, "unit_id,role,c1\na,predictor,-1\na,predictor,1\nb,predictor,-1\nb,predictor,5\n").unwrap();
    let out = gwr(&["barycenter", "--data", &data]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_measures(out.stdout.as_slice()).unwrap();
    assert!((rows[0].measure.mean()[0] - 1.0).abs() < 1e-8);
    assert!((rows[0].measure.cov().get(0, 0) - 4.0).abs() < 1e-8);

    let same = path(tmp.path(), "same.csv");
    let mut csv = String::from("unit_id,role,c1,c2\n");
    for unit in ["a", "b", "c"] {
        for row in [[1.0, 0.0], [3.0, 0.0], [2.0, 1.0], [2.0, -1.0]] {
            csv.push_str(&format!("{unit},response,{},{}\n", row[0], row[1]));
        }
    }
    fs::write(&same, csv).unwrap();
    let out = gwr(&["barycenter", "--data", &same, "--role", "response", "--out", &path(tmp.path(), "b")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let written = fs::read(tmp.path().join("b/barycenter.csv")).unwrap();
    let rows = read_measures(written.as_slice()).unwrap();
    let expected = GaussianMeasure::from_slices(&[2.0, 0.0], &[0.5, 0.0, 0.0, 0.5]).unwrap();
    assert!(wasserstein_distance(&rows[0].measure, &expected).unwrap() < 1e-8);
    assert!(String::from_utf8(written).unwrap().starts_with("unit_id,m1,m2,cov_1_1,cov_1_2,cov_2_1,cov_2_2\nbarycenter,"));
}

#[test]
fn standardized_fit_predicts_on_the_original_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), 30, 8);
    for (name, extra) in [("plain", None), ("std", Some("--standardize"))] {
        let mut args = vec!["fit", "--data", &data];
        args.extend(extra);
        let out_dir = path(tmp.path(), name);
        args.extend(["--out", &out_dir]);
        let out = gwr(&args);
        assert!(out.status.success(), "{}", stderr(&out));
        let out = gwr(&["predict", "--model", &path(tmp.path(), &format!("{name}/model.json")), "--data", &data, "--out", &path(tmp.path(), &format!("{name}-p"))]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("std/model.json")).unwrap()).unwrap();
    assert_eq!(doc["standardization"]["predictor"]["scale"].as_array().unwrap().len(), 2);
    let plain = read_measures(fs::read(tmp.path().join("plain-p/predictions.csv")).unwrap().as_slice()).unwrap();
    let std = read_measures(fs::read(tmp.path().join("std-p/predictions.csv")).unwrap().as_slice()).unwrap();
    // both live on the data scale, so their typical means are comparable
    let spread = |rows: &[gwr_cli::io::MeasureRow]| rows.iter().map(|r| r.measure.mean().norm()).sum::<f64>() / rows.len() as f64;
    assert!((spread(&plain) - spread(&std)).abs() < 0.5 * spread(&plain).max(0.1));
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_gwr"))
        .args(["synth", "--units", "2", "--out", "unused"])
        .env("GWR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), Some(2));
    assert!(stderr(&out).contains("GWR_THREADS"));
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = gwr(&["synth", "--units", "5", "--draws", "10", "--seed", "9", "--out", &path(tmp.path(), name)]);
        assert!(out.status.success());
    }
    let a = fs::read_to_string(tmp.path().join("a/data.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(tmp.path().join("b/data.csv")).unwrap());
    assert!(a.starts_with("unit_id,role,c1,c2\n1953,predictor,"));
    assert_eq!(a.lines().count(), 1 + 5 * 2 * 10);
}
