//! The `fpp` binary end to end: outputs, determinism and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fpp::data::{read_bundle, write_bundle, Dataset, Response};
use fpp::pipeline::FitReport;
use ndarray::Array2;
use tempfile::TempDir;

fn fpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fpp(args);
    assert!(
        out.status.success(),
        "fpp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON document")
}

fn expect_exit(args: &[&str], code: i32) -> serde_json::Value {
    let out = fpp(args);
    assert_eq!(out.status.code(), Some(code), "fpp {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let err = error_json(&out);
    assert_eq!(err["exit_code"], code);
    assert!(err["error"]["message"].is_string());
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// Parse an SVG as XML and count its point marks.
fn marks(svg: &str) -> usize {
    let doc = roxmltree::Document::parse(svg).expect("valid XML");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    doc.descendants().filter(|n| n.has_tag_name("circle")).count()
}

fn synth(dir: &Path, args: &[&str]) -> PathBuf {
    let bundle = dir.join("data");
    let mut all = vec!["synth"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", s(&bundle)]);
    ok(&all);
    bundle
}

fn small_circle(dir: &Path) -> PathBuf {
    synth(dir, &["circle", "--n", "300", "--dim", "5", "--seed", "4"])
}

fn fit_into(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["fit", "--data", s(data), "--out", s(out), "--epochs", "10", "--restarts", "1"];
    args.extend_from_slice(extra);
    ok(&args);
}

fn coordinates(path: &Path) -> Vec<[f64; 2]> {
    let text = read(path);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("axis1,axis2"));
    lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            [a.parse().unwrap(), b.parse().unwrap()]
        })
        .collect()
}

#[test]
fn synth_writes_a_bundle_deterministically() {
    let tmp = TempDir::new().unwrap();
    let a = synth(tmp.path(), &["circle", "--n", "3000", "--dim", "30", "--seed", "1"]);
    let (d, meta) = read_bundle(&a).unwrap();
    assert_eq!((d.sample_count(), d.dim()), (3000, 30));
    assert!(meta.is_some());
    let b = tmp.path().join("again");
    ok(&["synth", "circle", "--n", "3000", "--dim", "30", "--seed", "1", "--out", s(&b)]);
    for f in ["features.npy", "responses.csv", "meta.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("timings.json").is_file());
}

#[test]
fn synth_blobs_has_the_requested_classes() {
    let tmp = TempDir::new().unwrap();
    let dir = synth(tmp.path(), &["blobs", "--k", "5", "--dim", "100", "--n", "250"]);
    let (d, _) = read_bundle(&dir).unwrap();
    assert_eq!(d.dim(), 100);
    assert_eq!(d.responses()[0].class_count(), Some(5));
}

#[test]
fn synth_lists_missing_flags() {
    let tmp = TempDir::new().unwrap();
    let err = expect_exit(&["synth", "circle", "--dim", "5", "--out", s(tmp.path())], 1);
    let msg = err["error"]["message"].as_str().unwrap();
    assert!(msg.contains("missing required flags") && msg.contains("--n"), "{msg}");
    let err = expect_exit(&["synth", "--out", s(tmp.path())], 1);
    let msg = err["error"]["message"].as_str().unwrap();
    assert!(msg.contains("--n") && msg.contains("--dim"), "{msg}");
}

#[test]
fn fit_is_byte_identical_and_draws_every_row() {
    let tmp = TempDir::new().unwrap();
    let data = small_circle(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    fit_into(&data, &a, &[]);
    fit_into(&data, &b, &[]);
    assert_eq!(read(a.join("fit.json")), read(b.join("fit.json")));

    let report: FitReport = serde_json::from_str(&read(a.join("fit.json"))).unwrap();
    assert_eq!(report.sample_count, 300);
    assert_eq!(report.train_rows.len() + report.test_rows.len(), 300);
    let scatters: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("scatter_"))
        .collect();
    assert_eq!(scatters.len(), 1);
    assert_eq!(marks(&read(&scatters[0])), 300);
    assert_eq!(marks(&read(a.join("train_test.svg"))), 300);
    assert!(read(a.join("timings.json")).contains("total_seconds"));
}

#[test]
fn fit_rejects_a_batch_larger_than_the_data() {
    let tmp = TempDir::new().unwrap();
    let data = small_circle(tmp.path());
    let out = tmp.path().join("fit");
    expect_exit(&["fit", "--data", s(&data), "--out", s(&out), "--batch", "1000"], 1);
    assert!(!out.join("fit.json").exists());
}

#[test]
fn config_files_merge_and_reject_unknown_keys() {
    let tmp = TempDir::new().unwrap();
    let data = small_circle(tmp.path());
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"pipeline": {"hyperparams": {"epochs": 3, "momentum": 0.9}}}"#).unwrap();
    expect_exit(&["fit", "--config", s(&bad), "--data", s(&data)], 1);

    let good = tmp.path().join("good.json");
    std::fs::write(&good, r#"{"pipeline": {"hyperparams": {"epochs": 3, "degree": 2}}}"#).unwrap();
    let out = tmp.path().join("fit");
    ok(&["fit", "--config", s(&good), "--data", s(&data), "--out", s(&out), "--degree", "1"]);
    let report: FitReport = serde_json::from_str(&read(out.join("fit.json"))).unwrap();
    assert_eq!(report.config.hyperparams.epochs, 3);
    assert_eq!(report.config.hyperparams.degree, 1);
}

#[test]
fn pvalue_is_deterministic_and_validates_trials() {
    let tmp = TempDir::new().unwrap();
    let data = small_circle(tmp.path());
    let fit_dir = tmp.path().join("fit");
    fit_into(&data, &fit_dir, &[]);
    let fit_json = fit_dir.join("fit.json");
    expect_exit(&["pvalue", "--data", s(&data), "--fit", s(&fit_json), "--trials", "1"], 1);
    expect_exit(&["pvalue", "--data", s(&data), "--fit", s(&fit_json), "--threshold", "1.5"], 1);

    let (a, b) = (tmp.path().join("pa"), tmp.path().join("pb"));
    for out in [&a, &b] {
        ok(&["pvalue", "--data", s(&data), "--fit", s(&fit_json), "--trials", "6", "--out", s(out)]);
    }
    let text = read(a.join("pvalue.json"));
    assert_eq!(text, read(b.join("pvalue.json")));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let p = v["loss"]["p_empirical"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert_eq!(v["loss"]["null"]["samples"].as_array().unwrap().len(), 6);
    roxmltree::Document::parse(&read(a.join("null_histogram.svg"))).unwrap();
}

#[test]
fn pvalue_refuses_a_dataset_the_fit_did_not_see() {
    let tmp = TempDir::new().unwrap();
    let data = small_circle(tmp.path());
    let fit_dir = tmp.path().join("fit");
    fit_into(&data, &fit_dir, &[]);
    let other = tmp.path().join("other");
    ok(&["synth", "circle", "--n", "300", "--dim", "6", "--out", s(&other)]);
    expect_exit(&["pvalue", "--data", s(&other), "--fit", s(&fit_dir.join("fit.json")), "--trials", "3"], 1);
}

#[test]
fn project_rotations_keep_the_embedding_and_the_refit_loss() {
    let tmp = TempDir::new().unwrap();
    let data = small_circle(tmp.path());
    let fit_dir = tmp.path().join("fit");
    fit_into(&data, &fit_dir, &[]);
    let fit_json = fit_dir.join("fit.json");
    let run = |deg: &str| {
        let out = tmp.path().join(format!("rot{deg}"));
        ok(&["project", "--fit", s(&fit_json), "--data", s(&data), "--rotation", deg, "--out", s(&out)]);
        out
    };

    let report: FitReport = serde_json::from_str(&read(&fit_json)).unwrap();
    let (d, _) = read_bundle(&data).unwrap();
    let expected = report.embed(d.features()).unwrap();
    let zero = run("0");
    let c0 = coordinates(&zero.join("coordinates.csv"));
    assert_eq!(c0.len(), 300);
    for (row, c) in expected.rows().into_iter().zip(&c0) {
        assert_eq!([row[0], row[1]], *c);
    }
    assert_eq!(marks(&read(zero.join("projection.svg"))), 300);

    let full = coordinates(&run("360").join("coordinates.csv"));
    for (a, b) in c0.iter().zip(&full) {
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    for deg in ["37", "-115.5"] {
        let out = run(deg);
        let v: serde_json::Value = serde_json::from_str(&read(out.join("project.json"))).unwrap();
        for r in v["refit"].as_array().unwrap() {
            let (u, t) = (r["loss_unrotated"].as_f64().unwrap(), r["loss_rotated"].as_f64().unwrap());
            assert!((u - t).abs() < 1e-9, "rotation {deg}: {u} vs {t}");
        }
    }
    let again = tmp.path().join("again");
    ok(&["project", "--fit", s(&fit_json), "--data", s(&data), "--rotation", "37", "--out", s(&again)]);
    for f in ["project.json", "coordinates.csv", "projection.svg"] {
        assert_eq!(read(again.join(f)), read(tmp.path().join("rot37").join(f)), "{f}");
    }
}

#[test]
fn project_rejects_a_dimension_mismatch() {
    let tmp = TempDir::new().unwrap();
    let data = small_circle(tmp.path());
    let fit_dir = tmp.path().join("fit");
    fit_into(&data, &fit_dir, &[]);
    let wide = tmp.path().join("wide");
    ok(&["synth", "circle", "--n", "50", "--dim", "7", "--out", s(&wide)]);
    expect_exit(&["project", "--fit", s(&fit_dir.join("fit.json")), "--data", s(&wide)], 1);
}

#[test]
fn single_cell_grid_gives_one_by_one_matrices() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&["grid", "--dims", "3", "--sizes", "40", "--trials", "2", "--min-steps", "50", "--out", s(out)]);
    }
    let text = read(a.join("grid.json"));
    assert_eq!(text, read(b.join("grid.json")));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["mean_r2", "p_at_reference"] {
        let m = v[key].as_array().unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].as_array().unwrap().len(), 1);
    }
    assert_eq!(read(a.join("mean_r2.csv")).lines().count(), 2);
    for svg in ["mean_r2.svg", "p_value.svg"] {
        roxmltree::Document::parse(&read(a.join(svg))).unwrap();
    }
}

#[test]
fn grid_rows_rise_with_the_dimension() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "grid", "--dims", "2,8,24", "--sizes", "60,200", "--trials", "4", "--min-steps", "300", "--out",
        s(tmp.path()),
    ]);
    let v: serde_json::Value = serde_json::from_str(&read(tmp.path().join("grid.json"))).unwrap();
    let m: Vec<Vec<f64>> = serde_json::from_value(v["mean_r2"].clone()).unwrap();
    for j in 0..2 {
        let column: Vec<f64> = m.iter().map(|row| row[j]).collect();
        assert!(fpp::significance::spearman(&[2.0, 8.0, 24.0], &column) > 0.0, "{column:?}");
    }
}

#[test]
fn runtime_failures_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let x = Array2::from_shape_fn((100, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
    let d = Dataset::new(x, vec![Response::continuous("flat", vec![1.0; 100]).unwrap()]).unwrap();
    let dir = tmp.path().join("flat");
    write_bundle(&dir, &d, None).unwrap();
    let err = expect_exit(&["fit", "--data", s(&dir), "--out", s(&tmp.path().join("fit"))], 2);
    assert_eq!(err["error"]["kind"], "runtime");
}

#[test]
fn bad_invocations_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    expect_exit(&["fit", "--data", s(&tmp.path().join("missing"))], 1);
    expect_exit(&["fit"], 1);
    expect_exit(&["frobnicate"], 1);
    expect_exit(&["synth", "circle", "--n", "10", "--dim", "3", "--lr", "0.1"], 1);
    expect_exit(&["grid", "--threads", "0", "--dims", "2", "--sizes", "10", "--trials", "2"], 1);
    let file = tmp.path().join("file");
    std::fs::write(&file, "").unwrap();
    expect_exit(&["synth", "circle", "--n", "10", "--dim", "3", "--out", s(&file.join("sub"))], 1);
    assert_eq!(fpp(&["--help"]).status.code(), Some(0));
}
