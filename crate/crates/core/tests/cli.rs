use std::path::Path;
use std::process::{Command, Output};

use predtransport::report::without_timestamp;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_predtransport"))
        .args(args)
        .env_remove("PREDTRANSPORT_THREADS")
        .output()
        .unwrap()
}

fn ok_json(args: &[&str]) -> serde_json::Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn simulated_files(dir: &Path) -> (String, String) {
    let combined = dir.join("all.csv");
    ok_json(&["simulate", "--dgp", "main", "--n", "600", "--seed", "4", "--data-out", combined.to_str().unwrap()]);
    let text = std::fs::read_to_string(&combined).unwrap();
    let mut source = String::from("x,y\n");
    let mut target = String::from("x\n");
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[2] == "1" {
            source.push_str(&format!("{},{}\n", f[0], f[1]));
        } else {
            target.push_str(&format!("{}\n", f[0]));
        }
    }
    (write(dir, "source.csv", &source), write(dir, "target.csv", &target))
}

#[test]
fn evaluate_from_population_files() {
    let dir = tempfile::tempdir().unwrap();
    let (source, target) = simulated_files(dir.path());
    let report = ok_json(&[
        "evaluate", "--source", &source, "--target", &target, "--seed", "1", "--model", "1,x,x2", "--mode", "inverse-odds",
    ]);
    let estimators: Vec<&str> = report["estimates"].as_array().unwrap().iter().map(|e| e["estimator"].as_str().unwrap()).collect();
    assert_eq!(estimators, ["iow", "conditional-loss", "source-naive"]);
    assert_eq!(report["model_spec"], "1,x,x^2");
    assert_eq!(report["diagnostics"]["n_rows"], 600);
    assert!(report["diagnostics"]["membership_test_coefficients"].is_array());
}

#[test]
fn target_outcomes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let source = write(dir.path(), "s.csv", "x,y\n1,2\n2,3\n3,5\n4,4\n");
    let target = write(dir.path(), "t.csv", "x,y\n5,1\n6,\n");
    let out = run(&["fit", "--source", &source, "--target", &target, "--seed", "1"]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["module"], "data");
    assert!(err["error"]["message"].as_str().unwrap().contains("target outcomes must be absent"));
}

#[test]
fn bad_input_reports_module() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "x,y,s\n1,2,1\n2,abc,1\n");
    let out = run(&["fit", "--data", &data, "--seed", "1"]);
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["module"], "io");

    let out = run(&["fit", "--dgp", "main", "--seed", "1", "--model", "1,w"]);
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["module"], "model_spec");

    let out = run(&["fit", "--seed", "1"]);
    assert!(!out.status.success());
}

#[test]
fn established_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.toml");
    let fitted = ok_json(&[
        "fit", "--dgp", "main", "--n", "1000", "--seed", "2", "--model", "1,x,x^2", "--mode", "inverse-odds",
        "--model-out", model.to_str().unwrap(),
    ]);
    assert_eq!(fitted["weighting_mode"], "inverse-odds");
    assert!(fitted["diagnostics"]["membership_train_coefficients"].is_array());
    let evaluated = ok_json(&[
        "evaluate", "--dgp", "main", "--n", "1000", "--seed", "3", "--model-file", model.to_str().unwrap(),
    ]);
    assert_eq!(evaluated["coefficients"], fitted["coefficients"]);
    // Every row is test data for an established model.
    assert_eq!(evaluated["diagnostics"]["n_test"], 1000);
}

#[test]
fn nested_design_reports_cohort_estimate() {
    let report = ok_json(&["evaluate", "--dgp", "main", "--design", "nested", "--n", "1000", "--seed", "5", "--model", "1,x,x^2"]);
    let estimators: Vec<&str> = report["estimates"].as_array().unwrap().iter().map(|e| e["estimator"].as_str().unwrap()).collect();
    assert_eq!(estimators, ["nested-ipw", "source-naive"]);
}

#[test]
fn cv_and_diagnose_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cv = ok_json(&["cv", "--dgp", "main", "--n", "1000", "--seed", "6", "--candidates", "1,x;1,x,x^2", "--folds", "4"]);
    assert_eq!(cv["cv"]["per_fold_estimates"].as_array().unwrap().len(), 4);
    assert_eq!(cv["model_spec"], "1,x,x^2");

    let plot = dir.path().join("pem.tsv");
    let diag = ok_json(&[
        "diagnose", "--dgp", "main", "--n", "1000", "--seed", "6", "--modifier", "x", "--bins", "5",
        "--permutations", "199", "--plot-out", plot.to_str().unwrap(),
    ]);
    let p = diag["pem"]["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert_eq!(std::fs::read_to_string(plot).unwrap().lines().count(), 6);
}

#[test]
fn table1_text_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("t.txt");
    let report = ok_json(&["reproduce-table1", "--replicates", "20", "--n", "400", "--seed", "8", "--no-limiting", "--text-out", text.to_str().unwrap()]);
    assert_eq!(report["table1"]["cells"].as_array().unwrap().len(), 4);
    assert!(std::fs::read_to_string(text).unwrap().contains("Correctly specified, WLS"));
}

#[test]
fn reports_are_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let args = ["cv", "--dgp", "main", "--n", "600", "--seed", "9", "--candidates", "1,x;1,x,x^2", "--out", out.to_str().unwrap()];
    let mut texts = Vec::new();
    for threads in ["1", "3"] {
        let status = Command::new(env!("CARGO_BIN_EXE_predtransport"))
            .args(args)
            .env("PREDTRANSPORT_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        texts.push(without_timestamp(&std::fs::read_to_string(&out).unwrap()));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn simulated_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    ok_json(&["simulate", "--n", "300", "--seed", "10", "--data-out", first.to_str().unwrap()]);
    let a = ok_json(&["fit", "--data", first.to_str().unwrap(), "--seed", "10", "--model", "1,x,x^2"]);
    let b = ok_json(&["fit", "--dgp", "main", "--n", "300", "--seed", "10", "--model", "1,x,x^2"]);
    // Written values parse back to the same f64s, so the fits agree exactly.
    assert_eq!(a["coefficients"], b["coefficients"]);
    assert_eq!(a["diagnostics"], b["diagnostics"]);
}
