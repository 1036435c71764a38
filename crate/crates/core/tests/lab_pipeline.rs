use std::collections::BTreeMap;
use std::path::Path;

use maglab::lab::{emit_report, run_pipeline, ExperimentConfig, RunManifest, RunStatus, MANIFEST_FILE, REPORT_DIR};
use maglab::montgomery::DispersiveCurveTable;
use maglab::spectrum::SpectrumResult;
use maglab::Error;

fn small_config(dir: &Path) -> ExperimentConfig {
    let text = format!(
        r#"
[model]
name = "model_a"

[run]
h_list = [0.05]
bands = 1
energy_window = [0.5, 0.72]
levels = 3

[effective]
moment_step = 0.1
curve_samples = 61
action_samples = 9
symbol_grid = [21, 17]

[discretization]
x_points = 81
t_points = 41

[outputs]
directory = "{}"
"#,
        dir.display()
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

fn artifact_hashes(m: &RunManifest) -> BTreeMap<String, String> {
    m.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect()
}

#[test]
fn pipeline_is_deterministic_and_reports_round_trip() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let c1 = small_config(d1.path());
    let m1 = run_pipeline(&c1).unwrap();
    assert_eq!(m1.status, RunStatus::Complete);
    assert_eq!(m1.k_e, 1);
    // A rerun of the same config rewrites byte-identical artifacts.
    let again = run_pipeline(&c1).unwrap();
    assert_eq!(artifact_hashes(&m1), artifact_hashes(&again));
    // Elsewhere, only the recorded config differs (it names the output directory).
    let m2 = run_pipeline(&small_config(d2.path())).unwrap();
    assert_eq!(m1.run_directory.file_name(), m2.run_directory.file_name());
    let numeric = |m: &RunManifest| {
        let mut h = artifact_hashes(m);
        h.remove("config.toml");
        h
    };
    assert_eq!(numeric(&m1), numeric(&m2));

    let per_h = ["spectrum_2d", "quantized_order0", "quantized_order1", "bohr_sommerfeld", "localization", "comparison"];
    for name in per_h {
        assert!(m1.artifact(&format!("h_0.05/{name}.json")).is_some(), "{name}");
    }
    for name in ["config.toml", "critical_points.json", "dispersive_curve.json", "harmonic_prediction.json", "lambda_table.csv"] {
        assert!(m1.artifact(name).is_some(), "{name}");
    }
    let on_disk = RunManifest::load(&m1.run_directory.join(MANIFEST_FILE)).unwrap();
    assert_eq!(on_disk, again);

    let files = emit_report(&m1, true).unwrap();
    assert_eq!(files.len(), 7);
    let report = m1.run_directory.join(REPORT_DIR);

    // Exactly `curve_samples` points per band in the dispersive plot.
    let svg = std::fs::read_to_string(report.join("dispersive_curves.svg")).unwrap();
    let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
    let points = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
    assert_eq!(points.split(' ').count(), c1.effective.curve_samples);
    let curves: Vec<DispersiveCurveTable> =
        serde_json::from_str(&std::fs::read_to_string(m1.run_directory.join("dispersive_curve.json")).unwrap()).unwrap();
    assert_eq!(curves[0].values.len(), c1.effective.curve_samples);

    // Every eigenvalue in the CSV is bit-identical to its JSON source.
    let direct: SpectrumResult =
        serde_json::from_str(&std::fs::read_to_string(m1.run_directory.join("h_0.05/spectrum_2d.json")).unwrap()).unwrap();
    let csv = std::fs::read_to_string(report.join("eigenvalues.csv")).unwrap();
    let from_csv: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some("direct_2d"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(from_csv, direct.eigenvalues);

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report.join("summary.json")).unwrap()).unwrap();
    let errors_csv = std::fs::read_to_string(report.join("errors.csv")).unwrap();
    for (row, line) in summary["errors"].as_array().unwrap().iter().zip(errors_csv.lines().skip(1)) {
        let direct: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(direct, row["direct"].as_f64().unwrap());
    }
}

#[test]
fn stage_failure_keeps_partial_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let mut c = small_config(d.path());
    // Too narrow for the allowed region of the quantization window.
    c.effective.x_window = (-1.0, 1.0);
    let err = run_pipeline(&c).unwrap_err();
    assert!(matches!(err, Error::Stage { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
    let m = RunManifest::load(&c.run_directory().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert!(m.failed_stage.is_some() && m.error.is_some());
    assert!(m.artifact("critical_points.json").is_some());
    assert!(emit_report(&m, false).is_err());
}

#[test]
fn energy_above_essential_proxy_is_rejected_before_compute() {
    let d = tempfile::tempdir().unwrap();
    let mut c = small_config(d.path());
    c.run.energy_window = (0.5, 0.86);
    c.discretization.energy_top = 0.9;
    let err = run_pipeline(&c).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let m = RunManifest::load(&c.run_directory().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.failed_stage.as_deref(), Some("validate"));
    assert!(m.artifacts.is_empty());
}
