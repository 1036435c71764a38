use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
[model]
name = "model_a"

[run]
h_list = [0.05, 0.02]
bands = 1
energy_window = [0.5, 0.67]

[outputs]
directory = "out"
"#;

fn maglab(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_maglab")).args(args).current_dir(cwd).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn validate_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("ok.toml"), CONFIG).unwrap();
    std::fs::write(d.path().join("typo.toml"), CONFIG.replace("bands", "bandz")).unwrap();
    std::fs::write(d.path().join("high.toml"), CONFIG.replace("0.67]", "0.87]\n[discretization]\nenergy_top = 0.9")).unwrap();

    let (code, stdout, _) = maglab(&["validate", "ok.toml"], d.path());
    assert_eq!(code, 0);
    assert!(stdout.contains("run directory out/run-"));
    assert_eq!(maglab(&["validate", "typo.toml"], d.path()).0, 2);
    let (code, _, stderr) = maglab(&["validate", "high.toml"], d.path());
    assert_eq!(code, 2, "{stderr}");
    let (code, _, stderr) = maglab(&["validate", "missing.toml"], d.path());
    assert_eq!(code, 4);
    assert!(stderr.contains("missing.toml"));
}

#[test]
fn compare_two_spectrum_files() {
    let d = tempfile::tempdir().unwrap();
    let a = r#"{"schema_version":1,"method":"a","h":0.01,"resolution":[],"eigenvalues":[0.60,0.70],"residuals":[1e-11,1e-11]}"#;
    let b = "index,eigenvalue_rescaled,eigenvalue_physical,residual\n1,0.6001,0,0\n2,0.7001,0,0\n";
    std::fs::write(d.path().join("a.json"), a).unwrap();
    std::fs::write(d.path().join("b.csv"), b).unwrap();
    let (code, stdout, stderr) =
        maglab(&["compare", "a.json", "b.csv", "--window", "0.5", "0.8", "--cluster-tol", "1e-3"], d.path());
    assert_eq!(code, 0, "{stderr}");
    let r: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!((r["hausdorff_like"].as_f64().unwrap() - 1e-4).abs() < 1e-12);
    assert_eq!(r["rank_check"], true);

    let (code, _, _) = maglab(&["compare", "a.json", "b.csv", "--window", "0.5", "0.8", "--output", "r.json"], d.path());
    assert_eq!(code, 0);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("r.json")).unwrap()).unwrap();
    // Default tolerance is 10 × the largest residual, far below the offset.
    assert_eq!(r["rank_check"], false);
    assert!(r["offending_interval"].is_array());
}

#[test]
fn report_on_missing_manifest_is_an_io_failure() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(maglab(&["report", "nowhere/manifest.json"], d.path()).0, 4);
}
