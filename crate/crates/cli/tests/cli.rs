use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_copula-pce"))
}

fn write_scenario(dir: &Path) -> std::path::PathBuf {
    let text = r#"{
        "schema_version": 1,
        "name": "cli-test",
        "marginals": [
            {"kind": "normal", "mean": 30.0, "std": 3.0},
            {"kind": "normal", "mean": 25.0, "std": 2.0}
        ],
        "correlation": [1.0, 0.4, 0.4, 1.0],
        "basis": {"max_degree": 1},
        "quadrature": {"k": 6},
        "bids": [
            {"id": "bx", "zone": "x", "cost": 1.0,
             "terms": [{"coeff": 10.0, "powers": []},
                       {"coeff": 1.0, "powers": [[0, 1]]}]},
            {"id": "by", "zone": "y", "cost": 1.0,
             "terms": [{"coeff": 12.0, "powers": []},
                       {"coeff": 0.8, "powers": [[1, 1]]}]}
        ],
        "procurement": {
            "n_x": 1, "n_y": 1,
            "reserve_x": 20.0, "reserve_y": 15.0,
            "tie_xy": 40.0, "tie_yx": 40.0,
            "epsilon": 0.05,
            "costs": [1.0, 1.0]
        },
        "validation": {"n": 2000, "seed": 11, "histogram_bins": 20}
    }"#;
    let path = dir.join("scenario.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn full_run_produces_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path());
    let out = tmp.path().join("out");
    let status = bin()
        .args(["run", "--scenario"])
        .arg(&scen)
        .arg("--out")
        .arg(&out)
        .arg("--quiet")
        .status()
        .unwrap();
    assert!(status.success());
    for file in [
        "basis.json",
        "coefficients.json",
        "solution.json",
        "validation.json",
        "manifest.json",
        "hist_bx.csv",
        "hist_by.csv",
    ] {
        assert!(out.join(file).exists(), "missing {file}");
    }
}

#[test]
fn staged_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path());
    let out = tmp.path().join("out");
    for sub in ["basis", "expand", "solve", "validate"] {
        let status = bin()
            .args([sub, "--scenario"])
            .arg(&scen)
            .arg("--out")
            .arg(&out)
            .arg("--quiet")
            .status()
            .unwrap();
        assert!(status.success(), "stage {sub} failed");
    }
    assert!(out.join("validation.json").exists());
}

#[test]
fn corrupt_scenario_exits_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("bad.json");
    std::fs::write(&scen, "{\"schema_version\": 1").unwrap();
    let out = tmp.path().join("out");
    let output = bin()
        .args(["run", "--scenario"])
        .arg(&scen)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(!out.join("basis.json").exists());
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn inconsistent_scenario_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path());
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&scen).unwrap()).unwrap();
    v["correlation"] = serde_json::json!([1.0, 0.4, 0.4]);
    std::fs::write(&scen, v.to_string()).unwrap();
    let out = tmp.path().join("out");
    let output = bin()
        .args(["solve", "--scenario"])
        .arg(&scen)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn expand_without_basis_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path());
    let out = tmp.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    let output = bin()
        .args(["expand", "--scenario"])
        .arg(&scen)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(!out.join("coefficients.json").exists());
}
