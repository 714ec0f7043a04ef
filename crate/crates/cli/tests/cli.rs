use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn ltmle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltmle")).args(args).output().expect("spawn ltmle")
}

fn ok(args: &[&str]) -> Output {
    let out = ltmle(args);
    assert!(out.status.success(), "ltmle {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a copy of the synthetic estimate config that reads `data`.
fn cbi_config(dir: &Path, data: &Path) -> PathBuf {
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(assets().join("estimate_cbi.cfg")).unwrap()).unwrap();
    cfg["data"] = data.to_str().unwrap().into();
    let path = dir.join("estimate.cfg");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn malformed_cell_is_reported() {
    let tmp = TempDir::new().unwrap();
    let text = std::fs::read_to_string(assets().join("cbi_synthetic.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
    cells[2] = "abc".into();
    lines[3] = cells.join(",");
    let data = tmp.path().join("bad.csv");
    std::fs::write(&data, lines.join("\n")).unwrap();
    let cfg = cbi_config(tmp.path(), &data);
    let out_dir = tmp.path().join("out");
    let out = ltmle(&["estimate", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 3 column `L1_1998`"), "{stderr}");
    assert!(stderr.contains("`abc` is not a number"), "{stderr}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("error.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "estimate");
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.cfg");
    std::fs::write(&cfg, r#"{ "dgp": "sim1.dgp", "n": 10, "seed": 1, "colour": "red" }"#).unwrap();
    let out = ltmle(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn estimate_is_deterministic_and_diagnose_reproduces_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = cbi_config(tmp.path(), &assets().join("cbi_synthetic.csv"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["estimate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["estimate", "--config", s(&cfg), "--out", s(&b), "--jobs", "2"]);
    for f in ["estimate.json", "diagnostics.csv", "weights.csv", "ic.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let est: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(est["format_version"], 1);
    assert_eq!(est["reference"], "d3");
    assert_eq!(est["ltmle"].as_array().unwrap().len(), 3);
    assert_eq!(est["ltmle_contrasts"].as_array().unwrap().len(), 2);
    assert_eq!(est["iptw"].as_array().unwrap().len(), 3);
    let ic = std::fs::read_to_string(a.join("ic.csv")).unwrap();
    assert_eq!(ic.lines().count(), 61);

    let d = tmp.path().join("d");
    let out = ok(&["diagnose", "--run", s(&a), "--out", s(&d)]);
    let table = std::fs::read_to_string(a.join("diagnostics.csv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), table);
    assert_eq!(std::fs::read_to_string(d.join("diagnostics.csv")).unwrap(), table);
}

#[test]
fn simulate_writes_panel_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("sim.cfg");
    std::fs::write(&cfg, format!(r#"{{ "dgp": "{}", "n": 25, "seed": 4 }}"#, s(&assets().join("sim1.dgp")))).unwrap();
    let out = tmp.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    let text = std::fs::read_to_string(out.join("panel.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "unit_id,L_1,A_1,Y_1,L_2,A_2,Y_2,L_3,A_3,Y_3");
    assert_eq!(lines.count(), 25);
}

#[test]
fn replicate_quick_run_schema() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    ok(&["replicate", "--config", s(&assets().join("study_sim1_glm.cfg")), "--reps", "4", "--out", s(&out)]);
    let raw = std::fs::read_to_string(out.join("raw.csv")).unwrap();
    let mut raw_lines = raw.lines();
    assert_eq!(raw_lines.next().unwrap(), "rep,estimator,learner_set,design,psi,se,ci_lo,ci_hi,error");
    // two LTMLE designs and one IPTW row per replication
    assert_eq!(raw_lines.count(), 12);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut m = metrics.lines();
    assert_eq!(
        m.next().unwrap(),
        "estimator,learner_set,design,abs_bias,coverage,mean_se,sd_psi,failures"
    );
    assert_eq!(m.count(), 3);
    let prov: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["reps"], 4);
    assert!((prov["psi_true"].as_f64().unwrap() - 101.0).abs() < 1e-9);
    assert_eq!(prov["config_hash"].as_str().unwrap().len(), 64);
}
