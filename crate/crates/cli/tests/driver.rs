//! End-to-end tests of the `relqm` binary: exit codes, artifact layout,
//! manifest contents, and byte-level determinism of reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_relqm");

/// A small coupled two-channel model that keeps every task cheap enough
/// for debug builds while still exercising the full pipeline.
fn small_config() -> String {
    r#"
seed = 7

[model]
particles = [
  { name = "N", mass = 940.0 },
  { name = "D", mass = 1960.0 },
  { name = "pi", mass = 140.0 },
]
sectors = [["N", "N"], ["D", "pi"], ["N", "N", "pi"]]

[grid]
n = 16
k_scale = 140.0

[partial_waves]
l_max = 1

[[interactions]]
channels = ["N+N", "N+N"]
lambda = -46724.36
beta = 300.0

[[interactions]]
channels = ["N+N", "D+pi"]
lambda = -16353.526

[[interactions]]
channels = ["D+pi", "D+pi"]
lambda = -28034.616
beta = 250.0

[scan]
e_min = 1980.0
e_max = 2208.0
count = 5

[cluster]
pair_n = 8
q_n = 6
q_scale = 120.0
c3 = 25.0
etas = [0.01, 0.1, 1.0]
transforms = 4

[rep]
k_cut = 500.0
h = 1e-3
masses_cap = 1
grouplaw_pairs = 3
grouplaw_states = 3
"#
    .to_string()
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("model.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run_verb(verb: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .arg(verb)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary should launch")
}

fn manifest(out: &Path) -> serde_json::Value {
    let text = fs::read_to_string(out.join("run_manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn spectrum_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("out");
    let res = run_verb("spectrum", &cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sector_set,j,index,eigenvalue_mev,below_threshold"
    );
    // two channels x 16 nodes
    assert_eq!(lines.count(), 32);

    let m = manifest(&out);
    assert_eq!(m["schema"], "run-manifest-v1");
    assert_eq!(m["task"], "spectrum");
    assert_eq!(m["outputs"][0]["file"], "spectrum.csv");
    assert_eq!(m["outputs"][0]["rows"], 32);
    // every listed output is present, with its advertised checksum shape
    let sha = m["outputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);
    assert!(m["residual_summary"]["bound_state_count"].as_f64().unwrap() >= 1.0);
    // the config echo carries all defaults explicitly
    assert_eq!(m["config"]["grid"]["n"], 16);
    assert_eq!(m["config"]["grid"]["k_scale"], 140.0);
    assert_eq!(m["config"]["seed"], 7);
}

#[test]
fn scatter_rows_cover_open_channel_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("out");
    let res = run_verb("scatter", &cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let csv = fs::read_to_string(out.join("scatter.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "e_cm_mev,channel_pair,re_s,im_s,abs_s,phase_shift_deg,unitarity_defect"
    );
    let rows: Vec<&str> = lines.collect();
    // scan: 1980, 2037, 2094 below the 2100 threshold (1 row each),
    // 2151, 2208 above (4 rows each)
    assert_eq!(rows.len(), 3 + 2 * 4);
    assert!(rows[0].starts_with("1.98"));
    assert!(rows.iter().all(|r| r.split(',').count() == 7));
    let m = manifest(&out);
    assert!(m["residual_summary"]["unitarity_defect_max"].as_f64().unwrap() < 1e-8);
}

#[test]
fn cluster_check_reports_per_eta_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("out");
    let res = run_verb("cluster-check", &cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let csv = fs::read_to_string(out.join("cluster.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "partition,eta,delta,delta_plain");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4); // eta = 0 plus the three configured values
    assert!(rows.iter().all(|r| r.starts_with("(N+N)(pi),")));
    let m = manifest(&out);
    assert!(m["residual_summary"]["delta_at_zero"].as_f64().unwrap() <= 1e-10);
    assert!(m["residual_summary"]["w_unitarity_defect"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn rep_check_emits_the_commutator_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("out");
    let res = run_verb("rep-check", &cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let algebra = fs::read_to_string(out.join("rep_algebra.csv")).unwrap();
    assert_eq!(algebra.lines().count(), 1 + 45); // header + every generator pair
    let grouplaw = fs::read_to_string(out.join("rep_grouplaw.csv")).unwrap();
    let identity_row = grouplaw.lines().nth(1).unwrap();
    assert!(identity_row.contains("identity"));
    assert!(identity_row.ends_with(",0.0000000000000000e0"));
    let m = manifest(&out);
    assert_eq!(m["residual_summary"]["grouplaw_identity_residual"].as_f64().unwrap(), 0.0);
    assert!(m["residual_summary"]["grouplaw_max_residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("out");

    let res = run_verb("spectrum", &cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0));
    let csv1 = fs::read(out.join("spectrum.csv")).unwrap();
    let man1 = fs::read(out.join("run_manifest.json")).unwrap();

    let res = run_verb("spectrum", &cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(csv1, fs::read(out.join("spectrum.csv")).unwrap());
    assert_eq!(man1, fs::read(out.join("run_manifest.json")).unwrap());
}

#[test]
fn unknown_configuration_keys_are_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let body = small_config() + "\n[grid_typo]\nn = 4\n";
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let res = run_verb("spectrum", &cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("grid_typo"), "diagnostic names the key: {err}");
    assert!(!out.exists(), "no artifacts on config error");
}

#[test]
fn missing_config_flag_is_a_config_error() {
    let res = Command::new(BIN).arg("spectrum").output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("--config"));
}

#[test]
fn physics_validation_rejects_a_scan_below_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let body = small_config().replace("e_min = 1980.0", "e_min = 1000.0");
    let cfg = write_config(tmp.path(), &body);
    let out = tmp.path().join("out");
    let res = run_verb("scatter", &cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("threshold"), "diagnostic explains the window: {err}");
}

#[test]
fn run_verb_requires_and_uses_the_task_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("out");
    let res = run_verb("run", &cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(2), "no task key configured");

    let body = "task = \"spectrum\"\n".to_string() + &small_config();
    let cfg = write_config(tmp.path(), &body);
    let res = run_verb("run", &cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(manifest(&out)["task"], "spectrum");
}

#[test]
fn command_line_overrides_land_in_the_echoed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("out");
    let res = run_verb("spectrum", &cfg, &out, &["--seed", "11", "--grid-n", "12"]);
    assert_eq!(res.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["seed"], 11);
    assert_eq!(m["config"]["grid"]["n"], 12);
    // the override actually reached the computation
    assert_eq!(m["outputs"][0]["rows"], 24);
}
