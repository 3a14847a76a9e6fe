use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fslice::grid::GridState;
use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn fslice(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fslice"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("running fslice")
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn converge_on_quartic_passes_with_positive_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = fslice(&["converge"], &config("converge_quartic.json"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let s = summary(dir.path());
    let slope = s["checks"][0]["metrics"]["slope"].as_f64().unwrap();
    assert!(slope >= 0.5, "slope {slope}");
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert!(csv.starts_with("# check: global-convergence\n# config: "));
    assert!(csv.contains("\nnu,mesh,l2_error,norm_ratio\n"));
    assert_eq!(data_rows(&csv).len(), 3);
}

#[test]
fn zero_gauge_gives_zero_defects() {
    let dir = tempfile::tempdir().unwrap();
    let out = fslice(&["gauge-check"], &config("gauge_zero.json"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("gauge.csv")).unwrap();
    let rows = data_rows(&csv);
    assert!(!rows.is_empty());
    for r in rows {
        assert_eq!(r[1].parse::<f64>().unwrap(), 0.0, "{r:?}");
    }
}

#[test]
fn audit_of_inverted_quartic_fails_naming_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = fslice(&["audit"], &config("audit_negative_quartic.json"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL audit") && stdout.contains("potential-lower-bound"), "{stdout}");
    let s = summary(dir.path());
    assert_eq!(s["passed"], Value::Bool(false));
    let detail = s["checks"][0]["detail"].as_str().unwrap();
    assert!(detail.contains("potential-lower-bound"));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_worker_counts() {
    for name in ["phimap_quartic.json", "hessian_power.json", "gauge_zero.json"] {
        let runs: Vec<_> = [["--workers", "1"], ["--workers", "3"], ["--workers", "3"]]
            .iter()
            .map(|w| {
                let dir = tempfile::tempdir().unwrap();
                let out = fslice(&["run", w[0], w[1]], &config(name), dir.path());
                assert_eq!(out.status.code(), Some(0), "{name}");
                let mut files: Vec<_> = std::fs::read_dir(dir.path())
                    .unwrap()
                    .map(|e| e.unwrap().path())
                    .collect();
                files.sort();
                files
                    .iter()
                    .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
                    .collect::<Vec<_>>()
            })
            .collect();
        assert!(runs[0].len() >= 2);
        assert_eq!(runs[0], runs[1], "{name}: worker count changed the output");
        assert_eq!(runs[1], runs[2], "{name}: repeated run changed the output");
    }
}

#[test]
fn empty_check_list_writes_an_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "fields": { "m": 1.0, "dim": 1, "M_star": 0.0 }, "checks": [] }"#,
    );
    let out = fslice(&["run"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&dir.path().join("out"));
    assert_eq!(s["checks"].as_array().unwrap().len(), 0);
    assert_eq!(s["passed"], Value::Bool(true));
    assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{ "fields": { "m": 1.0, "dim": 1, "M_star": 0.0 }, "checks": [], "typo": 1 }"#,
        r#"{ "fields": { "m": 1.0, "dim": 1, "M_star": 0.0 }, "checks": ["converge"] }"#,
        r#"{ "fields": { "m": -1.0, "dim": 1, "M_star": 0.0 }, "checks": [] }"#,
        r#"{ "fields": { "m": 1.0, "dim": 1, "M_star": 0.0 }, "checks": ["teleport"] }"#,
        r#"{ "fields": { "m": 1.0, "dim": 1, "M_star": 0.0 }, "initial": { "centre": [0] }, "checks": [] }"#,
        "not json",
    ];
    for text in cases {
        let cfg = write_config(dir.path(), text);
        let out = fslice(&["run"], &cfg, &dir.path().join("out"));
        assert_eq!(out.status.code(), Some(2), "{text}");
    }
    let out = fslice(&["run"], &dir.path().join("missing.json"), &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(dir.path(), r#"{ "fields": { "m": 1.0, "dim": 1, "M_star": 0.0 } }"#);
    let out = fslice(&["phimap"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn undersampled_grid_is_a_config_error_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "fields": { "m": 1.0, "dim": 1, "M_star": 0.0, "V": [[2, 0, 0.5]] },
        "grid": { "half_width": 4.0, "points": 16 },
        "schedule": { "t_final": 0.1, "nu": [1] },
        "checks": ["propagate"]
    }"#;
    let cfg = write_config(dir.path(), text);
    let out = fslice(&["run"], &cfg, &dir.path().join("a"));
    assert_eq!(out.status.code(), Some(2));
    let out = fslice(&["run", "--force-sampling"], &cfg, &dir.path().join("b"));
    assert_ne!(out.status.code(), Some(2));
}

#[test]
fn snapshot_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = fslice(&["propagate"], &config("propagate_harmonic.json"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let path = dir.path().join("propagate.fslc");
    let state = GridState::load(&path).unwrap();
    assert!((state.time - 1.0).abs() < 1e-15);
    let again = dir.path().join("again.fslc");
    state.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    let back = GridState::load(&again).unwrap();
    assert!(state.values().iter().zip(back.values()).all(|(a, b)| a.re.to_bits() == b.re.to_bits()
        && a.im.to_bits() == b.im.to_bits()));
}

#[test]
fn rho_star_flag_rejects_coarse_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let out = fslice(&["propagate", "--rho-star", "0.05"], &config("propagate_harmonic.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}
