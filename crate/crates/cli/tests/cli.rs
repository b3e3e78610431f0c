use std::fs;
use std::process::{Command, Output};

fn cache_rl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cache-rl"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn presets_lists_every_scenario() {
    let out = cache_rl(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["s1", "s5", "s9", "dynamic"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
    assert!(text.contains("(600, 10, 1000)"));
}

#[test]
fn run_writes_metrics_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let status = cache_rl(&[
        "run", "--scenario", "s2", "--horizon", "40", "--realizations", "3", "--seed", "9", "--out", out,
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = fs::read_to_string(dir.path().join("s2_metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 41);
    assert_eq!(lines[0], "slot,avg_cost,run_avg_cost,hit_fraction");
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s2_metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["base_seed"], 9);
    assert_eq!(meta["realizations_completed"], 3);
    assert_eq!(meta["gamma"], 0.8);

    // Same seed, same bytes.
    let again = tempfile::tempdir().unwrap();
    cache_rl(&[
        "run", "--scenario", "s2", "--horizon", "40", "--realizations", "3", "--seed", "9", "--out",
        again.path().to_str().unwrap(),
    ]);
    assert_eq!(csv, fs::read_to_string(again.path().join("s2_metrics.csv")).unwrap());
}

#[test]
fn oracle_compare_adds_error_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let status = cache_rl(&[
        "run", "--scenario", "s3", "--horizon", "20", "--realizations", "2", "--learner", "linear",
        "--oracle-compare", "--oracle-every", "10", "--out", out,
    ]);
    assert!(status.status.success());
    let csv = fs::read_to_string(dir.path().join("s3_metrics.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(",norm_error"));
    let row10 = csv.lines().nth(10).unwrap();
    assert!(!row10.ends_with(','));
}

#[test]
fn oracle_writes_policy_and_q() {
    let dir = tempfile::tempdir().unwrap();
    let status = cache_rl(&["oracle", "--scenario", "s4", "--out", dir.path().to_str().unwrap()]);
    assert!(status.status.success());
    let policy = fs::read_to_string(dir.path().join("s4_policy.csv")).unwrap();
    assert_eq!(policy.lines().count(), 1 + 2 * 2 * 45);
    let q = fs::read_to_string(dir.path().join("s4_q.csv")).unwrap();
    assert_eq!(q.lines().count(), 1 + 2 * 2 * 45 * 45);
}

#[test]
fn scenario_files_round_trip_through_show() {
    let dir = tempfile::tempdir().unwrap();
    let shown = cache_rl(&["show", "--scenario", "s5"]);
    assert!(shown.status.success());
    let path = dir.path().join("custom.json");
    let mut doc: serde_json::Value = serde_json::from_slice(&shown.stdout).unwrap();
    doc["name"] = "custom".into();
    doc["horizon"] = 15.into();
    doc["realizations"] = 2.into();
    fs::write(&path, doc.to_string()).unwrap();
    let status = cache_rl(&[
        "run", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(dir.path().join("custom_metrics.csv").exists());
}

#[test]
fn bad_input_exits_nonzero() {
    let out = cache_rl(&["run", "--scenario", "no-such-scenario"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-scenario"));

    // The oracle needs the whole action space, which the large network lacks.
    let out = cache_rl(&["oracle", "--scenario", "s7"]);
    assert!(!out.status.success());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\"name\": 3}").unwrap();
    let out = cache_rl(&["run", "--scenario", path.to_str().unwrap()]);
    assert!(!out.status.success());
}
