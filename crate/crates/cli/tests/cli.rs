use std::path::Path;
use std::process::{Command, Output};

fn dislo(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dislo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--log-level")
        .arg("warn")
        .output()
        .expect("binary runs")
}

fn summary(out: &Path) -> Vec<serde_json::Value> {
    let text = std::fs::read_to_string(out.join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn ode_writes_trajectory_and_passes_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = dislo(dir.path(), &["ode", "--centers", "-1,0,1", "--T", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,z_1,z_2,z_3,v_1,v_2,v_3");
    let s = summary(dir.path());
    assert_eq!(s[0]["criterion_id"], "distance_bound");
    assert_eq!(s[0]["status"], "PASS");
}

#[test]
fn verify_selected_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let o = dislo(dir.path(), &["verify", "--criteria", "1,5"]);
    assert!(o.status.success());
    let s = summary(dir.path());
    let ids: Vec<&str> = s.iter().map(|v| v["criterion_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["1.c0", "1.alpha", "5.exponents_feasible"]);
    for v in &s {
        for key in ["criterion_id", "status", "measured", "threshold"] {
            assert!(v.get(key).is_some());
        }
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}

#[test]
fn simulate_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"potential":"sine","epsilon":0.2,"a":1.0,"centers":[-0.5,0.5],
            "domain":{"Lx":10.0,"Ly":10.0},"time":{"T":0.05,"snapshot_every":0.025},
            "solver":{"tol":1e-10,"max_iter":500}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = dislo(&out, &["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["crossings.csv", "energy.csv", "snapshot_0000.bin", "snapshot_0000.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let crossings = std::fs::read_to_string(out.join("crossings.csv")).unwrap();
    assert_eq!(crossings.lines().count(), 4);
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let o = dislo(dir.path(), &["verify", "--criteria", "42"]);
    assert_eq!(o.status.code(), Some(2));
    let o = dislo(dir.path(), &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
}
