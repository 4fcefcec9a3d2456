use std::fs;
use std::process::{Command, Output};

fn rspin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rspin")).args(args).env_remove("RSPIN_BASE_TABLE").output().expect("spawn rspin")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn both_pipelines_agree_on_genus_one_descendant() {
    let out = rspin(&["correlator", "--r", "3", "--g", "1", "--ins", "1:1", "--k", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let values: Vec<&str> =
        text.lines().map(|l| l.split(" = ").nth(1).unwrap().split(' ').next().unwrap()).collect();
    assert_eq!(values.len(), 2, "{text}");
    assert_eq!(values[0], values[1]);
    assert!(text.contains("pipeline A, W=9") && text.contains("pipeline B"), "{text}");
}

#[test]
fn gate_failing_key_prints_zero() {
    let out = rspin(&["correlator", "--r", "2", "--ins", "0:0", "--k", "2"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("= 0 (dimension gate)"), "{}", stdout(&out));
}

#[test]
fn twist_out_of_range_is_a_usage_error() {
    let out = rspin(&["correlator", "--r", "3", "--ins", "3:0", "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = rspin(&["correlator", "--r", "3", "--ins", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn key_above_weight_fails() {
    let out = rspin(&["correlator", "--r", "2", "--weight", "3", "--ins", "0:1", "--k", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn extended_correlator_from_recursion() {
    let out = rspin(&["correlator", "--r", "2", "--ext", "--ins=-1:0", "--ins", "0:0", "--ins", "1:0", "--pipeline", "b"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("<t-1_0 t0_0 t1_0>ext = 1"), "{}", stdout(&out));
}

#[test]
fn genus_one_potential_is_zero_without_descendants() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f1.jsonl");
    let out = rspin(&["potential", "--r", "2", "--g", "1", "--weight", "8", "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    let mut primaries = 0;
    for line in text.lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(row["g"], 1);
        let sum_d: u64 = row["ins"].as_array().unwrap().iter().map(|p| p[1].as_u64().unwrap()).sum();
        if sum_d == 0 {
            primaries += 1;
            assert_eq!(row["value"], "0", "{line}");
        }
    }
    assert!(primaries > 0);

    let again = dir.path().join("again.jsonl");
    rspin(&["potential", "--r", "2", "--g", "1", "--weight", "8", "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn potential_dump_is_a_valid_base_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f0.jsonl");
    let out = rspin(&["potential", "--r", "2", "--g", "0", "--weight", "6", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_rspin"))
        .args(["correlator", "--r", "2", "--weight", "6", "--k", "3", "--pipeline", "b"])
        .env("RSPIN_BASE_TABLE", &path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("<s^3>_0 = -2 (pipeline B, base table"), "{}", stdout(&out));
}

#[test]
fn zero_weight_potential_is_empty() {
    let out = rspin(&["potential", "--r", "3", "--g", "0", "--weight", "0"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn verify_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = rspin(&["verify", "--r", "2,3", "--weight", "8", "--report", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let checks = report.as_array().unwrap();
    assert!(checks.iter().any(|c| c["r"] == 3));
    assert!(checks.iter().all(|c| c["status"] == "pass"));
}

#[test]
fn injected_fault_fails_with_counterexample() {
    let out = rspin(&["verify", "--r", "3", "--weight", "7", "--fault-inject", "flow"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("counterexample:"), "{}", stdout(&out));
}

#[test]
fn thread_count_does_not_change_values() {
    let one = rspin(&["--threads", "1", "potential", "--r", "3", "--g", "0", "--weight", "7"]);
    let many = rspin(&["--threads", "4", "potential", "--r", "3", "--g", "0", "--weight", "7"]);
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
}
