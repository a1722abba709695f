//! The `occscore` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use occscore::report::TestReport;

fn occscore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occscore")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

const SMALL: [&str; 8] = ["--reps", "60", "--seed", "42", "--r-max", "0.6", "--r-step", "0.2"];

fn run_in(dir: &Path, command: &str, extra: &[&str]) -> Output {
    let mut args = vec![command, "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = occscore(&args);
    assert!(o.status.success(), "{command}: {}", stderr(&o));
    o
}

#[test]
fn every_subcommand_is_byte_for_byte_reproducible() {
    let cases: [(&str, Vec<&str>); 8] = [
        ("power", SMALL.to_vec()),
        ("medians", SMALL.to_vec()),
        ("agreement", SMALL.to_vec()),
        ("eigen", SMALL.to_vec()),
        ("asymptotics", SMALL.to_vec()),
        ("scatter", SMALL.to_vec()),
        ("all", SMALL.to_vec()),
        ("fig6", vec!["--reps", "200", "--seed", "42"]),
    ];
    for (command, extra) in cases {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let oa = run_in(a.path(), command, &extra);
        let ob = run_in(b.path(), command, &extra);
        let (fa, fb) = (files(a.path()), files(b.path()));
        assert!(fa.iter().any(|(n, _)| n.ends_with(".csv")), "{command}: no CSV written");
        assert_eq!(fa, fb, "{command}");
        let echo = |o: &Output| String::from_utf8_lossy(&o.stdout).lines().filter(|l| !l.starts_with("wrote ")).collect::<Vec<_>>().join("\n");
        assert_eq!(echo(&oa), echo(&ob), "{command}");
    }
}

#[test]
fn json_tables_carry_the_csv_values() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_in(a.path(), "power", &SMALL);
    let mut json_args = SMALL.to_vec();
    json_args.extend_from_slice(&["--format", "json"]);
    run_in(b.path(), "power", &json_args);
    let csv = fs::read_to_string(a.path().join("power.csv")).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&fs::read(b.path().join("power.json")).unwrap()).unwrap();
    let rows = json.as_array().unwrap();
    assert_eq!(rows.len(), csv.lines().count() - 1);
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(rows[0]["test"], first[1]);
    assert_eq!(rows[0]["rejections"].as_u64().unwrap().to_string(), first[4]);
}

#[test]
fn config_is_echoed_and_saved() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "power", &["--reps", "10", "--psi2", "0.4", "--filtering", "common"]);
    let saved: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("config.json")).unwrap()).unwrap();
    let echoed: serde_json::Value = serde_json::Deserializer::from_slice(&o.stdout).into_iter().next().unwrap().unwrap();
    assert_eq!(echoed, saved);
    assert_eq!(saved["command"], "power");
    assert_eq!(saved["sweep"]["r_grid"], serde_json::json!([0.5]));
    assert_eq!(saved["sweep"]["filtering"], "common");
    assert_eq!(saved["sweep"]["base_seed"], 1);
}

#[test]
fn bad_flags_exit_two_and_name_the_flag() {
    let cases: [(&[&str], &str); 7] = [
        (&["power", "--psi1", "1.5"], "--psi1"),
        (&["power", "--alpha", "0"], "--alpha"),
        (&["power", "--reps", "0"], "--reps"),
        (&["power", "--K", "0"], "--K"),
        (&["power", "--r-max", "1.2"], "--r-max"),
        (&["power", "--psi1", "0.5", "--psi2", "0.7"], "--psi2"),
        (&["power", "--no-such-flag"], "--no-such-flag"),
    ];
    for (args, flag) in cases {
        let o = occscore(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(flag), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn help_and_version_succeed() {
    for args in [&["--help"][..], &["--version"], &["power", "--help"]] {
        let o = occscore(args);
        assert_eq!(o.status.code(), Some(0));
        assert!(!o.stdout.is_empty());
    }
}

#[test]
fn unreadable_or_malformed_datasets_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let o = occscore(&["test", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("missing.csv"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "region,N,K,s_d,d\n1,50,3,20,35\n2,50,3,x,12\n").unwrap();
    let o = occscore(&["test", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn test_report_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("survey.csv");
    fs::write(&path, "region,N,K,s_d,d\n1,50,3,30,52\n2,50,3,9,14\n").unwrap();
    let o = occscore(&["test", path.to_str().unwrap(), "--format", "json", "--rule", "modified"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: TestReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", String::from_utf8(o.stdout).unwrap());
    assert_eq!(report.tests.len(), 4);
    let lrt = report.tests.iter().find(|t| t.test == "LRT").unwrap();
    assert!(lrt.statistic.unwrap() > 3.841459);
    assert!((report.critical_value - 3.841459).abs() < 1e-6);
}

#[test]
fn identical_regions_give_zero_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("same.csv");
    fs::write(&path, "region,site,K,y\n1,a,3,2\n1,b,3,0\n1,c,3,1\n1,d,3,3\n2,a,3,2\n2,b,3,0\n2,c,3,1\n2,d,3,3\n").unwrap();
    let o = occscore(&["test", path.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: TestReport = serde_json::from_slice(&o.stdout).unwrap();
    for t in &report.tests {
        let s = t.statistic.unwrap_or_else(|| panic!("{}: {:?}", t.test, t.error));
        assert!(s.abs() < 1e-8, "{} = {s}", t.test);
        assert_eq!(t.reject_modified, Some(false), "{}", t.test);
    }
}

#[test]
fn text_report_lists_every_test() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("survey.csv");
    fs::write(&path, "# two regions\nregion,N,K,s_d,d\n1,50,3,30,52\n2,50,3,9,14\n").unwrap();
    let o = occscore(&["test", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for label in ["Wald", "LRT", "T_E", "T_O"] {
        assert!(text.lines().any(|l| l.starts_with(label)), "{label} missing:\n{text}");
    }
}
