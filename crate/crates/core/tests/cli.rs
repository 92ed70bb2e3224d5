use std::process::{Command, Output};

fn mpvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpvc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn build_plant_picks_dc_for_large_rating() {
    let o = mpvc(&["build-plant", "--rating", "1200", "--distance", "50"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("connection: DC\n"));
}

#[test]
fn build_plant_ac_reports_cables_and_json() {
    let o = mpvc(&["build-plant", "--rating", "800", "--distance", "25"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("connection: AC"));
    assert!(text.contains("parallel export cables: 3"));
    let o = mpvc(&["build-plant", "--rating", "800", "--distance", "25", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n_parallel_transmission_cables"], 3);
}

#[test]
fn unknown_scenario_fails_with_diagnostic() {
    let o = mpvc(&["simulate", "--scenario", "blackout"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unknown scenario 'blackout'"), "{err}");
    assert!(err.contains("gen-trip, load-ramp, load-step"));
}

#[test]
fn missing_case_file_and_bad_flags_fail() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let o = mpvc(&["compare", "--case", missing.to_str().unwrap(), "--scenario", "gen-trip"]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
    assert!(!mpvc(&["simulate", "--scenario", "gen-trip", "--mpvc", "maybe"])
        .status
        .success());
    assert!(!mpvc(&["simulate", "--scenario", "gen-trip", "--dt", "0.5"])
        .status
        .success());
}

#[test]
fn simulate_writes_csv_with_termination_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mpvc(&[
        "simulate",
        "--scenario",
        "load-step",
        "--mpvc",
        "off",
        "--t-end",
        "10",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("load-step_off.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "t,pilot_v,dq_ref,q_ref_1,q_poi_1,v_ref_1,q_ref_2,q_poi_2,v_ref_2"
    );
    assert_eq!(lines.len(), 1 + 2000 + 1);
    assert_eq!(*lines.last().unwrap(), "#termination,completed");
    assert!(stdout(&o).contains("termination: completed at 10.000 s"));
}

#[test]
fn compare_exits_zero_when_runs_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("case.json");
    assert!(mpvc(&["export-case", "--out", case.to_str().unwrap()]).status.success());
    let o = mpvc(&[
        "compare",
        "--case",
        case.to_str().unwrap(),
        "--scenario",
        "load-ramp",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("voltage collapse at"));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("load-ramp_metrics.json")).unwrap()).unwrap();
    let off = metrics["mpvc_off"]["collapse_time"].as_f64().unwrap();
    let on = metrics["mpvc_on"]["collapse_time"].as_f64().unwrap();
    assert!(off < on);
    let csv = std::fs::read_to_string(dir.path().join("load-ramp_off.csv")).unwrap();
    assert!(csv.trim_end().ends_with(&format!("#termination,collapsed,{off:.6}")));
}

#[test]
fn library_entry_point_reports_exit_status() {
    assert_eq!(
        mpvc::main_cli(["mpvc", "build-plant", "--rating", "300", "--distance", "10"]),
        0
    );
    assert_ne!(mpvc::main_cli(["mpvc", "simulate", "--scenario", "nope"]), 0);
    assert_ne!(mpvc::main_cli(["mpvc", "frobnicate"]), 0);
}
