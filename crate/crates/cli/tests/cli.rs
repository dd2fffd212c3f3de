//! End-to-end runs of the `binpack` binary: generate, run, baseline, and
//! inspect, checking the emitted files.

use std::path::Path;
use std::process::Command;

fn binpack() -> Command {
    Command::new(env!("CARGO_BIN_EXE_binpack"))
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).expect("utf8 stdout")
}

#[test]
fn gen_run_baseline_inspect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let instances = dir.path().join("instances.jsonl");
    let csv = dir.path().join("report.csv");
    let json = dir.path().join("report.json");
    let baseline_csv = dir.path().join("baseline.csv");
    let schedules = dir.path().join("schedules.jsonl");
    let trace = dir.path().join("trace.jsonl");

    run_ok(binpack().args([
        "gen",
        "--mode",
        "full-set",
        "--w",
        "4",
        "--h",
        "4",
        "--count",
        "6",
        "--sigma",
        "2",
        "--seed",
        "11",
        "--out",
        instances.to_str().unwrap(),
    ]));
    assert_eq!(read_lines(&instances), 6);

    let stdout = run_ok(binpack().args([
        "run",
        "--scenario",
        "S-R5A3,D-R5A3O1",
        "--instances",
        instances.to_str().unwrap(),
        "--rotation",
        "--repack",
        "--repack-budget",
        "1s",
        "--beam",
        "2",
        "--full-pack",
        "--seed",
        "42",
        "--out",
        csv.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]));
    assert!(stdout.contains("S-R5A3"));
    let report = std::fs::read_to_string(&csv).unwrap();
    assert!(report.starts_with(
        "scenario,seed,rotation,repack,utilization_pct,packed_items,packing_steps,repacked_items,repack_time_ms"
    ));
    assert_eq!(report.lines().count(), 1 + 12);
    assert!(std::fs::read_to_string(&json)
        .unwrap()
        .contains("engine_version"));

    run_ok(binpack().args([
        "baseline",
        "--name",
        "shelf-next-fit",
        "--instances",
        instances.to_str().unwrap(),
        "--out",
        baseline_csv.to_str().unwrap(),
    ]));
    assert_eq!(read_lines(&baseline_csv), 1 + 6);

    let stdout = run_ok(binpack().args([
        "inspect",
        "--scenario",
        "D-R5A3O1",
        "--instances",
        instances.to_str().unwrap(),
        "--rotation",
        "--schedules",
        schedules.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]));
    assert!(stdout.contains("final utilization"));
    assert!(read_lines(&schedules) > 0);
    assert!(read_lines(&trace) > 0);

    let stdout = run_ok(binpack().arg("scenarios"));
    assert!(stdout.contains("D-R5A3O1"));
}

#[test]
fn rejects_unknown_scenario_and_bad_file() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("nope.jsonl");
    std::fs::write(&bogus, "not json\n").unwrap();
    let out = binpack()
        .args([
            "run",
            "--scenario",
            "S-R9A9",
            "--instances",
            bogus.to_str().unwrap(),
            "--out",
            dir.path().join("x.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = binpack()
        .args([
            "run",
            "--scenario",
            "S-R5A3",
            "--instances",
            bogus.to_str().unwrap(),
            "--out",
            dir.path().join("x.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

fn read_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}
