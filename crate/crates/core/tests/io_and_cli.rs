use std::path::Path;
use std::process::Command;

use gasnet::driver::run_cli;
use gasnet::integrate::simulate;
use gasnet::scenario_io::{builtin_case, read_csv, write_csv, CSV_HEADER};
use gasnet::schemes::PipeGrid;

fn snapshot_case(cells: usize) -> gasnet::Scenario {
    let mut s = builtin_case("pipe_step").unwrap();
    let g = s.network.pipes[0].grid;
    s.network.pipes[0].grid = PipeGrid::new(g.geom, g.law, cells).unwrap();
    s.t_end = 0.0;
    s
}

#[test]
fn single_snapshot_writes_one_row_per_grid_point() {
    let traj = simulate(&snapshot_case(4)).unwrap().trajectory;
    let mut buf = Vec::new();
    assert_eq!(write_csv(&traj, &mut buf).unwrap(), 5);
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0], CSV_HEADER.join(","));
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let traj = simulate(&snapshot_case(7)).unwrap().trajectory;
    let mut buf = Vec::new();
    write_csv(&traj, &mut buf).unwrap();
    let rows = read_csv(buf.as_slice()).unwrap();
    let u = traj.final_state();
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.pipe_id, "P1");
        assert_eq!(row.cell_index, i);
        assert_eq!(row.t_s, 0.0);
        assert_eq!(row.x_m.to_bits(), traj.xs[0][i].to_bits());
        assert_eq!(row.p_pa.to_bits(), u[2 * i].to_bits());
        assert_eq!(row.q_kgs.to_bits(), u[2 * i + 1].to_bits());
    }
}

fn arg_list<'a>(cmd: &'a str, out: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut v = vec!["gasnet".to_string(), cmd.to_string()];
    v.extend(extra.iter().map(|s| s.to_string()));
    v.push("--out".into());
    v.push(out.display().to_string());
    v
}

#[test]
fn run_writes_csv_and_reports_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_cli(arg_list(
        "run",
        dir.path(),
        &["--case", "pipe_steady", "--scheme", "new"],
    ));
    assert_eq!(r.exit_code, 0, "{}", r.summary);
    assert_eq!(r.artifacts.len(), 2);
    for a in &r.artifacts {
        assert!(a.exists());
        assert!(r.summary.contains(&a.display().to_string()));
    }
    let csv = r
        .artifacts
        .iter()
        .find(|a| a.extension().is_some_and(|e| e == "csv"))
        .unwrap();
    let rows = read_csv(std::fs::File::open(csv).unwrap()).unwrap();
    let last_t = rows.last().unwrap().t_s;
    let final_rows: Vec<_> = rows.iter().filter(|r| r.t_s == last_t).collect();
    assert_eq!(final_rows.len(), 61);
    for row in final_rows {
        assert!(
            (row.q_kgs - 150.0).abs() <= 1e-6 * 150.0,
            "cell {}: {}",
            row.cell_index,
            row.q_kgs
        );
    }
}

#[test]
fn run_reports_the_oscillation_metric_for_reference_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_cli(arg_list(
        "run",
        dir.path(),
        &["--case", "pipe_steady", "--scheme", "mid"],
    ));
    assert_eq!(r.exit_code, 0, "{}", r.summary);
    assert!(r.summary.contains("oscillation metric (inlet flux of pipe P1)"));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let cases: Vec<Vec<String>> = vec![
        arg_list("run", dir.path(), &["--network", missing.to_str().unwrap()]),
        arg_list("run", dir.path(), &["--case", "no_such_case"]),
        arg_list("run", dir.path(), &["--case", "pipe_step", "--scheme", "upwind"]),
        arg_list(
            "convergence",
            dir.path(),
            &["--target", "uniform_flow", "--levels", "2"],
        ),
        arg_list("compare", dir.path(), &["--case", "pipe_step", "--schemes", "new"]),
    ];
    for args in cases {
        let r = run_cli(&args);
        assert_eq!(r.exit_code, 2, "{args:?}");
        assert!(!r.summary.trim().is_empty());
        assert!(r.artifacts.is_empty());
    }
}

#[test]
fn malformed_network_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    std::fs::write(
        &path,
        "{ \"gas\": { \"law\": \"isothermal\", \"c\": 300 }, \"nodes\": [",
    )
    .unwrap();
    let r = run_cli(arg_list("run", dir.path(), &["--network", path.to_str().unwrap()]));
    assert_eq!(r.exit_code, 2);
    assert!(r.summary.contains("line"), "{}", r.summary);
}

#[test]
fn numerical_failure_exits_with_one() {
    // a demand far beyond what the pipe can carry drives the pressure to zero
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    let scenario = r#"{
        "t_end_s": 50, "output_dt_s": 10, "init": {"type": "steady"}, "scheme": "new",
        "network": {
            "gas": { "law": "isothermal", "c": 383.0735 },
            "nodes": [
                { "id": "in", "type": "pressure", "signal": { "unit": "bar", "interp": "pconst", "points": [[0, 5]] } },
                { "id": "out", "type": "flux", "signal": { "unit": "kg_per_s", "interp": "pconst", "points": [[0, 5000]] } }
            ],
            "pipes": [ { "id": "P1", "from": "in", "to": "out", "length_m": 50000, "diameter_m": 0.3, "friction": 0.02, "cells": 10 } ]
        }
    }"#;
    std::fs::write(&path, scenario).unwrap();
    let r = run_cli(arg_list("run", dir.path(), &["--scenario", path.to_str().unwrap()]));
    assert_eq!(r.exit_code, 1, "{}", r.summary);
}

#[test]
fn reruns_into_fresh_directories_produce_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let extra = ["--case", "pipe_step", "--t-end", "30"];
    let ra = run_cli(arg_list("compare", a.path(), &extra));
    let rb = run_cli(arg_list("compare", b.path(), &extra));
    assert_eq!((ra.exit_code, rb.exit_code), (0, 0));
    for (x, y) in ra.artifacts.iter().zip(&rb.artifacts) {
        if x.extension().is_some_and(|e| e == "csv") {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
        }
    }
}

#[test]
fn convergence_and_steady_commands_write_their_reports() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_cli(arg_list(
        "convergence",
        dir.path(),
        &["--target", "steady_residual", "--source", "simpson"],
    ));
    assert_eq!(r.exit_code, 0, "{}", r.summary);
    assert!(r.summary.contains("check slope"));
    let r = run_cli(arg_list("steady", dir.path(), &["--case", "diamond_step", "--direct"]));
    assert_eq!(r.exit_code, 0, "{}", r.summary);
    assert!(r.summary.contains("check flux uniform"));
    let r = run_cli(arg_list(
        "bench",
        dir.path(),
        &["--case", "pipe_step", "--t-end", "20", "--repeats", "1"],
    ));
    assert_eq!(r.exit_code, 0, "{}", r.summary);
}

#[test]
fn binary_maps_results_to_process_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_gasnet");
    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(bin)
        .args(["run", "--case", "pipe_step", "--t-end", "5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("wrote"));
    let bad = Command::new(bin)
        .args(["run", "--network", "/nonexistent/net.json"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error"));
}
