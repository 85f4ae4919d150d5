use std::path::{Path, PathBuf};
use std::process::Command;

use aghf::cli::{cmd_solve, cmd_sweep, load_config, parse_config, Problem, RunSummary, SweepParam};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn small_unicycle(extra_solver: &str) -> Problem {
    let text = format!(
        r#"{{
          "schema": 1,
          "system": "unicycle",
          "boundary": [
            {{ "start": 0, "end": 0 }},
            {{ "start": 0, "end": 1 }},
            {{ "start": 0, "end": 0 }}
          ],
          "mode": {{ "fixed_time": {{ "T": 1.5 }} }},
          "solver": {{ "lambda": 100, "N": 40, "s_max": 0.05, "snapshot_s": [0, 0.01, 0.05] {extra_solver} }}
        }}"#
    );
    parse_config(&text).unwrap()
}

fn read_rows(path: &Path) -> (csv::StringRecord, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().clone();
    let rows = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            assert_eq!(r.len(), header.len(), "ragged row in {}", path.display());
            r.iter().map(|v| v.parse::<f64>().unwrap()).collect()
        })
        .collect();
    (header, rows)
}

#[test]
fn solve_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (summary, files) = cmd_solve(&small_unicycle(""), dir.path()).unwrap();
    for f in [&files.summary, &files.control, &files.path, &files.action] {
        assert!(f.is_file(), "{}", f.display());
    }
    assert_eq!(files.snapshots.len(), 3);
    assert!(files.snapshot_index.as_ref().unwrap().is_file());

    let (h, control) = read_rows(&files.control);
    assert_eq!(h.iter().collect::<Vec<_>>(), ["t", "u1"]);
    assert!((control.last().unwrap()[0] - 1.5).abs() < 1e-12);
    let (h, path) = read_rows(&files.path);
    assert_eq!(h.iter().collect::<Vec<_>>(), ["t", "x1", "x2", "x3"]);
    assert_eq!(&path[0][1..], &[0.0, 0.0, 0.0]);
    let (h, action) = read_rows(&files.action);
    assert_eq!(h.iter().collect::<Vec<_>>(), ["s", "A"]);
    assert!(action.windows(2).all(|w| w[1][1] <= w[0][1] * (1.0 + 1e-6)));
    let (_, snap) = read_rows(&files.snapshots[0]);
    assert_eq!(snap.len(), 41);

    let text = std::fs::read_to_string(&files.summary).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["E", "T", "converged", "endpoint_errors", "s_final", "schema", "wall_ms"]);
    let parsed: RunSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, summary);
}

#[test]
fn snapshot_actions_never_increase() {
    let dir = tempfile::tempdir().unwrap();
    let (_, files) = cmd_solve(&small_unicycle(""), dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(files.snapshot_index.unwrap()).unwrap();
    let actions: Vec<f64> = rdr.records().map(|r| r.unwrap()[2].parse().unwrap()).collect();
    assert_eq!(actions.len(), 3);
    assert!(actions.windows(2).all(|w| w[1] <= w[0]), "{actions:?}");
}

#[test]
fn repeated_solves_are_identical() {
    let problem = small_unicycle("");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (mut sa, fa) = cmd_solve(&problem, a.path()).unwrap();
    let (mut sb, fb) = cmd_solve(&problem, b.path()).unwrap();
    sa.wall_ms = 0;
    sb.wall_ms = 0;
    assert_eq!(sa, sb);
    for (x, y) in [(&fa.control, &fb.control), (&fa.path, &fb.path), (&fa.action, &fb.action)] {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}

#[test]
fn sweep_keeps_input_order_and_row_failures() {
    let problem = small_unicycle("");
    let rows = cmd_sweep(&problem, SweepParam::Lambda, &[100.0, -1.0, 10.0], 2).unwrap();
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), [100.0, -1.0, 10.0]);
    assert!(rows[0].error.is_none() && rows[2].error.is_none());
    assert!(rows[1].error.as_ref().unwrap().contains("lambda"));
    assert!(rows[1].e.is_none());

    let err = cmd_sweep(&problem, SweepParam::T, &[], 1).unwrap_err();
    assert_eq!(err.kind(), "config");
}

#[test]
fn sweep_rows_match_single_runs() {
    let problem = small_unicycle("");
    let rows = cmd_sweep(&problem, SweepParam::T, &[1.5], 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (single, _) = cmd_solve(&problem, dir.path()).unwrap();
    assert_eq!(rows[0].e, Some(single.e));
    assert_eq!(rows[0].t, Some(single.t));
}

#[test]
fn shipped_examples_load() {
    for entry in std::fs::read_dir(example("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}

fn aghf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aghf"))
}

#[test]
fn binary_solves_and_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = aghf()
        .args(["--quiet", "--out-dir"])
        .arg(dir.path())
        .arg("solve")
        .arg(example("single_integrator.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: RunSummary =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary.max_endpoint_error() < 1e-6);
    assert!((summary.e - 1.0).abs() < 1e-3, "{}", summary.e);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema": 1, "system": "unicycle", "boundary": [], "mode": {"fixed_time": {"T": 1}}, "solver": {"lambda": 1, "N": 10}}"#).unwrap();
    let out = aghf().arg("solve").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["error"], "config");

    let out = aghf().arg("solve").arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["error"], "io");
}

#[test]
fn binary_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = aghf()
        .args(["--quiet", "--workers", "1", "--out-dir"])
        .arg(dir.path())
        .arg("sweep")
        .arg(example("single_integrator.json"))
        .args(["--param", "T", "--values", "1,2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    // Unit displacement in time T costs 1/T.
    for (row, t) in rows.iter().zip([1.0, 2.0]) {
        let e: f64 = row[2].parse().unwrap();
        assert!((e - 1.0 / t).abs() < 1e-3, "T={t}: E={e}");
    }
}
