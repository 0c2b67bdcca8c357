use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cubeconf::{CellPos, Scenario};

fn cubeconf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cubeconf")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let path = dir.join("s.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_is_reproducible_and_loads() {
    let a = cubeconf(&["gen", "--kind", "2Dto3D", "--agents", "6", "--seed", "9"]);
    let b = cubeconf(&["gen", "--kind", "2Dto3D", "--agents", "6", "--seed", "9"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let s = Scenario::from_json_str(&stdout(&a)).unwrap();
    assert_eq!(s.agents(), 6);
    assert_eq!(s.to_json_string(), stdout(&a));
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = cubeconf(&["run", "--kind", "2Dto2D", "--agents", "5", "--seed", "2"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["final_potential"], 5.0);

    let short = cubeconf(&["run", "--kind", "2Dto2D", "--agents", "5", "--seed", "2", "--max-steps", "3"]);
    assert_eq!(short.status.code(), Some(2));

    let dup = write_scenario(
        dir.path(),
        r#"{"name": "d", "dim": 2, "bounds": {"min": [0, 0], "max": [2, 2]},
            "initial": [[0, 0], [0, 0]], "target": [[1, 1], [2, 2]],
            "params": {"tau": 0.1, "seed": 0, "max_steps": 10, "mode": "global"}}"#,
    );
    let bad = cubeconf(&["run", "--scenario", &dup]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("duplicate-cell"));
}

#[test]
fn already_at_target_converges_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        r#"{"name": "same", "dim": 3, "bounds": {"min": [0, 0, 0], "max": [2, 2, 2]},
            "initial": [[0, 0, 1], [0, 0, 2]], "target": [[0, 0, 2], [0, 0, 1]],
            "params": {"tau": 0.1, "seed": 0, "max_steps": 10, "mode": "local"}}"#,
    );
    let o = cubeconf(&["run", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["steps_to_converge"], 0);
}

#[test]
fn identical_flags_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = cubeconf(&[
            "run", "--kind", "3Dto3D", "--agents", "5", "--seed", "4", "--tau", "0.05", "--max-steps", "3000",
            "--mode", "local", "--out", dir.path().to_str().unwrap(),
        ]);
        assert!(matches!(o.status.code(), Some(0 | 2)));
    }
    for file in ["trace.json", "curve.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn curve_is_ordered_and_ends_at_final_potential() {
    let dir = tempfile::tempdir().unwrap();
    let o = cubeconf(&[
        "run", "--kind", "2Dto2D", "--agents", "4", "--seed", "7", "--tau", "0.2",
        "--max-steps", "15000", "--out", dir.path().to_str().unwrap(),
    ]);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let curve = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let rows: Vec<(u64, f64)> = curve
        .lines()
        .skip(1)
        .map(|l| {
            let (s, p) = l.split_once(',').unwrap();
            (s.parse().unwrap(), p.parse().unwrap())
        })
        .collect();
    assert!(rows.windows(2).all(|w| w[0].0 < w[1].0));
    let last = rows.last().unwrap();
    assert_eq!(last.0, summary["steps"].as_u64().unwrap());
    assert_eq!(last.1, summary["final_potential"].as_f64().unwrap());
}

#[test]
fn plan_output_replays() {
    let gen = cubeconf(&["gen", "--kind", "3Dto3D", "--agents", "7", "--seed", "5"]);
    let scenario = Scenario::from_json_str(&stdout(&gen)).unwrap();
    let o = cubeconf(&["plan", "--kind", "3Dto3D", "--agents", "7", "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let steps: Vec<serde_json::Value> = serde_json::from_str(&stdout(&o)).unwrap();
    let mut state = scenario.initial().clone();
    let cell = |v: &serde_json::Value| {
        let c: Vec<i64> = serde_json::from_value(v.clone()).unwrap();
        CellPos::from_coords(scenario.dim(), &c).unwrap()
    };
    for s in &steps {
        let agent = s["agent"].as_u64().unwrap() as usize;
        assert_eq!(state.position(agent).unwrap(), cell(&s["from"]));
        state.move_agent(agent, cell(&s["to"])).unwrap();
    }
    let mut want = scenario.target().cells().to_vec();
    want.sort();
    assert_eq!(state.sorted_cells(), want);
}

#[test]
fn oracle_reports_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump.json");
    let o = cubeconf(&["oracle", "--agents", "2", "--bounds", "3x3", "--tau", "0.5", "--dump", dump.to_str().unwrap()]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["n_states"], 72);
    assert!(report["sup_deviation"].as_f64().unwrap() <= 1e-8);
    let d: serde_json::Value = serde_json::from_str(&fs::read_to_string(dump).unwrap()).unwrap();
    assert_eq!(d["matrix"].as_array().unwrap().len(), 72);

    let refused = cubeconf(&["oracle", "--agents", "4", "--bounds", "6x6", "--tau", "1"]);
    assert_eq!(refused.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("cap"));
}

#[test]
fn sweep_writes_summary_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = cubeconf(&[
        "sweep", "--kinds", "2Dto2D,3Dto2D", "--sizes", "3", "--seeds", "2", "--tau", "0.01",
        "--max-steps", "50000", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "kind,n_agents,seed,converged,steps");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("2Dto2D,3,1,"));
    assert!(lines[4].starts_with("3Dto2D,3,2,"));
}
