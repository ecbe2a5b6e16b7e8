use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sdlc_sim::scenario::{build_paper_scenario, ScenarioConfig};
use tempfile::TempDir;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdlc-sim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_scenario(dir: &Path, name: &str, config: &ScenarioConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, config.to_json()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Implementation demands capped at two programmers, so small pools stay feasible.
fn light_programmers() -> ScenarioConfig {
    let mut config = build_paper_scenario();
    for class in &mut config.classes {
        class.demands[2] = class.demands[2].min(2);
    }
    config
}

#[test]
fn valid_scenario_runs_and_writes_reports() {
    let tmp = TempDir::new().unwrap();
    let path = write_scenario(tmp.path(), "s.json", &build_paper_scenario());
    let o = bin(&["run", "--scenario", path.to_str().unwrap(), "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("r/report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 42);
    assert_eq!(report["replications"].as_array().unwrap().len(), 5);
    let csv = std::fs::read_to_string(tmp.path().join("r/timeseries.csv")).unwrap();
    assert!(csv.starts_with("time,pool,busy,queued\n"));
}

#[test]
fn malformed_and_invalid_files_exit_one_with_paths() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("broken.json"), "{ \"pools\": [").unwrap();
    let o = bin(&["run", "--scenario", "broken.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1));

    let mut config = build_paper_scenario();
    config.classes[0].probability = 0.75;
    write_scenario(tmp.path(), "bad.json", &config);
    let o = bin(&["validate", "--scenario", "bad.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("classes[].probability"), "{}", stderr(&o));

    let o = bin(&["run", "--scenario", "missing.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = bin(&["paper", "--replications", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn forced_deadlock_exits_two() {
    let tmp = TempDir::new().unwrap();
    let mut config = build_paper_scenario();
    config.pools[2].capacity = 4;
    write_scenario(tmp.path(), "deadlock.json", &config);
    let o = bin(&["run", "--scenario", "deadlock.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "validation refuses the file first");
    assert!(stderr(&o).contains("deadlock"), "{}", stderr(&o));
    let o = bin(&["run", "--scenario", "deadlock.json", "--no-validate"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("programmers"), "{}", stderr(&o));
}

#[test]
fn validate_never_writes() {
    let tmp = TempDir::new().unwrap();
    write_scenario(tmp.path(), "s.json", &build_paper_scenario());
    let o = bin(&["validate", "--scenario", "s.json"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let entries: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn reports_are_byte_identical_across_runs_and_modes() {
    let tmp = TempDir::new().unwrap();
    let runs = [
        vec!["paper", "--out", "a"],
        vec!["paper", "--out", "b"],
        vec!["paper", "--out", "c", "--parallel"],
    ];
    for args in &runs {
        assert_eq!(bin(args, tmp.path()).status.code(), Some(0));
    }
    let read = |d: &str, f: &str| std::fs::read(tmp.path().join(d).join(f)).unwrap();
    for f in ["report.json", "timeseries.csv"] {
        assert_eq!(read("a", f), read("b", f));
        assert_eq!(read("a", f), read("c", f));
    }
    bin(&["paper", "--out", "d", "--seed", "7"], tmp.path());
    assert_ne!(read("a", "report.json"), read("d", "report.json"));
}

#[test]
fn seed_flag_beats_file_beats_default() {
    let tmp = TempDir::new().unwrap();
    let mut config = build_paper_scenario();
    config.seed = Some(9);
    config.replications = Some(2);
    write_scenario(tmp.path(), "s.json", &config);
    let seed_of = |out: &str| {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(tmp.path().join(out).join("report.json")).unwrap())
                .unwrap();
        (v["seed"].as_u64().unwrap(), v["replications"].as_array().unwrap().len())
    };
    bin(&["run", "--scenario", "s.json", "--out", "file"], tmp.path());
    assert_eq!(seed_of("file"), (9, 2));
    bin(&["run", "--scenario", "s.json", "--out", "flag", "--seed", "3", "--replications", "4"], tmp.path());
    assert_eq!(seed_of("flag"), (3, 4));
}

fn read_sweep(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn sweep_rows_and_monotone_delivery_gap() {
    let tmp = TempDir::new().unwrap();
    write_scenario(tmp.path(), "light.json", &light_programmers());
    let o = bin(
        &[
            "sweep",
            "--scenario",
            "light.json",
            "--param",
            "pools.programmers.capacity",
            "--values",
            "2,4,6,8,10",
            "--replications",
            "8",
            "--projects",
            "200",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_sweep(&tmp.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 5 * 8);
    let mut means = Vec::new();
    for chunk in rows.chunks(8) {
        assert!(chunk.iter().all(|r| r[2] == "ok"));
        means.push(chunk.iter().map(|r| r[6].parse::<f64>().unwrap()).sum::<f64>() / 8.0);
    }
    assert!(means.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{means:?}");
}

#[test]
fn sweep_flags_infeasible_values_and_rejects_bad_input() {
    let tmp = TempDir::new().unwrap();
    let args = |values: &'static str| {
        vec!["sweep", "--paper-scenario", "--param", "pools.programmers.capacity", "--values", values]
    };
    let o = bin(&args("8,10"), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_sweep(&tmp.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 10);
    assert!(rows[..5].iter().all(|r| r[2] == "invalid"));
    assert!(rows[5..].iter().all(|r| r[2] == "ok"));

    assert_eq!(bin(&args(""), tmp.path()).status.code(), Some(1));
    let o = bin(
        &["sweep", "--paper-scenario", "--param", "pools.wizards.capacity", "--values", "1"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn single_value_sweep_matches_run() {
    let tmp = TempDir::new().unwrap();
    bin(&["paper", "--out", "run"], tmp.path());
    bin(
        &["sweep", "--paper-scenario", "--param", "pools.programmers.capacity", "--values", "10", "--out", "sw"],
        tmp.path(),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run/report.json")).unwrap()).unwrap();
    let rows = read_sweep(&tmp.path().join("sw/sweep.csv"));
    for (row, rep) in rows.iter().zip(report["replications"].as_array().unwrap()) {
        let art = rep["delivery_art"].as_f64().unwrap();
        assert!((row[6].parse::<f64>().unwrap() - art).abs() < 1e-6);
        assert_eq!(row[4].parse::<f64>().unwrap(), 50.0);
    }
}

#[test]
fn optimize_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let mut single = build_paper_scenario();
    single.pools.truncate(1);
    single.phases.truncate(1);
    for class in &mut single.classes {
        class.demands = vec![1];
    }
    write_scenario(tmp.path(), "single.json", &single);
    let o = bin(
        &["optimize", "--scenario", "single.json", "--replications", "4", "--projects", "100"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/optimization.json")).unwrap()).unwrap();
    assert_eq!(result["capacities"], serde_json::json!([1]));
    assert_eq!(result["status"], "optimal");

    let o = bin(
        &[
            "optimize",
            "--paper-scenario",
            "--epsilon",
            "0",
            "--max-wait",
            "0",
            "--budget",
            "6",
            "--replications",
            "2",
            "--projects",
            "40",
            "--out",
            "unattainable",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let log: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("unattainable/optimization.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(log["status"], "budget_exhausted");
    assert_eq!(log["evaluations"].as_array().unwrap().len(), 6);
}
