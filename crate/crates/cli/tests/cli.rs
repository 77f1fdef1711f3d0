use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn uavnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavnet")).args(args).output().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_twice_gives_identical_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = uavnet(&["run", "paper_scale_1", "--seed", "7", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.iter().any(|(n, _)| n == "events.jsonl"));
    assert_eq!(fa, fb);
}

#[test]
fn verify_flags_a_tampered_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let d = dir.to_str().unwrap();
    assert!(uavnet(&["run", "paper_scale_2", "--seed", "1", "--out", d]).status.success());
    let ok = uavnet(&["verify", d]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));

    // Obstacle "c" of the scenario sits at (428, 296) with radius 20.
    let path = dir.join("trajectory.csv");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("123456789,2,430,296,330,0,explore\n");
    fs::write(&path, text).unwrap();
    let bad = uavnet(&["verify", d]);
    assert_eq!(bad.status.code(), Some(5));
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.contains("obstacle_clearance tick 123456789"), "{stdout}");
}

#[test]
fn sweep_prints_aggregate_table() {
    let out = uavnet(&["sweep", "flat_control", "--seeds", "1..4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("complete 3/3"), "{stdout}");
    let row = stdout.lines().find(|l| l.trim_start().starts_with("mean_link ")).expect("mean_link row");
    let mean: f64 = row.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((285.0..=300.0).contains(&mean), "{row}");
}

#[test]
fn out_directory_defaults_to_env_var() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_uavnet"))
        .args(["run", "flat_control", "--seed", "3"])
        .env("UAVNET_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("flat_control_seed3").join("route.json").exists());
}

#[test]
fn timing_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(uavnet(&["run", "flat_control", "--out", a.to_str().unwrap()]).status.success());
    assert!(uavnet(&["run", "flat_control", "--out", b.to_str().unwrap(), "--timing"]).status.success());
    assert!(!a.join("timing.json").exists());
    let timing: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("timing.json")).unwrap()).unwrap();
    assert!(timing["per_search"].as_array().is_some_and(|s| !s.is_empty()));
}

#[test]
fn usage_and_input_errors_have_distinct_codes() {
    assert_eq!(uavnet(&["run"]).status.code(), Some(2));
    assert_eq!(uavnet(&["sweep", "flat_control", "--seeds", "5..5"]).status.code(), Some(2));
    assert_eq!(uavnet(&["run", "no_such_scenario"]).status.code(), Some(1));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[uav]\ncomm_range = -1.0\n\n[run]\nbase = [0.0, 0.0, 10.0]\ndestination = [500.0, 0.0, 10.0]\n")
        .unwrap();
    let out = uavnet(&["run", bad.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("comm_range"));
}

#[test]
fn budget_exhaustion_exits_with_failure_code() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = tmp.path().join("short.toml");
    fs::write(
        &sc,
        "[weights]\nb2 = 10.0\n\n[run]\nbase = [0.0, 0.0, 10.0]\ndestination = [1000.0, 0.0, 10.0]\nuav_budget = 2\n",
    )
    .unwrap();
    let out = uavnet(&["run", sc.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn generated_terrain_loads_as_a_scenario_terrain() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("hills.txt");
    let out = uavnet(&[
        "gen-terrain",
        "--kind",
        "rolling",
        "--origin-x",
        "-100",
        "--origin-y",
        "-100",
        "--rows",
        "41",
        "--cols",
        "81",
        "--base",
        "50",
        "--amplitude",
        "8",
        "--seed",
        "4",
        "-o",
        grid.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sc = tmp.path().join("hills.toml");
    fs::write(
        &sc,
        "[environment.terrain]\nkind = \"file\"\npath = \"hills.txt\"\n\n[weights]\nb2 = 10.0\n\n[run]\nbase = [0.0, 0.0, 80.0]\ndestination = [500.0, 100.0, 80.0]\n",
    )
    .unwrap();
    let run = uavnet(&["run", sc.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(run.status.success(), "{}{}", String::from_utf8_lossy(&run.stdout), String::from_utf8_lossy(&run.stderr));
}
