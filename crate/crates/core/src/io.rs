//! Result files. Every file starts with a provenance record naming the tool
//! version, the scenario hash and the master seed. Nothing written here
//! depends on wall-clock time, so reruns produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deployment::{DeploymentRun, RouteGraph, RunStatus};
use crate::error::{Error, Result};
use crate::metrics::{searching_time, Metrics};
use crate::scenario::{Scenario, TOOL_VERSION};

pub const SCENARIO_FILE: &str = "scenario.toml";
pub const TERRAIN_FILE: &str = "terrain.txt";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const ROUTE_FILE: &str = "route.json";
pub const TIMING_FILE: &str = "timing.json";
pub const CONVERGENCE_DIR: &str = "convergence";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub scenario_sha256: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn new(scenario: &Scenario) -> Self {
        Provenance {
            tool: TOOL_VERSION.to_string(),
            scenario_sha256: scenario.hash(),
            master_seed: scenario.master_seed,
        }
    }

    /// `# tool=... scenario_sha256=... master_seed=...`
    pub fn comment_line(&self) -> String {
        format!(
            "# tool={} scenario_sha256={} master_seed={}",
            self.tool.replace(' ', "/"),
            self.scenario_sha256,
            self.master_seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteFile {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub status: RunStatus,
    pub route: RouteGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub provenance: Provenance,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub trajectory: PathBuf,
    pub events: PathBuf,
    pub metrics: PathBuf,
    pub route: PathBuf,
    pub convergence: Vec<PathBuf>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("result types serialize")
}

pub fn trajectory_csv(run: &DeploymentRun, prov: &Provenance) -> String {
    let mut out = String::with_capacity(run.trajectory.len() * 64);
    let _ = writeln!(out, "{}", prov.comment_line());
    out.push_str("tick,uav_id,x,y,z,psi,phase\n");
    for r in &run.trajectory {
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.tick, r.uav_id, r.x, r.y, r.z, r.psi, r.phase);
    }
    out
}

pub fn events_jsonl(run: &DeploymentRun, prov: &Provenance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", json(&serde_json::json!({ "provenance": prov })));
    for e in &run.events {
        out.push_str(&json(e));
        out.push('\n');
    }
    out
}

/// Writes every artifact of one run into `dir`, creating it if needed.
/// `scenario` must carry the master seed the run used.
pub fn write_outputs(dir: &Path, scenario: &Scenario, run: &DeploymentRun, metrics: &Metrics) -> Result<OutputPaths> {
    if scenario.master_seed != run.master_seed {
        return Err(Error::InvalidParameter(format!(
            "scenario seed {} does not match run seed {}",
            scenario.master_seed, run.master_seed
        )));
    }
    fs::create_dir_all(dir.join(CONVERGENCE_DIR)).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let prov = Provenance::new(scenario);
    let header = prov.comment_line();

    write(&dir.join(SCENARIO_FILE), &format!("{header}\n{}", scenario.to_toml()))?;
    write(&dir.join(TERRAIN_FILE), &format!("{header}\n{}", scenario.environment.terrain().to_text()))?;
    let paths = OutputPaths {
        dir: dir.to_path_buf(),
        trajectory: dir.join(TRAJECTORY_FILE),
        events: dir.join(EVENTS_FILE),
        metrics: dir.join(METRICS_FILE),
        route: dir.join(ROUTE_FILE),
        convergence: run
            .searches
            .iter()
            .map(|s| dir.join(CONVERGENCE_DIR).join(format!("uav{}_search{}.csv", s.uav_id, s.index)))
            .collect(),
    };
    write(&paths.trajectory, &trajectory_csv(run, &prov))?;
    write(&paths.events, &events_jsonl(run, &prov))?;
    let mf = MetricsFile { provenance: prov.clone(), metrics: metrics.clone() };
    write(&paths.metrics, &(serde_json::to_string_pretty(&mf).expect("metrics serialize") + "\n"))?;
    let rf = RouteFile { provenance: prov.clone(), status: run.status.clone(), route: run.route.clone() };
    write(&paths.route, &(serde_json::to_string_pretty(&rf).expect("route serializes") + "\n"))?;
    for (s, path) in run.searches.iter().zip(&paths.convergence) {
        let mut text = format!("{header}\niteration,gbest\n");
        for (i, c) in s.trace.iter().enumerate() {
            let _ = writeln!(text, "{},{}", i + 1, c);
        }
        write(path, &text)?;
    }
    Ok(paths)
}

/// Wall-clock search timings. Kept apart from the reproducible outputs.
pub fn write_timing(dir: &Path, run: &DeploymentRun) -> Result<PathBuf> {
    let rows: Vec<_> = searching_time(run)
        .into_iter()
        .map(|(id, t)| serde_json::json!({ "uav_id": id, "searching_time_s": t.as_secs_f64() }))
        .collect();
    let searches: Vec<_> = run
        .searches
        .iter()
        .map(|s| serde_json::json!({ "uav_id": s.uav_id, "index": s.index, "wall_time_s": s.wall_time.as_secs_f64() }))
        .collect();
    let path = dir.join(TIMING_FILE);
    let body = serde_json::json!({ "per_uav": rows, "per_search": searches });
    write(&path, &(serde_json::to_string_pretty(&body).expect("timing serializes") + "\n"))?;
    Ok(path)
}

/// Strips leading `#` comment lines.
pub fn strip_comments(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}
