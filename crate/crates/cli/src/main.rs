//! `uavnet`: run, verify and sweep relay deployment scenarios.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Point2;
use rayon::prelude::*;
use uavnet_core::io::{write_outputs, write_timing};
use uavnet_core::metrics::searching_time;
use uavnet_core::scenario::{bundled, BUNDLED};
use uavnet_core::{compute_metrics, run_deployment, verify_dir, Metrics, RunStatus, Scenario, Terrain};

const EXIT_ERROR: u8 = 1;
const EXIT_FAILURE: u8 = 3;
const EXIT_TIMEOUT: u8 = 4;
const EXIT_VIOLATIONS: u8 = 5;

#[derive(Parser)]
#[command(name = "uavnet", version, about = "Relay-chain UAV deployment simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one deployment and write its result files.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        /// Master seed; defaults to the scenario's own.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: $UAVNET_OUT/<name>_seed<N>, else out/<name>_seed<N>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write wall-clock search timings to timing.json.
        #[arg(long)]
        timing: bool,
    },
    /// Re-check an output directory for link and safety violations.
    Verify { dir: PathBuf },
    /// Run a range of seeds and print aggregate statistics.
    Sweep {
        scenario: String,
        /// Half-open seed range, `A..B`.
        #[arg(long, value_parser = parse_range)]
        seeds: Range<u64>,
        /// Write each trial's files under DIR/seed_<N>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic terrain grid in the plain-text terrain format.
    GenTerrain(GenTerrain),
    /// List the bundled scenarios.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum TerrainKind {
    Flat,
    Ramp,
    Rolling,
}

#[derive(clap::Args)]
struct GenTerrain {
    #[arg(long, value_enum, default_value = "rolling")]
    kind: TerrainKind,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    origin_x: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    origin_y: f64,
    #[arg(long, default_value_t = 10.0)]
    cell_size: f64,
    #[arg(long, default_value_t = 101)]
    rows: usize,
    #[arg(long, default_value_t = 101)]
    cols: usize,
    /// Height of flat terrain, base height of the others.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    base: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    slope_x: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    slope_y: f64,
    #[arg(long, default_value_t = 10.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 4)]
    passes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let a: u64 = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
    if b <= a {
        return Err(format!("empty seed range {s}"));
    }
    Ok(a..b)
}

fn load_scenario(arg: &str) -> Result<Scenario, String> {
    let path = Path::new(arg);
    if path.exists() {
        return Scenario::load(path).map_err(|e| e.to_string());
    }
    bundled(arg).ok_or_else(|| {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        format!("{arg}: no such file or bundled scenario (bundled: {})", names.join(", "))
    })
}

fn status_code(status: &RunStatus) -> ExitCode {
    match status {
        RunStatus::Complete => ExitCode::SUCCESS,
        RunStatus::Failure(_) => ExitCode::from(EXIT_FAILURE),
        RunStatus::Timeout => ExitCode::from(EXIT_TIMEOUT),
    }
}

fn status_text(status: &RunStatus) -> String {
    match status {
        RunStatus::Complete => "complete".into(),
        RunStatus::Failure(r) => format!("failure ({r})"),
        RunStatus::Timeout => "timeout".into(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}

fn cmd_run(scenario: &str, seed: Option<u64>, out: Option<PathBuf>, timing: bool) -> Result<ExitCode, String> {
    let sc = load_scenario(scenario)?;
    let seed = seed.unwrap_or(sc.master_seed);
    let sc = sc.with_master_seed(seed);
    let dir = out.unwrap_or_else(|| {
        let root = std::env::var_os("UAVNET_OUT").map_or_else(|| PathBuf::from("out"), PathBuf::from);
        root.join(format!("{}_seed{seed}", sc.name))
    });
    let run = run_deployment(&sc, seed).map_err(|e| e.to_string())?;
    let metrics = compute_metrics(&run, &sc);
    write_outputs(&dir, &sc, &run, &metrics).map_err(|e| e.to_string())?;
    if timing {
        write_timing(&dir, &run).map_err(|e| e.to_string())?;
    }
    print_summary(&sc, seed, &metrics, &dir);
    Ok(status_code(&run.status))
}

fn print_summary(sc: &Scenario, seed: u64, m: &Metrics, dir: &Path) {
    println!("scenario {} seed {seed}: {}", sc.name, status_text(&m.status));
    println!("uavs {}  ticks {}  simulated {:.1} s  searches {}", m.uav_count, m.ticks, m.simulated_time, m.searches);
    println!(
        "{:>4} {:>28} {:>10} {:>10} {:>8} {:>6} {:>10}",
        "uav", "position", "link", "deviation", "angle", "goals", "deploy_s"
    );
    for r in &m.rows {
        println!(
            "{:>4} {:>28} {:>10.2} {:>10.2} {:>8.3} {:>6} {:>10.1}",
            r.uav_id,
            format!("({:.1}, {:.1}, {:.1})", r.position.x, r.position.y, r.position.z),
            r.link_length,
            r.deviation,
            r.target_angle,
            r.temporary_goals,
            r.deployment_time
        );
    }
    println!(
        "mean link (excl. final) {}  max link {}  mean deviation {}  mean angle deviation {}",
        fmt_opt(m.mean_link_excluding_final),
        fmt_opt(m.max_link),
        fmt_opt(m.mean_deviation),
        fmt_opt(m.mean_angle_deviation)
    );
    println!("wrote {}", dir.display());
}

fn cmd_verify(dir: &Path) -> Result<ExitCode, String> {
    let report = verify_dir(dir).map_err(|e| e.to_string())?;
    if report.ok() {
        println!("ok: {} samples, no violations", report.samples);
        return Ok(ExitCode::SUCCESS);
    }
    println!("{} violations", report.violations.len());
    for v in &report.violations {
        let tick = v.tick.map_or_else(|| "-".into(), |t| t.to_string());
        let uav = v.uav_id.map_or_else(|| "-".into(), |u| u.to_string());
        println!("{} tick {tick} uav {uav}: {}", v.kind, v.detail);
    }
    Ok(ExitCode::from(EXIT_VIOLATIONS))
}

struct Trial {
    seed: u64,
    metrics: Metrics,
    search_time: Duration,
}

fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some((mean, var.sqrt()))
}

fn cmd_sweep(scenario: &str, seeds: Range<u64>, out: Option<PathBuf>) -> Result<ExitCode, String> {
    let base = load_scenario(scenario)?;
    let trials: Vec<Trial> = seeds
        .clone()
        .into_par_iter()
        .map(|seed| {
            let sc = base.with_master_seed(seed);
            let run = run_deployment(&sc, seed).map_err(|e| e.to_string())?;
            let metrics = compute_metrics(&run, &sc);
            if let Some(root) = &out {
                write_outputs(&root.join(format!("seed_{seed}")), &sc, &run, &metrics).map_err(|e| e.to_string())?;
            }
            let search_time = searching_time(&run).iter().map(|(_, t)| *t).sum();
            Ok(Trial { seed, metrics, search_time })
        })
        .collect::<Result<_, String>>()?;

    println!("scenario {} seeds {}..{}", base.name, seeds.start, seeds.end);
    println!(
        "{:>6} {:>10} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "seed", "status", "uavs", "mean_link", "max_link", "deviation", "angle_dev", "sim_s", "search_s"
    );
    for t in &trials {
        let m = &t.metrics;
        let status = match m.status {
            RunStatus::Complete => "complete",
            RunStatus::Failure(_) => "failure",
            RunStatus::Timeout => "timeout",
        };
        println!(
            "{:>6} {:>10} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10.1} {:>10.3}",
            t.seed,
            status,
            m.uav_count,
            fmt_opt(m.mean_link_excluding_final),
            fmt_opt(m.max_link),
            fmt_opt(m.mean_deviation),
            m.mean_angle_deviation.map_or_else(|| "-".into(), |a| format!("{a:.3}")),
            m.simulated_time,
            t.search_time.as_secs_f64()
        );
    }

    let complete: Vec<&Trial> = trials.iter().filter(|t| t.metrics.status == RunStatus::Complete).collect();
    println!("complete {}/{}", complete.len(), trials.len());
    let column = |f: &dyn Fn(&Trial) -> Option<f64>| -> Vec<f64> { complete.iter().filter_map(|t| f(t)).collect() };
    let stats: [(&str, Vec<f64>); 7] = [
        ("uav_count", column(&|t| Some(t.metrics.uav_count as f64))),
        ("mean_link", column(&|t| t.metrics.mean_link_excluding_final)),
        ("max_link", column(&|t| t.metrics.max_link)),
        ("deviation", column(&|t| t.metrics.mean_deviation)),
        ("angle_deviation", column(&|t| t.metrics.mean_angle_deviation)),
        ("simulated_time_s", column(&|t| Some(t.metrics.simulated_time))),
        ("searching_time_s", column(&|t| Some(t.search_time.as_secs_f64()))),
    ];
    println!("{:>18} {:>12} {:>12}", "field", "mean", "stddev");
    for (name, xs) in &stats {
        match mean_std(xs) {
            Some((m, s)) => println!("{name:>18} {m:>12.4} {s:>12.4}"),
            None => println!("{name:>18} {:>12} {:>12}", "-", "-"),
        }
    }
    Ok(if complete.len() == trials.len() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILURE) })
}

fn cmd_gen_terrain(g: &GenTerrain) -> Result<ExitCode, String> {
    let origin = Point2::new(g.origin_x, g.origin_y);
    let terrain = match g.kind {
        TerrainKind::Flat => Terrain::flat(origin, g.cell_size, g.rows, g.cols, g.base),
        TerrainKind::Ramp => Terrain::ramp(origin, g.cell_size, g.rows, g.cols, g.base, g.slope_x, g.slope_y),
        TerrainKind::Rolling => {
            Terrain::rolling(origin, g.cell_size, g.rows, g.cols, g.base, g.amplitude, g.passes, g.seed)
        }
    }
    .map_err(|e| e.to_string())?;
    let text = terrain.to_text();
    match &g.out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, seed, out, timing } => cmd_run(&scenario, seed, out, timing),
        Command::Verify { dir } => cmd_verify(&dir),
        Command::Sweep { scenario, seeds, out } => cmd_sweep(&scenario, seeds, out),
        Command::GenTerrain(g) => cmd_gen_terrain(&g),
        Command::List => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_ERROR)
    })
}
