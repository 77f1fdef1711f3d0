//! Scenario files: a TOML tree with `environment`, `uav`, `pso`,
//! `behavior`, `weights` and `run` sections. Everything except
//! `run.base` and `run.destination` has a default.

use std::path::{Path, PathBuf};

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::behavior::BehaviorGains;
use crate::environment::{Bounds, Environment, Obstacle, Terrain};
use crate::error::{Error, Result};
use crate::fitness::FitnessWeights;
use crate::pso::{ExploreConfig, PsoConfig};
use crate::vehicle::UavParams;

pub const TOOL_VERSION: &str = concat!("uavnet ", env!("CARGO_PKG_VERSION"));

/// Margin around base and destination for the auto-fitted flat terrain.
const AUTO_MARGIN: f64 = 200.0;
const AUTO_CELL: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainSpec {
    Flat {
        origin: [f64; 2],
        cell_size: f64,
        rows: usize,
        cols: usize,
        height: f64,
    },
    Ramp {
        origin: [f64; 2],
        cell_size: f64,
        rows: usize,
        cols: usize,
        base: f64,
        slope_x: f64,
        slope_y: f64,
    },
    Rolling {
        origin: [f64; 2],
        cell_size: f64,
        rows: usize,
        cols: usize,
        base: f64,
        amplitude: f64,
        passes: usize,
        seed: u64,
    },
    /// Plain-text grid file; relative paths resolve against the scenario file.
    File {
        path: PathBuf,
    },
}

impl TerrainSpec {
    pub fn build(&self, dir: Option<&Path>) -> Result<Terrain> {
        match self {
            TerrainSpec::Flat { origin, cell_size, rows, cols, height } => {
                Terrain::flat(Point2::from(*origin), *cell_size, *rows, *cols, *height)
            }
            TerrainSpec::Ramp { origin, cell_size, rows, cols, base, slope_x, slope_y } => {
                Terrain::ramp(Point2::from(*origin), *cell_size, *rows, *cols, *base, *slope_x, *slope_y)
            }
            TerrainSpec::Rolling { origin, cell_size, rows, cols, base, amplitude, passes, seed } => {
                Terrain::rolling(Point2::from(*origin), *cell_size, *rows, *cols, *base, *amplitude, *passes, *seed)
            }
            TerrainSpec::File { path } => {
                let full = match dir {
                    Some(d) if path.is_relative() => d.join(path),
                    _ => path.clone(),
                };
                Terrain::load(full)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub id: String,
    pub center: [f64; 2],
    pub radius: f64,
    pub base_height: f64,
    pub top_height: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terrain: Option<TerrainSpec>,
    /// Height above the highest terrain point the default bounds reach.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub headroom: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSpec>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavSection {
    pub size_d: f64,
    pub safe_margin: f64,
    pub comm_range: f64,
    pub sense_range: f64,
    pub max_speed: f64,
    pub altitude_min: f64,
}

impl Default for UavSection {
    fn default() -> Self {
        let p = UavParams::default();
        Self {
            size_d: p.size_d,
            safe_margin: p.safe_margin,
            comm_range: p.comm_range,
            sense_range: p.sense_range,
            max_speed: p.max_speed,
            altitude_min: p.altitude_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoSection {
    pub population: usize,
    pub iter_max: usize,
    pub inertia: f64,
    pub inertia_damping: f64,
    pub c1: f64,
    pub c2: f64,
    pub velocity_max_fraction: f64,
    pub init_retries: usize,
    pub boundary_margin: f64,
    pub min_progress: f64,
    pub max_legs: usize,
}

impl Default for PsoSection {
    fn default() -> Self {
        let p = PsoConfig::default();
        let e = ExploreConfig::default();
        Self {
            population: p.population,
            iter_max: p.iter_max,
            inertia: p.inertia,
            inertia_damping: p.inertia_damping,
            c1: p.c1,
            c2: p.c2,
            velocity_max_fraction: p.velocity_max_fraction,
            init_retries: p.init_retries,
            boundary_margin: e.boundary_margin,
            min_progress: e.min_progress,
            max_legs: e.max_legs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub base: [f64; 3],
    pub destination: [f64; 3],
    #[serde(default = "default_uav_budget")]
    pub uav_budget: u32,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_tick_budget")]
    pub tick_budget: u64,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_uav_budget() -> u32 {
    8
}

fn default_dt() -> f64 {
    0.1
}

fn default_tick_budget() -> u64 {
    100_000
}

/// On-disk form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub uav: UavSection,
    #[serde(default)]
    pub pso: PsoSection,
    #[serde(default)]
    pub behavior: BehaviorGains,
    #[serde(default)]
    pub weights: FitnessWeights,
    pub run: RunSection,
}

/// A validated scenario with its environment built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub environment: Environment,
    pub base: Point3<f64>,
    pub destination: Point3<f64>,
    pub uav: UavParams,
    pub uav_budget: u32,
    pub pso: PsoConfig,
    pub explore: ExploreConfig,
    pub behavior: BehaviorGains,
    pub weights: FitnessWeights,
    pub dt: f64,
    pub tick_budget: u64,
    pub master_seed: u64,
    /// Fully resolved file form: every default written out.
    pub file: ScenarioFile,
}

impl Scenario {
    /// Parses TOML text. `dir` resolves relative terrain file paths.
    pub fn from_toml(text: &str, dir: Option<&Path>) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse {
            location: match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    format!("scenario line {line}")
                }
                None => "scenario".into(),
            },
            message: e.message().to_string(),
        })?;
        Self::from_file(file, dir)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn from_file(mut file: ScenarioFile, dir: Option<&Path>) -> Result<Self> {
        let base = Point3::from(file.run.base);
        let destination = Point3::from(file.run.destination);
        let terrain_spec = file.environment.terrain.get_or_insert_with(|| auto_terrain(&base, &destination)).clone();
        if let (TerrainSpec::File { path }, Some(d)) = (&terrain_spec, dir) {
            if path.is_relative() {
                file.environment.terrain = Some(TerrainSpec::File { path: d.join(path) });
            }
        }
        let terrain = terrain_spec.build(dir)?;
        let bounds = match &file.environment.bounds {
            Some(b) => Bounds::new(Point3::from(b.min), Point3::from(b.max))?,
            None => {
                let top = base.z.max(destination.z);
                let headroom =
                    *file.environment.headroom.get_or_insert_with(|| (top - terrain.max_height() + 100.0).max(300.0));
                Environment::default_bounds(&terrain, headroom)?
            }
        };
        let obstacles = file
            .environment
            .obstacles
            .iter()
            .map(|o| Obstacle {
                id: o.id.clone(),
                center: Point2::from(o.center),
                radius: o.radius,
                base_height: o.base_height,
                top_height: o.top_height,
            })
            .collect();
        let environment = Environment::new(terrain, obstacles, bounds)?;
        let u = &file.uav;
        let p = &file.pso;
        let sc = Scenario {
            name: file.name.clone().unwrap_or_else(|| "scenario".into()),
            environment,
            base,
            destination,
            uav: UavParams {
                size_d: u.size_d,
                safe_margin: u.safe_margin,
                comm_range: u.comm_range,
                sense_range: u.sense_range,
                max_speed: u.max_speed,
                altitude_min: u.altitude_min,
            },
            uav_budget: file.run.uav_budget,
            pso: PsoConfig {
                population: p.population,
                iter_max: p.iter_max,
                inertia: p.inertia,
                inertia_damping: p.inertia_damping,
                c1: p.c1,
                c2: p.c2,
                seed: file.run.master_seed,
                velocity_max_fraction: p.velocity_max_fraction,
                init_retries: p.init_retries,
            },
            explore: ExploreConfig {
                boundary_margin: p.boundary_margin,
                min_progress: p.min_progress,
                max_legs: p.max_legs,
            },
            behavior: file.behavior,
            weights: file.weights,
            dt: file.run.dt,
            tick_budget: file.run.tick_budget,
            master_seed: file.run.master_seed,
            file,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let v = |e: Error| match e {
            Error::InvalidParameter(m) => Error::Validation(m),
            other => other,
        };
        self.uav.validate().map_err(v)?;
        self.pso.validate().map_err(v)?;
        self.explore.validate().map_err(v)?;
        self.behavior.validate().map_err(v)?;
        self.weights.validate().map_err(v)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if self.tick_budget == 0 {
            return Err(Error::Validation("tick_budget must be >= 1".into()));
        }
        if self.uav_budget == 0 {
            return Err(Error::Validation("uav_budget must be >= 1".into()));
        }
        if self.base == self.destination {
            return Err(Error::Validation("base and destination must differ".into()));
        }
        for (label, p) in [("base", &self.base), ("destination", &self.destination)] {
            let ground = self
                .environment
                .ground_height(p.xy())
                .map_err(|_| Error::Validation(format!("{label} inside terrain: {p:?} is outside the grid")))?;
            if p.z < ground {
                return Err(Error::Validation(format!("{label} above terrain: z = {} is below ground {ground}", p.z)));
            }
            if !self.environment.bounds().contains(p) {
                return Err(Error::Validation(format!("{label} inside bounds: {p:?} is outside")));
            }
        }
        Ok(())
    }

    /// Resolved scenario as TOML; loading it back gives an equal scenario.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario file is always representable")
    }

    /// SHA-256 of the resolved TOML text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Same scenario under another master seed.
    pub fn with_master_seed(&self, seed: u64) -> Self {
        let mut sc = self.clone();
        sc.master_seed = seed;
        sc.pso.seed = seed;
        sc.file.run.master_seed = seed;
        sc
    }

    pub fn los_length(&self) -> f64 {
        (self.destination - self.base).norm()
    }
}

fn auto_terrain(base: &Point3<f64>, destination: &Point3<f64>) -> TerrainSpec {
    let lo_x = base.x.min(destination.x) - AUTO_MARGIN;
    let lo_y = base.y.min(destination.y) - AUTO_MARGIN;
    let hi_x = base.x.max(destination.x) + AUTO_MARGIN;
    let hi_y = base.y.max(destination.y) + AUTO_MARGIN;
    let origin = [(lo_x / AUTO_CELL).floor() * AUTO_CELL, (lo_y / AUTO_CELL).floor() * AUTO_CELL];
    let cols = ((hi_x - origin[0]) / AUTO_CELL).ceil() as usize + 1;
    let rows = ((hi_y - origin[1]) / AUTO_CELL).ceil() as usize + 1;
    TerrainSpec::Flat { origin, cell_size: AUTO_CELL, rows, cols, height: base.z.min(destination.z).min(0.0) }
}

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("paper_scale_1", include_str!("../scenarios/paper_scale_1.toml")),
    ("paper_scale_2", include_str!("../scenarios/paper_scale_2.toml")),
    ("flat_control", include_str!("../scenarios/flat_control.toml")),
];

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_toml(text, None).expect("bundled scenarios are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[run]\nbase = [0.0, 0.0, 20.0]\ndestination = [1000.0, 0.0, 20.0]\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let sc = Scenario::from_toml(MINIMAL, None).unwrap();
        assert_eq!(sc.uav.size_d, 1.0);
        assert_eq!(sc.uav.safe_margin, 10.0);
        assert_eq!(sc.uav.comm_range, 300.0);
        assert_eq!(sc.uav.sense_range, 50.0);
        assert_eq!(sc.pso.population, 100);
        assert_eq!(sc.pso.iter_max, 100);
        assert_eq!(sc.behavior, BehaviorGains::default());
        assert_eq!(sc.dt, 0.1);
        assert_eq!(sc.tick_budget, 100_000);
        assert!(sc.environment.ground_height(Point2::new(-150.0, 150.0)).is_ok());
    }

    #[test]
    fn round_trip_is_stable() {
        for text in [MINIMAL].into_iter().chain(BUNDLED.iter().map(|(_, t)| *t)) {
            let sc = Scenario::from_toml(text, None).unwrap();
            let again = Scenario::from_toml(&sc.to_toml(), None).unwrap();
            assert_eq!(sc, again);
            assert_eq!(sc.hash(), again.hash());
        }
    }

    #[test]
    fn base_below_terrain_is_rejected() {
        let text = "[environment.terrain]\nkind = \"flat\"\norigin = [-100.0, -100.0]\ncell_size = 10.0\nrows = 21\ncols = 141\nheight = 50.0\n\n[run]\nbase = [0.0, 0.0, 20.0]\ndestination = [1000.0, 0.0, 80.0]\n";
        match Scenario::from_toml(text, None) {
            Err(Error::Validation(m)) => assert!(m.contains("base above terrain"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_comm_range_is_rejected() {
        let text = format!("[uav]\ncomm_range = -300.0\n\n{MINIMAL}");
        assert!(matches!(Scenario::from_toml(&text, None), Err(Error::Validation(_))));
    }

    #[test]
    fn parse_errors_carry_a_line() {
        let text = format!("{MINIMAL}dt = \"fast\"\n");
        match Scenario::from_toml(&text, None) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "scenario line 4"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(Scenario::from_toml("[run]\nbase = [0.0, 0.0, 1.0]\n", None), Err(Error::Parse { .. })));
        assert!(matches!(Scenario::from_toml(&format!("{MINIMAL}bogus = 1\n"), None), Err(Error::Parse { .. })));
    }

    #[test]
    fn identical_endpoints_are_rejected() {
        let text = "[run]\nbase = [0.0, 0.0, 20.0]\ndestination = [0.0, 0.0, 20.0]\n";
        assert!(matches!(Scenario::from_toml(text, None), Err(Error::Validation(_))));
    }

    #[test]
    fn seed_changes_the_hash() {
        let sc = Scenario::from_toml(MINIMAL, None).unwrap();
        assert_ne!(sc.hash(), sc.with_master_seed(9).hash());
        assert_eq!(sc.with_master_seed(9).pso.seed, 9);
    }

    #[test]
    fn bundled_scenarios_load() {
        for (name, _) in BUNDLED {
            let sc = bundled(name).unwrap();
            assert!((sc.los_length() - 1000.0).abs() < 1.0, "{name}: {}", sc.los_length());
        }
        assert!(bundled("nope").is_none());
    }
}
