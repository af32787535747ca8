//! Run configuration: a TOML file, overridden key by key from the command
//! line.

use std::path::Path;

use isolevel::energy::PlannerConfig;
use isolevel::optimizer::{BoundaryCondition, PlanMode};
use isolevel::path::{PathSettings, ScheduleKind};
use isolevel::TriMesh;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub planner: PlannerConfig,
    #[serde(default = "default_mode")]
    pub mode: PlanMode,
    /// Boundary loop seeded in direction mode.
    #[serde(default)]
    pub boundary_loop: usize,
    /// `[start, len]` run of that loop; the whole loop when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_run: Option<[usize; 2]>,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    #[serde(default = "default_clearance")]
    pub clearance: f64,
    #[serde(default = "default_feed")]
    pub feed: f64,
    /// Curve pairs measured by the scallop oracle in `analyze`.
    #[serde(default = "default_oracle_pairs")]
    pub oracle_pairs: usize,
    /// STL vertex welding distance.
    #[serde(default = "default_weld")]
    pub weld_tolerance: f64,
}

fn default_mode() -> PlanMode {
    PlanMode::Direction
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::IsoScallop
}

fn default_clearance() -> f64 {
    5.0
}

fn default_feed() -> f64 {
    1000.0
}

fn default_oracle_pairs() -> usize {
    3
}

fn default_weld() -> f64 {
    1e-9
}

impl RunConfig {
    /// Parses `table` (file contents with overrides applied) and validates.
    pub fn from_table(table: toml::Table) -> CliResult<Self> {
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.planner.validate()?;
        if !(self.clearance >= 0.0 && self.clearance.is_finite()) {
            return Err(CliError::config(format!("clearance must be >= 0, got {}", self.clearance)));
        }
        if !(self.feed > 0.0 && self.feed.is_finite()) {
            return Err(CliError::config(format!("feed must be positive, got {}", self.feed)));
        }
        if !(self.weld_tolerance >= 0.0) {
            return Err(CliError::config("weld_tolerance must be >= 0"));
        }
        Ok(())
    }

    pub fn deterministic(&self) -> bool {
        self.planner.solver.deterministic_reduction
    }

    pub fn boundary_condition(&self, mesh: &TriMesh) -> CliResult<BoundaryCondition> {
        Ok(match self.mode {
            PlanMode::Contour => BoundaryCondition::contour(mesh)?,
            PlanMode::Direction => {
                BoundaryCondition::direction(mesh, self.boundary_loop, self.seed_run.map(|[s, n]| (s, n)))?
            }
        })
    }

    pub fn path_settings(&self) -> PathSettings {
        let p = &self.planner;
        PathSettings {
            clearance: self.clearance,
            feed: self.feed,
            ..PathSettings::new(p.kappa_c, p.lambda, p.h, p.chord_tol)
        }
    }

    pub fn to_table(&self) -> toml::Table {
        match toml::Value::try_from(self) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("RunConfig serializes to a table"),
        }
    }
}

pub fn read_table(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))
}

/// Command-line values, applied over the file. Only keys that were given
/// are set.
#[derive(Debug, Default)]
pub struct Overrides(Vec<(&'static str, toml::Value)>);

impl Overrides {
    pub fn float(&mut self, key: &'static str, v: Option<f64>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, toml::Value::Float(v)));
        }
        self
    }

    pub fn int(&mut self, key: &'static str, v: Option<usize>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, toml::Value::Integer(v as i64)));
        }
        self
    }

    pub fn string(&mut self, key: &'static str, v: Option<String>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, toml::Value::String(v)));
        }
        self
    }

    pub fn boolean(&mut self, key: &'static str, v: Option<bool>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, toml::Value::Boolean(v)));
        }
        self
    }

    pub fn run(&mut self, key: &'static str, v: Option<[usize; 2]>) -> &mut Self {
        if let Some([s, n]) = v {
            let arr = vec![toml::Value::Integer(s as i64), toml::Value::Integer(n as i64)];
            self.0.push((key, toml::Value::Array(arr)));
        }
        self
    }

    pub fn apply(&self, table: &mut toml::Table) {
        for (k, v) in &self.0 {
            table.insert(k.to_string(), v.clone());
        }
    }
}

/// Parses `START:LEN`.
pub fn parse_run(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once(':').ok_or("expected START:LEN")?;
    let start = a.trim().parse().map_err(|_| format!("bad start '{a}'"))?;
    let len = b.trim().parse().map_err(|_| format!("bad length '{b}'"))?;
    Ok([start, len])
}
