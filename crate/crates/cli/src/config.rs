//! Run configuration: a TOML file with dotted sections, overridden by
//! `key.path=value` flags.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Schema(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("contradictory settings: {0}")]
    Contradictory(String),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Eigen,
    Dynamics,
    RegionMap,
    DeltaSweep,
    FarField,
    MiddleVsCopy,
    BestO3,
    Analytics,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::Dynamics => "dynamics",
            Command::RegionMap => "region-map",
            Command::DeltaSweep => "delta-sweep",
            Command::FarField => "far-field",
            Command::MiddleVsCopy => "middle-vs-copy",
            Command::BestO3 => "best-o3",
            Command::Analytics => "analytics",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingName {
    Standard,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    GaussianAtOptima,
    GaussianAt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub alpha: f64,
    pub mu: f64,
    pub delta: f64,
    pub r_max: f64,
    /// One optimum per host; all of the same dimension.
    pub optima: Vec<Vec<f64>>,
    pub coupling: CouplingName,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            mu: 1.0,
            delta: 0.0,
            r_max: 0.0,
            optima: vec![vec![0.0]],
            coupling: CouplingName::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    /// Stopping threshold of the refinement ladder.
    pub accuracy: f64,
    /// Fixed cube `[-radius, radius]^n`; needs `points`. Without both the
    /// ladder derives the box.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Grid spacing for sweeps and simulations.
    pub spacing: f64,
    pub margin_widths: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 300,
            accuracy: 1e-3,
            radius: None,
            points: None,
            spacing: 0.25,
            margin_widths: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub initial: InitialKind,
    pub width: f64,
    pub mass: f64,
    /// Bump centre for `gaussian-at`; defaults to the centroid of the optima.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_end: 50.0,
            sample_every: 10,
            initial: InitialKind::GaussianAtOptima,
            width: 0.7,
            mass: 0.3,
            center: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub beta: f64,
    pub a1_range: [f64; 2],
    pub a2_range: [f64; 2],
    pub resolution: [usize; 2],
    pub deltas: Vec<f64>,
    pub distances: Vec<f64>,
    pub betas: Vec<f64>,
    pub search_accuracy: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            beta: 1.0,
            a1_range: [-3.5, 3.5],
            a2_range: [-3.5, 3.5],
            resolution: [41, 41],
            deltas: vec![0.0, 0.5, 1.0, 2.0, 5.0],
            distances: vec![5.0, 10.0, 20.0],
            betas: vec![1.0, 2.0, 4.0, 6.0],
            search_accuracy: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Worker threads for sweeps; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_output_dir() -> String {
    "runs".to_string()
}

/// Key reference shown by `--help`.
pub const KEY_REFERENCE: &str = "\
Configuration keys (TOML; override any with --set key=value):
  command                 eigen | dynamics | region-map | delta-sweep | far-field |
                          middle-vs-copy | best-o3 | analytics
  output_dir              parent of the per-run directories (default \"runs\")
  workers                 sweep threads, 0 = all cores
  model.alpha             selection strength (> 0, default 1)
  model.mu                mutation scale (> 0, default 1)
  model.delta             migration rate (>= 0, default 0)
  model.r_max             peak growth rate (default 0)
  model.optima            list of optima, one per host (default [[0.0]])
  model.coupling          standard | loss (loss needs two hosts and delta > 0)
  solver.tol              eigensolver residual tolerance (default 1e-8)
  solver.max_iter         eigensolver outer iterations (default 300)
  solver.accuracy         refinement ladder stopping threshold (default 1e-3)
  solver.radius           fixed box half-width; requires solver.points
  solver.points           interior points per axis of the fixed box (>= 3)
  solver.spacing          grid spacing for sweeps and dynamics (default 0.25)
  solver.margin_widths    sweep/dynamics box margin in mode widths (default 6)
  dynamics.dt             time step (default 0.05)
  dynamics.t_end          horizon (default 50)
  dynamics.sample_every   steps between samples (default 10)
  dynamics.initial        gaussian-at-optima | gaussian-at
  dynamics.width          initial bump width (default 0.7)
  dynamics.mass           initial mass per host (default 0.3)
  dynamics.center         bump centre for gaussian-at (default centroid)
  sweep.beta              half distance between the first two optima (default 1)
  sweep.a1_range          third-optimum range along the host axis (default [-3.5, 3.5])
  sweep.a2_range          third-optimum range across it (default [-3.5, 3.5])
  sweep.resolution        grid points per axis (default [41, 41])
  sweep.deltas            migration rates for delta-sweep, ascending
  sweep.distances         third-optimum distances for far-field, each > 2 beta
  sweep.betas             spacings for middle-vs-copy, increasing
  sweep.search_accuracy   position tolerance for best-o3 (default 1e-3)";

impl RunConfig {
    pub fn host_count(&self) -> usize {
        self.model.optima.len()
    }

    pub fn dim(&self) -> usize {
        self.model.optima.first().map(Vec::len).unwrap_or(0)
    }

    /// Checks every numeric setting, whichever command will use it.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(key, format!("must be positive, got {v}")))
            }
        };
        let nonnegative = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(key, format!("must be nonnegative, got {v}")))
            }
        };
        let m = &self.model;
        positive("model.alpha", m.alpha)?;
        positive("model.mu", m.mu)?;
        nonnegative("model.delta", m.delta)?;
        if !m.r_max.is_finite() {
            return Err(invalid("model.r_max", "must be finite"));
        }
        let n = self.dim();
        if m.optima.is_empty() {
            return Err(invalid("model.optima", "need at least one host"));
        }
        if !(1..=3).contains(&n) {
            return Err(invalid("model.optima", format!("dimension must be 1, 2 or 3, got {n}")));
        }
        if m.optima.iter().any(|o| o.len() != n || o.iter().any(|v| !v.is_finite())) {
            return Err(invalid("model.optima", "all optima need the same dimension and finite coordinates"));
        }
        if m.coupling == CouplingName::Loss {
            if self.host_count() != 2 {
                return Err(invalid("model.coupling", "loss coupling needs exactly two optima"));
            }
            if m.delta <= 0.0 {
                return Err(invalid("model.coupling", "loss coupling needs model.delta > 0"));
            }
        }

        let s = &self.solver;
        positive("solver.tol", s.tol)?;
        if s.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be at least 1"));
        }
        positive("solver.accuracy", s.accuracy)?;
        positive("solver.spacing", s.spacing)?;
        positive("solver.margin_widths", s.margin_widths)?;
        match (s.radius, s.points) {
            (Some(r), Some(p)) => {
                positive("solver.radius", r)?;
                if p < 3 {
                    return Err(invalid("solver.points", "need at least 3 interior points"));
                }
            }
            (None, None) => {}
            _ => {
                return Err(ConfigError::Contradictory(
                    "solver.radius and solver.points must be given together".into(),
                ))
            }
        }

        let d = &self.dynamics;
        positive("dynamics.dt", d.dt)?;
        positive("dynamics.t_end", d.t_end)?;
        if d.sample_every == 0 {
            return Err(invalid("dynamics.sample_every", "must be at least 1"));
        }
        positive("dynamics.width", d.width)?;
        nonnegative("dynamics.mass", d.mass)?;
        if let Some(c) = &d.center {
            if c.len() != n {
                return Err(invalid("dynamics.center", format!("expected {n} coordinates, got {}", c.len())));
            }
            if d.initial != InitialKind::GaussianAt {
                return Err(ConfigError::Contradictory(
                    "dynamics.center is only used with dynamics.initial = \"gaussian-at\"".into(),
                ));
            }
        }

        let w = &self.sweep;
        positive("sweep.beta", w.beta)?;
        for (key, r) in [("sweep.a1_range", w.a1_range), ("sweep.a2_range", w.a2_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(invalid(key, format!("need lo < hi, got {r:?}")));
            }
        }
        if w.resolution.iter().any(|&r| r < 2) {
            return Err(invalid("sweep.resolution", "need at least 2 points per axis"));
        }
        if w.deltas.is_empty() {
            return Err(invalid("sweep.deltas", "need at least one value"));
        }
        for v in &w.deltas {
            nonnegative("sweep.deltas", *v)?;
        }
        if w.deltas.windows(2).any(|p| p[1] < p[0]) {
            return Err(invalid("sweep.deltas", "must be ascending"));
        }
        if w.distances.is_empty() || w.distances.windows(2).any(|p| p[1] <= p[0]) {
            return Err(invalid("sweep.distances", "need strictly increasing values"));
        }
        if w.distances[0] <= 2.0 * w.beta {
            return Err(invalid("sweep.distances", "every distance must exceed 2 * sweep.beta"));
        }
        if w.betas.is_empty() || w.betas.windows(2).any(|p| p[1] <= p[0]) {
            return Err(invalid("sweep.betas", "need strictly increasing values"));
        }
        for v in &w.betas {
            nonnegative("sweep.betas", *v)?;
        }
        positive("sweep.search_accuracy", w.search_accuracy)?;
        Ok(())
    }

    /// The config as TOML; parsing it back gives an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }
}

/// Splits `key.path=value` and parses the value as a TOML value, falling
/// back to a bare string.
fn parse_override(text: &str) -> Result<(Vec<String>, toml::Value), ConfigError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| ConfigError::Schema(format!("override `{text}` is not of the form key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(ConfigError::Schema(format!("override `{text}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((path, value))
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut cur = table;
    for (k, seg) in parents.iter().enumerate() {
        let entry = cur
            .entry(seg.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            ConfigError::Schema(format!("`{}` is not a section", path[..=k].join(".")))
        })?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Builds and validates a config from TOML text, `--set` overrides and an
/// optional command given on the command line.
pub fn parse_config_str(
    text: &str,
    overrides: &[String],
    command: Option<Command>,
) -> Result<RunConfig, ConfigError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
    for o in overrides {
        let (path, value) = parse_override(o)?;
        set_path(&mut table, &path, value)?;
    }
    if let Some(cmd) = command {
        match table.get("command").and_then(toml::Value::as_str) {
            Some(existing) if existing != cmd.name() => {
                return Err(ConfigError::Contradictory(format!(
                    "command `{cmd}` on the command line but `{existing}` in the configuration"
                )))
            }
            _ => {
                table.insert("command".into(), toml::Value::String(cmd.name().into()));
            }
        }
    }
    if !table.contains_key("command") {
        return Err(ConfigError::Schema("missing key `command`".into()));
    }
    let normalised = toml::to_string(&table).map_err(|e| ConfigError::Schema(e.to_string()))?;
    let config: RunConfig = toml::from_str(&normalised).map_err(|e| ConfigError::Schema(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config_file(
    path: &Path,
    overrides: &[String],
    command: Option<Command>,
) -> Result<(RunConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let config = parse_config_str(&text, overrides, command)?;
    Ok((config, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_eigen_config() {
        let c = parse_config_str("command = \"eigen\"", &[], None).unwrap();
        assert_eq!(c.command, Command::Eigen);
        assert_eq!(c.host_count(), 1);
        assert_eq!(c.solver.radius, None);
        assert_eq!(c.model, ModelSection::default());
    }

    #[test]
    fn command_from_flag() {
        let c = parse_config_str("", &[], Some(Command::Analytics)).unwrap();
        assert_eq!(c.command, Command::Analytics);
        assert!(matches!(parse_config_str("", &[], None), Err(ConfigError::Schema(_))));
    }

    #[test]
    fn negative_alpha_names_key() {
        let err = parse_config_str("command = \"eigen\"\n[model]\nalpha = -1.0\n", &[], None).unwrap_err();
        assert!(err.to_string().contains("model.alpha"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config_str("command = \"eigen\"\n[model]\nalpah = 1.0\n", &[], None).unwrap_err();
        assert!(err.to_string().contains("alpah"), "{err}");
        let err = parse_config_str("command = \"eigen\"\nworkerz = 2\n", &[], None).unwrap_err();
        assert!(err.to_string().contains("workerz"), "{err}");
    }

    #[test]
    fn overrides_win() {
        let c = parse_config_str(
            "command = \"eigen\"\n[model]\ndelta = 1.0\n",
            &["model.delta=2.5".into(), "model.optima=[[-1.0], [1.0]]".into(), "output_dir=out".into()],
            None,
        )
        .unwrap();
        assert_eq!(c.model.delta, 2.5);
        assert_eq!(c.host_count(), 2);
        assert_eq!(c.output_dir, "out");
        assert!(parse_config_str("command = \"eigen\"", &["model.delta".into()], None).is_err());
        assert!(parse_config_str("command = \"eigen\"", &["model.delta.x=1".into()], None).is_err());
    }

    #[test]
    fn contradictions() {
        let err = parse_config_str("command = \"eigen\"", &[], Some(Command::Dynamics)).unwrap_err();
        assert!(matches!(err, ConfigError::Contradictory(_)));
        let err = parse_config_str("command = \"eigen\"\n[solver]\nradius = 5.0\n", &[], None).unwrap_err();
        assert!(matches!(err, ConfigError::Contradictory(_)));
        let err = parse_config_str(
            "command = \"eigen\"\n[model]\ncoupling = \"loss\"\ndelta = 1.0\n",
            &[],
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("model.coupling"));
    }

    #[test]
    fn round_trip_through_toml() {
        let c = parse_config_str(
            "command = \"region-map\"\nworkers = 3\n[model]\nalpha = 1.0\nmu = 1.4142135623730951\ndelta = 1.0\nr_max = 1.0\n[sweep]\nbeta = 1.0\nresolution = [41, 41]\n[solver]\nradius = 4.0\npoints = 31\n",
            &[],
            None,
        )
        .unwrap();
        let back = parse_config_str(&c.to_toml(), &[], None).unwrap();
        assert_eq!(back, c);
    }
}
