//! Experiment configuration: a TOML document (see `docs/config.md`) plus
//! command-line overrides, which always win.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use prkit_core::metrics::ValueMode;
use prkit_core::phasecut::{StepRule, TorusSolverConfig};
use prkit_core::projections::HioConfig;
use prkit_core::relaxation::LossWeights;
use prkit_core::GridShape;
use serde::Deserialize;

use crate::{io_error, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Nonnegative real images.
    #[default]
    Real,
    /// Complex images with a smooth phase.
    Complex,
}

impl Mode {
    pub fn value_mode(self) -> ValueMode {
        match self {
            Mode::Real => ValueMode::Real,
            Mode::Complex => ValueMode::Complex,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    RandomNonneg,
    Beads,
    Sparse,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::RandomNonneg => "random_nonneg",
            SyntheticKind::Beads => "beads",
            SyntheticKind::Sparse => "sparse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Synthetic {
        kind: SyntheticKind,
        count: usize,
        inner_shape: [usize; 2],
    },
    /// Every PGM or CPGF file matching a glob pattern, in sorted path order.
    Files { path: String },
}

impl Default for InstanceSource {
    fn default() -> Self {
        InstanceSource::Synthetic {
            kind: SyntheticKind::RandomNonneg,
            count: 10,
            inner_shape: [16, 16],
        }
    }
}

fn beta() -> f64 {
    0.9
}
fn iterations() -> usize {
    1000
}
fn restarts() -> usize {
    10
}
fn restart_iterations() -> usize {
    50
}
fn torus_iterations() -> usize {
    5000
}
fn relaxation_iterations() -> usize {
    2000
}
fn one() -> usize {
    1
}
fn initial_step() -> f64 {
    4.0
}
fn tolerance() -> f64 {
    1e-9
}
fn weight() -> f64 {
    20.0
}

/// One solver and its parameters. Omitted fields take the defaults listed in
/// `docs/config.md`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SolverSpec {
    Er {
        #[serde(default = "iterations")]
        iterations: usize,
    },
    /// Gerchberg-Saxton with the ground-truth object modulus as the spatial constraint.
    Gs {
        #[serde(default = "iterations")]
        iterations: usize,
    },
    Hio {
        #[serde(default = "beta")]
        beta: f64,
        #[serde(default = "iterations")]
        iterations: usize,
    },
    HioRestart {
        #[serde(default = "beta")]
        beta: f64,
        #[serde(default = "iterations")]
        iterations: usize,
        #[serde(default = "restarts")]
        restarts: usize,
        #[serde(default = "restart_iterations")]
        restart_iterations: usize,
    },
    PhasecutTorus {
        #[serde(default = "torus_iterations")]
        iterations: usize,
        #[serde(default = "one")]
        starts: usize,
        #[serde(default = "initial_step")]
        initial_step: f64,
        #[serde(default = "tolerance")]
        tolerance: f64,
    },
    DeepRelaxation {
        #[serde(default = "relaxation_iterations")]
        iterations: usize,
        #[serde(default = "weight")]
        kappa: f64,
        #[serde(default = "weight")]
        rho: f64,
        #[serde(default = "initial_step")]
        initial_step: f64,
        #[serde(default = "tolerance")]
        tolerance: f64,
    },
}

pub const SOLVER_NAMES: [&str; 6] = [
    "er",
    "gs",
    "hio",
    "hio-restart",
    "phasecut-torus",
    "deep-relaxation",
];

impl SolverSpec {
    /// The spec with every field at its default.
    pub fn named(name: &str) -> Result<Self> {
        let mut table = toml::Table::new();
        table.insert("algorithm".into(), toml::Value::String(name.into()));
        table.try_into().map_err(|_| {
            Error::Config(format!(
                "unknown solver {name:?}; expected one of {}",
                SOLVER_NAMES.join(", ")
            ))
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverSpec::Er { .. } => "er",
            SolverSpec::Gs { .. } => "gs",
            SolverSpec::Hio { .. } => "hio",
            SolverSpec::HioRestart { .. } => "hio-restart",
            SolverSpec::PhasecutTorus { .. } => "phasecut-torus",
            SolverSpec::DeepRelaxation { .. } => "deep-relaxation",
        }
    }

    /// Alternating-projection settings, for the ER / GS / HIO family.
    pub fn hio_config(&self, seed: u64) -> Option<HioConfig> {
        let base = HioConfig {
            seed,
            ..HioConfig::default()
        };
        match *self {
            SolverSpec::Er { iterations } | SolverSpec::Gs { iterations } => {
                Some(HioConfig { iterations, ..base })
            }
            SolverSpec::Hio { beta, iterations } => Some(HioConfig {
                beta,
                iterations,
                ..base
            }),
            SolverSpec::HioRestart {
                beta,
                iterations,
                restarts,
                restart_iterations,
            } => Some(HioConfig {
                beta,
                iterations,
                restarts,
                restart_iterations,
                seed,
            }),
            _ => None,
        }
    }

    /// Descent settings, for the torus and relaxation solvers.
    pub fn torus_config(&self, seed: u64) -> Option<TorusSolverConfig> {
        match *self {
            SolverSpec::PhasecutTorus {
                iterations,
                initial_step,
                tolerance,
                ..
            }
            | SolverSpec::DeepRelaxation {
                iterations,
                initial_step,
                tolerance,
                ..
            } => Some(TorusSolverConfig {
                max_iterations: iterations,
                step_rule: StepRule::Backtracking {
                    shrink: 0.5,
                    initial: initial_step,
                },
                tolerance,
                seed,
            }),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(c) = self.hio_config(0) {
            c.validate()?;
        }
        if let Some(c) = self.torus_config(0) {
            c.validate()?;
        }
        match *self {
            SolverSpec::PhasecutTorus { starts: 0, .. } => {
                Err(Error::Config("phasecut-torus needs starts >= 1".into()))
            }
            SolverSpec::DeepRelaxation { kappa, rho, .. } => {
                LossWeights::new(kappa, rho).map(|_| ()).map_err(Into::into)
            }
            _ => Ok(()),
        }
    }
}

fn ratio() -> f64 {
    4.0
}

fn output_dir() -> PathBuf {
    PathBuf::from("prkit-out")
}

fn solvers() -> Vec<SolverSpec> {
    vec![SolverSpec::named("hio-restart").expect("built-in solver name")]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "ratio")]
    pub oversampling_ratio: f64,
    #[serde(default = "output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub instances: InstanceSource,
    #[serde(default = "solvers")]
    pub solvers: Vec<SolverSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Outer grid for an image of the given inner shape.
    pub fn grid_for(&self, inner: (usize, usize)) -> Result<GridShape> {
        Ok(GridShape::with_ratio(inner, self.oversampling_ratio)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.oversampling_ratio.is_finite() && self.oversampling_ratio >= 1.0) {
            return Err(Error::Config(format!(
                "oversampling_ratio {} must be >= 1",
                self.oversampling_ratio
            )));
        }
        if self.solvers.is_empty() {
            return Err(Error::Config("no solvers configured".into()));
        }
        let mut seen = HashSet::new();
        for spec in &self.solvers {
            if !seen.insert(spec.name()) {
                return Err(Error::Config(format!(
                    "solver {} listed twice",
                    spec.name()
                )));
            }
            spec.validate()?;
        }
        if let InstanceSource::Synthetic { inner_shape, .. } = self.instances {
            if inner_shape.contains(&0) {
                return Err(Error::Config(format!(
                    "inner_shape {inner_shape:?} has a zero axis"
                )));
            }
        }
        Ok(())
    }
}

/// Command-line values that replace their config counterparts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub solvers: Option<Vec<String>>,
    pub ratio: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub mode: Option<Mode>,
}

impl Overrides {
    /// A solver named on the command line keeps its configured parameters if
    /// the config lists it, and takes defaults otherwise.
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(ratio) = self.ratio {
            config.oversampling_ratio = ratio;
        }
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        if let Some(mode) = self.mode {
            config.mode = mode;
        }
        if let Some(names) = &self.solvers {
            let mut picked = Vec::with_capacity(names.len());
            for name in names {
                let name = name.trim();
                match config.solvers.iter().find(|s| s.name() == name) {
                    Some(spec) => picked.push(spec.clone()),
                    None => picked.push(SolverSpec::named(name)?),
                }
            }
            config.solvers = picked;
        }
        Ok(())
    }
}
