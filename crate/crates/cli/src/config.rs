//! Experiment configuration documents.

use crate::CliError;
use lattice_spectra::embedded::{Construction, Sign};
use lattice_spectra::green::{GreenMethod, Side};
use lattice_spectra::lattice::LatticeName;
use lattice_spectra::perturbation::{PerturbationSpec, SiteRef};
use lattice_spectra::thresholds::ThresholdMode;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Seed used when a configuration does not name one.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Bands,
    Dos,
    Fermi,
    Thresholds,
    Green,
    Resolve,
    Eigs,
    Scatter,
    Verify,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Bands => "bands",
            Task::Dos => "dos",
            Task::Fermi => "fermi",
            Task::Thresholds => "thresholds",
            Task::Green => "green",
            Task::Resolve => "resolve",
            Task::Eigs => "eigs",
            Task::Scatter => "scatter",
            Task::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub name: LatticeName,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// Destination file; standard output when absent.
    pub path: Option<PathBuf>,
    pub format: Format,
    /// Record wall time per stage. Off by default so that repeated runs
    /// produce identical bytes.
    pub timings: bool,
}

/// Named groups of acceptance criteria.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    All,
    Spectrum,
    Identities,
    Resolvent,
    Scattering,
}

impl Suite {
    pub fn criteria(&self) -> Vec<usize> {
        match self {
            Suite::All => (1..=13).collect(),
            Suite::Spectrum => vec![1, 4, 5, 13],
            Suite::Identities => vec![2, 3, 4],
            Suite::Resolvent => vec![6, 7, 8, 9],
            Suite::Scattering => vec![10, 11, 12],
        }
    }
}

/// One entry of a source vector `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub band: usize,
    pub site: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Task parameters; every field is optional and falls back to the library
/// defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParams {
    /// Torus grid per axis (band scans, off-spectrum quadrature).
    pub grid: Option<usize>,
    /// Band grid per axis for Fermi-surface meshes and channels.
    pub resolution: Option<usize>,
    pub energies: Vec<f64>,
    pub energy: Option<f64>,
    /// Complex spectral parameter `[re, im]` for off-spectrum resolvents.
    pub z: Option<[f64; 2]>,
    pub side: Option<Side>,
    pub method: Option<GreenMethod>,
    /// Largest `|n|_∞` of the emitted Green table.
    pub radius: Option<i64>,
    pub mode: Option<ThresholdMode>,
    pub source: Vec<SourceEntry>,
    pub eval: Vec<SiteRef>,
    /// Energy interval scanned for eigenvalues.
    pub interval: Option<[f64; 2]>,
    pub samples: Option<usize>,
    pub construction: Option<Construction>,
    pub sign: Option<Sign>,
    pub window: Option<usize>,
    /// Potential strength on the support of a compact construction.
    pub value: Option<f64>,
    pub suite: Option<Suite>,
    pub criteria: Vec<usize>,
    /// Multiplier of the surface term in the principal-value Green
    /// function; anything but 1 is a deliberate fault.
    pub surface_sign: Option<f64>,
    /// Factor applied to every channel-mesh resolution in `verify`.
    pub resolution_scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required by every task except `verify`.
    #[serde(default)]
    pub lattice: Option<LatticeBlock>,
    pub task: Task,
    #[serde(default)]
    pub params: TaskParams,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl ExperimentConfig {
    pub fn new(task: Task, lattice: Option<LatticeBlock>) -> Self {
        Self {
            lattice,
            task,
            params: TaskParams::default(),
            perturbation: None,
            output: OutputBlock::default(),
            seed: DEFAULT_SEED,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |m: String| Err(CliError::ConfigInvalid(m));
        match (&self.lattice, self.task) {
            (None, Task::Verify) => {}
            (None, t) => return invalid(format!("task `{}` needs a lattice block", t.as_str())),
            (Some(l), _) if !l.name.supports_dim(l.dim) => {
                return invalid(format!("lattice `{}` does not support dimension {}", l.name, l.dim))
            }
            _ => {}
        }
        if let Some(id) = self.params.criteria.iter().find(|&&c| !(1..=13).contains(&c)) {
            return invalid(format!("criterion {id} does not exist"));
        }
        for (name, v) in [("grid", self.params.grid), ("resolution", self.params.resolution)] {
            if v == Some(0) {
                return invalid(format!("`{name}` must be positive"));
            }
        }
        if let Some(s) = self.params.resolution_scale {
            if !(s > 0.0 && s.is_finite()) {
                return invalid("`resolution_scale` must be positive".into());
            }
        }
        Ok(())
    }
}
