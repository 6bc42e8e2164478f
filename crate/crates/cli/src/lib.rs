//! Experiment runner for `lattice-spectra`: configuration documents, the
//! task dispatcher with deterministic JSON/CSV output, and the acceptance
//! harness behind `verify`.

pub mod config;
pub mod run;
pub mod table;
pub mod verify;

pub use config::{ExperimentConfig, Task};
pub use run::{run, RunReport};

use lattice_spectra::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("{task}: {source}")]
    Numerical {
        task: String,
        #[source]
        source: Error,
    },
    #[error("{0}")]
    Assertion(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) | CliError::Io(_) => 2,
            CliError::Numerical { source, .. } if is_input_error(source) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Assertion(_) => 4,
        }
    }

    pub fn numerical(task: &str) -> impl Fn(Error) -> CliError + '_ {
        move |source| CliError::Numerical { task: task.to_string(), source }
    }
}

/// Library errors that reject the request itself rather than a computation.
fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::UnknownLattice(_)
            | Error::UnsupportedDimension { .. }
            | Error::UnknownIdentity(_)
            | Error::RadiusTooSmall { .. }
            | Error::WindowTooSmall { .. }
            | Error::SurgeryTouchesBoundary { .. }
            | Error::NonSymmetricEdges(_)
            | Error::UnsupportedPerturbation(_)
            | Error::EnergyInsideForbiddenRange { .. }
    )
}

/// ChaCha8 keystream `stream` under `seed`. Streams are independent, so each
/// consumer draws the same trial points regardless of execution order.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
