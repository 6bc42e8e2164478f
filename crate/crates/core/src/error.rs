use thiserror::Error;

/// Errors raised by the numerical library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown lattice `{0}`")]
    UnknownLattice(String),
    #[error("lattice `{name}` does not support dimension {dim}")]
    UnsupportedDimension { name: String, dim: usize },
    #[error("window radius {radius} is below the minimum {min}")]
    RadiusTooSmall { radius: usize, min: usize },
    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),
    #[error("energy {energy} lies within {distance:.3e} of threshold {threshold}")]
    EnergyAtThreshold { energy: f64, threshold: f64, distance: f64 },
    #[error("energy {energy} lies outside every band")]
    EnergyOutsideBand { energy: f64 },
    #[error("spectral parameter is {distance:.3e} from the spectrum; at least {required:.3e} is needed")]
    SpectrumTooClose { distance: f64, required: f64 },
    #[error("Fermi surface meshing is unavailable in dimension {dim}")]
    MeshUnavailable { dim: usize },
    #[error("window radius {radius} is below the minimum {min}")]
    WindowTooSmall { radius: usize, min: usize },
    #[error("perturbation touches site {site} outside the admissible box |n| <= {limit}")]
    SurgeryTouchesBoundary { site: String, limit: i64 },
    #[error("invalid graph surgery: {0}")]
    NonSymmetricEdges(String),
    #[error("linear system is singular at energy {energy} (smallest singular value {sigma_min:.3e})")]
    SystemSingular { energy: f64, sigma_min: f64 },
    #[error("energy {energy} is inside the forbidden range |λ| <= {bound}")]
    EnergyInsideForbiddenRange { energy: f64, bound: f64 },
    #[error("Green table radius {available} is below the required offset {needed}")]
    GreenTableTooSmall { needed: i64, available: i64 },
    #[error("operation requires a pure potential perturbation: {0}")]
    UnsupportedPerturbation(String),
    #[error("vector is not a solution: residual {residual:.3e} exceeds {tolerance:.3e}")]
    NotASolution { residual: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
