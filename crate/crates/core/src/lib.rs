//! Spectral and scattering computations for discrete Schrödinger operators
//! on perturbed periodic lattices.

pub mod bands;
pub mod besov;
pub mod charpoly;
pub mod embedded;
pub mod error;
pub mod fermi;
pub mod green;
pub mod lattice;
pub mod linalg;
pub mod perturbation;
pub mod quadrature;
pub mod scattering;
pub mod spectral;
pub mod thresholds;

pub use error::{Error, Result};
