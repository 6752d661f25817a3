//! Variational ground states in symmetric subspaces from isometry-bridged matrix
//! product states.
//!
//! Configurations are sampled exactly in real space from `|phi|^2`, mapped onto
//! symmetry representatives, and the energy and its gradient are measured in the
//! symmetric basis. Block isometries are taken from reduced density matrices of
//! exactly diagonalized reference systems.

pub mod analysis;
pub mod ansatz;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod model;
pub mod optimizer;
pub mod sampler;
pub mod spin;
pub mod symmetry;

pub use error::{Error, Result};
pub use spin::SpinConfig;
