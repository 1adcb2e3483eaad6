//! Shape reconstruction of elastic inclusions from Neumann-to-Dirichlet data
//! with the linearized monotonicity test.
//!
//! The pipeline is: [`mesh`] and [`materials`] describe the body,
//! [`fem`] solves traction problems for the time-harmonic Navier equation,
//! [`ntd`] turns the solutions into Galerkin NtD matrices and their
//! linearizations, and [`recon`] counts negative eigenvalues per test block.

pub mod error;
pub mod fem;
pub mod materials;
pub mod mesh;
pub mod ntd;
pub mod recon;

pub use error::{Error, Result};
