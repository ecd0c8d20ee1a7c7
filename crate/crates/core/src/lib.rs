//! Exact eigenenergies of the constant-pairing Hamiltonian via Richardson's
//! equations, for discrete, continuum and resonant single-particle spectra.

pub mod cli;
pub mod continuation;
pub mod continuum;
mod ebv;
pub mod error;
pub mod identities;
pub mod oracle;
pub mod quadrature;
pub mod richardson;
pub mod spectrum;

pub use error::{Error, Result};
pub use richardson::{PairEnergies, PairSolution, SolveMethod, SolverSettings};
pub use spectrum::{Level, PairingProblem, Resonance};
