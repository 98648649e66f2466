//! Open-system simulation of a two-site Bose-Hubbard junction used as a
//! nonreciprocal (diode-like) element for light.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod liouville;
pub mod model;
pub mod observables;
pub mod sweep;

pub use error::{Error, Result};
pub use fock::{FockSpace, Operator, Site};
pub use liouville::{liouvillian, steady_state, DensityMatrix, Superoperator};
pub use model::{build_hamiltonian, collapse_operators, JunctionParams, PumpDirection, ScanOffset};
