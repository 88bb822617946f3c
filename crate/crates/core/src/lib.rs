//! Matrix-free exact diagonalization of the transverse-field Ising model on
//! triangular-lattice patches, with two-site entanglement analysis.

// `!(x > 0.0)` style guards reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli_io;
pub mod dense_oracle;
pub mod entanglement;
pub mod error;
pub mod hamiltonian;
pub mod lattice;
pub mod linalg;
pub mod rdm;
pub mod tracemin;
pub mod verify;

pub use error::{Error, Result};
