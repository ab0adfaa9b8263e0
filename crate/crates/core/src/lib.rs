//! Robust topology optimisation of pin-jointed lattices whose member Young's
//! moduli form a Gaussian random field defined by an SPDE on the adjoint
//! lattice.

pub mod config;
pub mod error;
pub mod fem;
pub mod io;
pub mod field;
pub mod lattice;
pub mod optim;
pub mod regularization;
pub mod robust;
pub mod sparse;

pub use error::{Error, Result};
