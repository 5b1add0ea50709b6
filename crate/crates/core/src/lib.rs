//! Numerical laboratory for Weyl asymptotics of Dirichlet realisations of
//! symmetric fractional-order operators.
//!
//! The pipeline is: a [`symbols::PrincipalSymbol`] and a
//! [`domains::Domain`] give the reference constant `C(P, Omega)`;
//! [`discretize`] builds the Dirichlet matrix on a lattice grid;
//! [`eigensolve`] computes its spectrum; [`weylfit`] extracts fitted
//! constants and runs the comparison studies; [`snumbers`] covers the
//! singular-value calculus behind the perturbation arguments.

pub mod cli;
pub mod config;
pub mod discretize;
pub mod domains;
pub mod eigensolve;
pub mod error;
pub mod exec;
pub mod field;
mod quadrature;
pub mod snumbers;
pub mod symbols;
pub mod weylfit;

pub use error::{Error, Result};
pub use exec::Execution;
