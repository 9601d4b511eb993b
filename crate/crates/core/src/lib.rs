//! Cone-constrained zero-sum linear-quadratic stochastic differential games
//! with jumps: coupled Riccati solvers, feedback saddle points, Monte Carlo
//! simulation and verification suites.

pub mod error;
pub mod linalg;
pub mod hamiltonian;
pub mod lattice;
pub mod model;
pub mod riccati;
pub mod simulate;

pub use error::{Error, Result};
