//! Branch Hamiltonians, their cone-constrained saddle points, and a grid
//! oracle for cross-checking.

mod objective;
pub mod oracle;
mod piecewise;
pub mod saddle;
pub mod terms;

pub use oracle::{grid_oracle_saddle, grid_points, OracleResult};
pub use saddle::{inner_min, saddle, truncated_parts, SaddleMethod, SaddleOptions, SaddleResult, Truncation};
pub use terms::{build_terms, Branch, HamiltonianTerms, Snapshot};
