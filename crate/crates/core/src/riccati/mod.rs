//! Backward solvers for the coupled Riccati pair in the deterministic
//! regime, the truncation ladder and the explicit sub/super-solutions.

mod bounds;
mod io;
mod ladder;
mod ode;

use serde::{Deserialize, Serialize};

use crate::hamiltonian::{Branch, SaddleResult, Truncation};
use crate::model::{StepCoefficients, TimeGrid};

pub use bounds::{bounds_envelope, BoundsEnvelope};
pub use io::SolutionTable;
pub use ladder::{ladder_levels, monotone_ladder, LadderDirection, LadderReport, LadderStep};
pub use ode::{solve_ode, solve_truncated, RiccatiOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    Ode,
    Truncated,
    Ladder,
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub method: SolverMethod,
    pub n_steps: usize,
    pub truncation: Option<Truncation>,
    /// Number of saddle problems solved, counting both branches.
    pub saddle_solves: usize,
}

/// Riccati unknowns on the time grid, with the saddle found at each node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// `gamma1[i][j]`: jump component for mark `j` at node `i`.
    pub gamma1: Vec<Vec<f64>>,
    pub gamma2: Vec<Vec<f64>>,
    /// Saddle of each branch at each node, in branch order.
    pub saddles: Vec<[SaddleResult; 2]>,
    pub meta: SolverMeta,
}

impl RiccatiSolution {
    pub fn n_nodes(&self) -> usize {
        self.p1.len()
    }

    pub fn n_marks(&self) -> usize {
        self.gamma1.first().map_or(0, Vec::len)
    }

    pub fn p(&self, branch: Branch) -> &[f64] {
        match branch {
            Branch::Positive => &self.p1,
            Branch::Negative => &self.p2,
        }
    }

    pub fn saddle_at(&self, node: usize, branch: Branch) -> &SaddleResult {
        &self.saddles[node][branch.slot()]
    }

    /// Largest `|P₁ − P₂|` over the grid.
    pub fn branch_gap(&self) -> f64 {
        self.p1.iter().zip(&self.p2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Sup-norm distance to another solution on the same grid, over both
    /// branches.
    pub fn sup_distance(&self, other: &RiccatiSolution) -> f64 {
        assert_eq!(self.n_nodes(), other.n_nodes(), "solutions live on different grids");
        self.p1
            .iter()
            .zip(&other.p1)
            .chain(self.p2.iter().zip(&other.p2))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Riccati driver `(2A + C²) P_k + 2 C Λ_k + Q + H_k*`.
pub(crate) fn driver(s: &StepCoefficients, p: f64, lambda: f64, h_star: f64) -> f64 {
    (2.0 * s.a + s.c * s.c) * p + 2.0 * s.c * lambda + s.q + h_star
}
