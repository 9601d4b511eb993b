//! Problem data: grid, jump measure, coefficients, cones, initial law, and
//! the standing-assumption checks.

pub mod assumptions;
pub mod coefficients;
pub mod cone;
pub mod config;
pub mod grid;
pub mod initial;
pub mod jumps;

pub use assumptions::{validate_coefficients, AssumptionFlags, AssumptionReport, StructureFlags};
pub use coefficients::{CoefficientSet, MarkCoefficients, NodeKey, StepCoefficients};
pub use cone::Cone;
pub use grid::TimeGrid;
pub use initial::{InitialLaw, Sampler};
pub use jumps::JumpMeasure;

use crate::error::{Error, Result};

/// A complete game instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub grid: TimeGrid,
    pub jumps: JumpMeasure,
    pub coeffs: CoefficientSet,
    pub cone1: Cone,
    pub cone2: Cone,
    pub initial: InitialLaw,
    pub delta_lower: f64,
}

impl Problem {
    pub fn new(
        grid: TimeGrid,
        jumps: JumpMeasure,
        coeffs: CoefficientSet,
        cone1: Cone,
        cone2: Cone,
        initial: InitialLaw,
    ) -> Result<Self> {
        if coeffs.n_steps() != grid.n_steps() {
            return Err(Error::InvalidArgument(format!(
                "coefficients have {} steps but the grid has {}",
                coeffs.n_steps(),
                grid.n_steps()
            )));
        }
        if coeffs.n_marks() != jumps.n_marks() {
            return Err(Error::InvalidArgument(format!(
                "coefficients have {} marks but the jump measure has {}",
                coeffs.n_marks(),
                jumps.n_marks()
            )));
        }
        if cone1.dim() != coeffs.m1() || cone2.dim() != coeffs.m2() {
            return Err(Error::InvalidArgument(format!(
                "cone dimensions ({}, {}) do not match control dimensions ({}, {})",
                cone1.dim(),
                cone2.dim(),
                coeffs.m1(),
                coeffs.m2()
            )));
        }
        initial.validate()?;
        Ok(Self {
            grid,
            jumps,
            coeffs,
            cone1,
            cone2,
            initial,
            delta_lower: assumptions::DEFAULT_DELTA_LOWER,
        })
    }

    pub fn with_delta_lower(mut self, delta_lower: f64) -> Self {
        self.delta_lower = delta_lower;
        self
    }

    pub fn with_initial(mut self, initial: InitialLaw) -> Self {
        self.initial = initial;
        self
    }

    /// Same problem on a grid with `n_steps` steps (coefficients resampled).
    pub fn refined(&self, n_steps: usize) -> Result<Self> {
        let grid = self.grid.with_steps(n_steps)?;
        let coeffs = self.coeffs.resample(n_steps)?;
        Ok(Self {
            grid,
            coeffs,
            ..self.clone()
        })
    }

    pub fn report(&self) -> Result<AssumptionReport> {
        validate_coefficients(&self.coeffs, &self.grid, &self.jumps, self.delta_lower)
    }
}
