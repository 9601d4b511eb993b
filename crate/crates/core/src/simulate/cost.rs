use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Problem;
use crate::simulate::engine::{PathRecord, SimulationResult};

/// Sample mean with its standard error. A single sample has infinite
/// standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl CostEstimate {
    /// Two-pass mean and variance in sample order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::INFINITY,
                n,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            f64::INFINITY
        } else {
            let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        };
        Self { mean, stderr, n }
    }

    /// Estimate of `E[a − b]` from paired samples.
    pub fn paired(a: &[f64], b: &[f64]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Self::from_samples(&d)
    }

    /// `mean / stderr`, with `0/0 = 0`.
    pub fn z(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.mean / self.stderr
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// Integrand at the left end of each step.
    #[default]
    Left,
    /// Average of the integrand at both ends of each step, controls held.
    Trapezoid,
}

/// Payoff of one recorded path.
pub fn path_cost(problem: &Problem, path: &PathRecord, rule: Quadrature) -> Result<f64> {
    let n = problem.grid.n_steps();
    if path.x.len() != n + 1 || path.u1.len() != n || path.u2.len() != n {
        return Err(Error::InvalidArgument(format!(
            "path has {} states and {} controls for a grid of {n} steps",
            path.x.len(),
            path.u1.len()
        )));
    }
    let dt = problem.grid.dt();
    let mut total = 0.0;
    for i in 0..n {
        let s = problem.coeffs.at_step(i);
        let u1 = crate::linalg::Vector::from_column_slice(&path.u1[i]);
        let u2 = crate::linalg::Vector::from_column_slice(&path.u2[i]);
        let f = |x: f64| {
            s.q * x * x
                + 2.0 * x * (s.s1.dot(&u1) + s.s2.dot(&u2))
                + u1.dot(&(&s.r11 * &u1))
                + 2.0 * u1.dot(&(&s.r12 * &u2))
                + u2.dot(&(&s.r22 * &u2))
        };
        total += match rule {
            Quadrature::Left => f(path.x[i]),
            Quadrature::Trapezoid => 0.5 * (f(path.x[i]) + f(path.x[i + 1])),
        } * dt;
    }
    let xt = path.x[n];
    Ok(total + problem.coeffs.g() * xt * xt)
}

/// Payoff estimate recomputed from the recorded trajectories.
pub fn evaluate_cost(result: &SimulationResult, problem: &Problem, rule: Quadrature) -> Result<CostEstimate> {
    if result.paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "simulation '{}' kept no trajectories; rerun with recording enabled",
            result.name
        )));
    }
    let costs = result
        .paths
        .iter()
        .map(|p| path_cost(problem, p, rule))
        .collect::<Result<Vec<_>>>()?;
    Ok(CostEstimate::from_samples(&costs))
}
