use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Truncation;
use crate::model::Problem;

use super::ode::{solve_truncated, RiccatiOptions};
use super::{RiccatiSolution, SolverMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderDirection {
    /// The player-1 radius grows; solutions should not increase.
    First,
    /// The player-2 radius grows; solutions should not decrease.
    Second,
}

/// Nodewise signed differences between two adjacent ladder levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderStep {
    pub from: Truncation,
    pub to: Truncation,
    pub direction: LadderDirection,
    pub diff1: Vec<f64>,
    pub diff2: Vec<f64>,
    /// Largest move against the expected direction (0 if none).
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub levels: Vec<Truncation>,
    pub steps: Vec<LadderStep>,
    pub tol: f64,
    pub finest: Truncation,
}

impl LadderReport {
    pub fn worst_violation(&self) -> f64 {
        self.steps.iter().map(|s| s.violation).fold(0.0, f64::max)
    }

    pub fn is_monotone(&self) -> bool {
        self.worst_violation() <= self.tol
    }
}

/// Product of the player-1 and player-2 radius lists.
pub fn ladder_levels(first: &[f64], second: &[f64]) -> Result<Vec<Truncation>> {
    let mut out = Vec::with_capacity(first.len() * second.len());
    for &n in first {
        for &nb in second {
            out.push(Truncation::new(n, nb)?);
        }
    }
    Ok(out)
}

fn make_step(
    levels: &[Truncation],
    sols: &[RiccatiSolution],
    a: usize,
    b: usize,
    direction: LadderDirection,
) -> LadderStep {
    let diff = |x: &[f64], y: &[f64]| y.iter().zip(x).map(|(p, q)| p - q).collect::<Vec<_>>();
    let diff1 = diff(&sols[a].p1, &sols[b].p1);
    let diff2 = diff(&sols[a].p2, &sols[b].p2);
    let against = |d: f64| match direction {
        LadderDirection::First => d,
        LadderDirection::Second => -d,
    };
    let violation = diff1.iter().chain(&diff2).map(|&d| against(d)).fold(0.0, f64::max);
    LadderStep {
        from: levels[a],
        to: levels[b],
        direction,
        diff1,
        diff2,
        violation,
    }
}

/// Solves the truncated system at every level and records the nodewise
/// differences between neighbouring levels (next larger `n` at fixed `n̄`,
/// next larger `n̄` at fixed `n`). Returns the solution at the largest
/// `(n, n̄)` level.
pub fn monotone_ladder(
    problem: &Problem,
    levels: &[Truncation],
    tol: f64,
    opts: &RiccatiOptions,
) -> Result<(RiccatiSolution, LadderReport)> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("the ladder needs at least one level".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("ladder tolerance must be >= 0, got {tol}")));
    }
    let mut levels = levels.to_vec();
    levels.sort_by(|x, y| x.first.total_cmp(&y.first).then(x.second.total_cmp(&y.second)));
    levels.dedup();
    let sols: Vec<RiccatiSolution> = levels
        .par_iter()
        .map(|&t| solve_truncated(problem, t, opts).map_err(|e| e.at(format!("ladder level n={}, n_bar={}", t.first, t.second))))
        .collect::<Result<_>>()?;

    let mut steps = Vec::new();
    for (a, la) in levels.iter().enumerate() {
        let next_first = (0..levels.len())
            .filter(|&b| levels[b].second == la.second && levels[b].first > la.first)
            .min_by(|&x, &y| levels[x].first.total_cmp(&levels[y].first));
        if let Some(b) = next_first {
            steps.push(make_step(&levels, &sols, a, b, LadderDirection::First));
        }
        let next_second = (0..levels.len())
            .filter(|&b| levels[b].first == la.first && levels[b].second > la.second)
            .min_by(|&x, &y| levels[x].second.total_cmp(&levels[y].second));
        if let Some(b) = next_second {
            steps.push(make_step(&levels, &sols, a, b, LadderDirection::Second));
        }
    }

    let finest_idx = levels.len() - 1;
    let finest = levels[finest_idx];
    let mut best = sols.into_iter().nth(finest_idx).expect("non-empty");
    best.meta.method = SolverMethod::Ladder;
    Ok((
        best,
        LadderReport {
            levels,
            steps,
            tol,
            finest,
        },
    ))
}
