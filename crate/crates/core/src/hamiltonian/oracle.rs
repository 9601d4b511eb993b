//! Exhaustive grid evaluation of max-min and min-max, used as an
//! independent check on the saddle solvers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::Cone;

use super::objective::BranchObjective;
use super::saddle::{SaddleMethod, SaddleResult};
use super::terms::{Branch, HamiltonianTerms};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Max over the `v2` grid of the min over the `v1` grid.
    pub max_min: SaddleResult,
    /// Min over the `v1` grid of the max over the `v2` grid.
    pub min_max: f64,
    /// Largest gradient norm of the Hamiltonian seen on a coarse sub-grid
    /// of the search ball.
    pub lipschitz: f64,
    pub radius: f64,
    pub step: f64,
}

impl OracleResult {
    /// Resolution bound `2 · L · step` for value comparisons.
    pub fn resolution(&self) -> f64 {
        2.0 * self.lipschitz * self.step
    }
}

/// Grid points of `cone ∩ ball(radius)` on the lattice `step · ℤ^d`.
pub fn grid_points(cone: &Cone, radius: f64, step: f64) -> Vec<Vector> {
    let d = cone.dim();
    let k = (radius / step).floor() as i64;
    if cone.is_trivial() || d == 0 {
        return vec![Vector::zeros(d)];
    }
    if d == 1 {
        let (lo, hi) = cone.interval_1d().expect("1-d cone");
        return (-k..=k)
            .map(|i| i as f64 * step)
            .filter(|&x| x >= lo && x <= hi)
            .map(|x| Vector::from_element(1, x))
            .collect();
    }
    let side = (2 * k + 1) as usize;
    let total = side.pow(d as u32);
    let mut out = Vec::new();
    for flat in 0..total {
        let mut rem = flat;
        let v = Vector::from_fn(d, |_, _| {
            let idx = (rem % side) as i64 - k;
            rem /= side;
            idx as f64 * step
        });
        if v.norm() <= radius * (1.0 + 1e-12) && cone.contains(&v, 1e-12).unwrap_or(false) {
            out.push(v);
        }
    }
    out
}

fn eval(obj: &BranchObjective, scalar: bool, a: &Vector, b: &Vector) -> f64 {
    if scalar {
        obj.value_scalar(a[0], b[0])
    } else {
        obj.value(a, b)
    }
}

/// Max-min and min-max of `H_k` over the grid points of the two cones
/// inside the ball of the given radius.
pub fn grid_oracle_saddle(
    branch: Branch,
    terms: &HamiltonianTerms,
    cone1: &Cone,
    cone2: &Cone,
    radius: f64,
    step: f64,
) -> Result<OracleResult> {
    if terms.m1() + terms.m2() > 4 {
        return Err(Error::InvalidArgument(format!(
            "grid oracle is limited to m1 + m2 <= 4, got {}",
            terms.m1() + terms.m2()
        )));
    }
    if !(step > 0.0 && radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument("oracle radius and step must be positive".into()));
    }
    let obj = terms.objective(branch);
    let g1 = grid_points(cone1, radius, step);
    let g2 = grid_points(cone2, radius, step);
    let scalar = terms.m1() == 1 && terms.m2() == 1;

    // One pass over the product grid gives, for each v2, the min over v1
    // and, for each v1, the max over v2.
    let (row_min, col_max) = g2
        .par_iter()
        .enumerate()
        .fold(
            || (Vec::new(), vec![f64::NEG_INFINITY; g1.len()]),
            |(mut rows, mut cols), (j, b)| {
                let mut best = (f64::INFINITY, 0usize);
                for (i, a) in g1.iter().enumerate() {
                    let h = eval(obj, scalar, a, b);
                    if h < best.0 {
                        best = (h, i);
                    }
                    if h > cols[i] {
                        cols[i] = h;
                    }
                }
                rows.push((j, best.0, best.1));
                (rows, cols)
            },
        )
        .reduce(
            || (Vec::new(), vec![f64::NEG_INFINITY; g1.len()]),
            |(mut ra, ca), (rb, cb)| {
                ra.extend(rb);
                let cols = ca.into_iter().zip(cb).map(|(x, y)| x.max(y)).collect();
                (ra, cols)
            },
        );
    let mut row_min = row_min;
    row_min.sort_by_key(|r| r.0);
    let &(j_star, max_min, i_star) = row_min
        .iter()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty grid");
    let min_max = col_max.iter().copied().fold(f64::INFINITY, f64::min);

    let stride1 = (g1.len() / 60).max(1);
    let stride2 = (g2.len() / 60).max(1);
    let mut lipschitz = 0.0f64;
    for a in g1.iter().step_by(stride1) {
        for b in g2.iter().step_by(stride2) {
            let n = (obj.grad1(a, b).norm_squared() + obj.grad2(a, b).norm_squared()).sqrt();
            lipschitz = lipschitz.max(n);
        }
    }

    Ok(OracleResult {
        max_min: SaddleResult {
            v1: g1[i_star].clone(),
            v2: g2[j_star].clone(),
            value: max_min,
            iterations: g1.len() * g2.len(),
            residual: 0.0,
            method: SaddleMethod::GridOracle,
        },
        min_max,
        lipschitz,
        radius,
        step,
    })
}
