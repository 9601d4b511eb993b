use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{neg, pos, Vector};
use crate::model::Problem;
use crate::riccati::RiccatiSolution;

/// Completion-of-squares residual at node `step` for state `x` and controls
/// `(u1, u2)`, term by term: quadratic blocks weighted by `P₁` or `P₂`
/// according to the sign of `x`, linear terms against `x⁺` or `x⁻`, the
/// compensator, the jump positive/negative-part terms, minus
/// `H₁*(x⁺)² + H₂*(x⁻)²`.
pub fn psi_eval(step: usize, x: f64, u1: &Vector, u2: &Vector, sol: &RiccatiSolution, problem: &Problem) -> Result<f64> {
    if step >= sol.n_nodes() {
        return Err(Error::InvalidArgument(format!("node {step} is outside the solution grid")));
    }
    let s = problem.coeffs.at_step(step);
    if u1.len() != s.m1() || u2.len() != s.m2() {
        return Err(Error::InvalidArgument(format!(
            "controls have dimensions ({}, {}) but the problem has ({}, {})",
            u1.len(),
            u2.len(),
            s.m1(),
            s.m2()
        )));
    }
    let (p1, p2) = (sol.p1[step], sol.p2[step]);
    let (l1, l2) = (sol.lambda1[step], sol.lambda2[step]);
    let h1 = sol.saddles[step][0].value;
    let h2 = sol.saddles[step][1].value;
    let positive = x > 0.0;
    let (xp, xm) = (pos(x), neg(x));
    let w = if positive { p1 } else { p2 };
    let (d1u, d2u) = (s.d1.dot(u1), s.d2.dot(u2));

    let mut psi = u1.dot(&(&s.r11 * u1)) + w * d1u * d1u;
    psi += u2.dot(&(&s.r22 * u2)) + w * d2u * d2u;
    psi += 2.0 * (u1.dot(&(&s.r12 * u2)) + w * d1u * d2u);
    if positive {
        let lin1 = &s.s1 + &s.b1 * p1 + &s.d1 * (p1 * s.c) + &s.d1 * l1;
        let lin2 = &s.s2 + &s.b2 * p1 + &s.d2 * (p1 * s.c) + &s.d2 * l1;
        psi += 2.0 * u1.dot(&lin1) * xp + 2.0 * u2.dot(&lin2) * xp;
    } else {
        let lin1 = &s.s1 + &s.b1 * p2 + &s.d1 * (p2 * s.c) + &s.d1 * l2;
        let lin2 = &s.s2 + &s.b2 * p2 + &s.d2 * (p2 * s.c) + &s.d2 * l2;
        psi -= 2.0 * u1.dot(&lin1) * xm + 2.0 * u2.dot(&lin2) * xm;
    }
    let weight = if positive { -2.0 * p1 * xp } else { 2.0 * p2 * xm };
    for (j, (m, &nu)) in s.marks.iter().zip(problem.jumps.intensities()).enumerate() {
        let size = m.e * x + m.f1.dot(u1) + m.f2.dot(u2);
        let after = x + size;
        psi += weight * nu * size;
        psi += nu * (p1 + sol.gamma1[step][j]) * (pos(after).powi(2) - xp * xp);
        psi += nu * (p2 + sol.gamma2[step][j]) * (neg(after).powi(2) - xm * xm);
    }
    Ok(psi - h1 * xp * xp - h2 * xm * xm)
}

/// Saddle controls `Θ⁺x⁺ + Θ⁻x⁻` at node `step`.
pub fn saddle_controls(sol: &RiccatiSolution, step: usize, x: f64) -> (Vector, Vector) {
    let [plus, minus] = &sol.saddles[step];
    (
        &plus.v1 * pos(x) + &minus.v1 * neg(x),
        &plus.v2 * pos(x) + &minus.v2 * neg(x),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiReport {
    pub points: usize,
    pub perturbations: usize,
    /// Largest `|ψ|` at the saddle controls.
    pub max_abs_at_saddle: f64,
    /// Largest `−ψ` under player-1 deviations (should be ≤ tol).
    pub worst_first: f64,
    /// Largest `ψ` under player-2 deviations (should be ≤ tol).
    pub worst_second: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Default state mesh for the identity check.
pub const PSI_MESH: [f64; 7] = [-2.0, -1.0, -0.1, 0.0, 0.1, 1.0, 2.0];

/// Evaluates `ψ` on every grid node × `mesh` point at the saddle, and
/// under `n_perturb` random cone-valued single-player deviations per point.
pub fn verify_psi_identity(
    sol: &RiccatiSolution,
    problem: &Problem,
    mesh: &[f64],
    n_perturb: usize,
    seed: u64,
    tol: f64,
) -> Result<PsiReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PsiReport {
        points: 0,
        perturbations: 0,
        max_abs_at_saddle: 0.0,
        worst_first: f64::NEG_INFINITY,
        worst_second: f64::NEG_INFINITY,
        tol,
        pass: false,
    };
    for step in 0..sol.n_nodes() {
        for &x in mesh {
            let (u1, u2) = saddle_controls(sol, step, x);
            let at = psi_eval(step, x, &u1, &u2, sol, problem).map_err(|e| e.at(format!("node {step}, x = {x}")))?;
            report.max_abs_at_saddle = report.max_abs_at_saddle.max(at.abs());
            report.points += 1;
            let scale = 1.0 + x.abs();
            for _ in 0..n_perturb {
                let d1 = problem.cone1.sample(&mut rng, scale);
                let d2 = problem.cone2.sample(&mut rng, scale);
                report.worst_first = report.worst_first.max(-psi_eval(step, x, &d1, &u2, sol, problem)?);
                report.worst_second = report.worst_second.max(psi_eval(step, x, &u1, &d2, sol, problem)?);
                report.perturbations += 2;
            }
        }
    }
    report.pass = report.max_abs_at_saddle <= tol && report.worst_first <= tol && report.worst_second <= tol;
    Ok(report)
}
