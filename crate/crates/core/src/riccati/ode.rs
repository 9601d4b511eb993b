use crate::error::{Error, Result};
use crate::hamiltonian::{saddle, Branch, HamiltonianTerms, SaddleOptions, SaddleResult, Snapshot, Truncation};
use crate::linalg::Vector;
use crate::model::{Problem, StepCoefficients};

use super::{driver, RiccatiSolution, SolverMeta, SolverMethod};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiOptions {
    pub saddle: SaddleOptions,
    /// Start each saddle iteration from the previous evaluation's saddle.
    pub warm_start: bool,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            saddle: SaddleOptions::default(),
            warm_start: true,
        }
    }
}

struct Stepper<'a> {
    problem: &'a Problem,
    opts: &'a RiccatiOptions,
    trunc: Option<Truncation>,
    threshold: f64,
    warm: [Option<(Vector, Vector)>; 2],
    solves: usize,
}

impl Stepper<'_> {
    fn saddles(&mut self, s: &StepCoefficients, node: usize, p1: f64, p2: f64) -> Result<[SaddleResult; 2]> {
        let jumps = &self.problem.jumps;
        let snap = Snapshot::deterministic(p1, p2, jumps.n_marks());
        let terms = HamiltonianTerms::from_step(node, s, jumps, &snap).map_err(|e| e.at(format!("node {node}")))?;
        let solve = |b: Branch| -> Result<SaddleResult> {
            let warm = match (&self.warm[b.slot()], self.opts.warm_start) {
                (Some((a, c)), true) => Some((a, c)),
                _ => None,
            };
            let r = saddle(
                b,
                &terms,
                &self.problem.cone1,
                &self.problem.cone2,
                &self.opts.saddle,
                self.trunc,
                warm,
            )
            .map_err(|e| e.at(format!("node {node}, {}", b.name())))?;
            Ok(r)
        };
        let out = [solve(Branch::Positive)?, solve(Branch::Negative)?];
        for (slot, r) in out.iter().enumerate() {
            self.warm[slot] = Some((r.v1.clone(), r.v2.clone()));
        }
        self.solves += 2;
        Ok(out)
    }

    fn rhs(&mut self, s: &StepCoefficients, node: usize, p: [f64; 2]) -> Result<([f64; 2], [SaddleResult; 2])> {
        for value in p {
            if !value.is_finite() || value.abs() > self.threshold {
                return Err(Error::BlowUp {
                    node,
                    value: value.abs(),
                    threshold: self.threshold,
                });
            }
        }
        let sad = self.saddles(s, node, p[0], p[1])?;
        let f = [driver(s, p[0], 0.0, sad[0].value), driver(s, p[1], 0.0, sad[1].value)];
        Ok((f, sad))
    }
}

fn check_deterministic(problem: &Problem) -> Result<()> {
    if !problem.coeffs.is_deterministic() {
        return Err(Error::InvalidArgument(
            "the ODE solver needs deterministic coefficients; use the lattice solver for node-adapted data".into(),
        ));
    }
    Ok(())
}

fn integrate(problem: &Problem, opts: &RiccatiOptions, trunc: Option<Truncation>) -> Result<RiccatiSolution> {
    check_deterministic(problem)?;
    let report = problem.report()?;
    let g = problem.coeffs.g();
    let threshold = report.blow_up_threshold(g);
    let grid = problem.grid;
    let n = grid.n_steps();
    let h = grid.dt();
    let coeffs = &problem.coeffs;
    let mut st = Stepper {
        problem,
        opts,
        trunc,
        threshold,
        warm: [None, None],
        solves: 0,
    };

    let mut p1 = vec![0.0; n + 1];
    let mut p2 = vec![0.0; n + 1];
    let mut saddles: Vec<Option<[SaddleResult; 2]>> = vec![None; n + 1];
    p1[n] = g;
    p2[n] = g;
    let (_, terminal) = st.rhs(coeffs.at_step(n), n, [g, g])?;
    saddles[n] = Some(terminal);

    for i in (0..n).rev() {
        let s = coeffs.at_step(i);
        let p = [p1[i + 1], p2[i + 1]];
        // The cached node saddle already used these coefficients when they
        // do not change across the node.
        let k1 = if coeffs.at_step(i + 1) == s {
            let cached = saddles[i + 1].as_ref().expect("node filled");
            [driver(s, p[0], 0.0, cached[0].value), driver(s, p[1], 0.0, cached[1].value)]
        } else {
            st.rhs(s, i + 1, p)?.0
        };
        let stage = |k: [f64; 2], w: f64| [p[0] + w * h * k[0], p[1] + w * h * k[1]];
        let (k2, _) = st.rhs(s, i, stage(k1, 0.5))?;
        let (k3, _) = st.rhs(s, i, stage(k2, 0.5))?;
        let (k4, _) = st.rhs(s, i, stage(k3, 1.0))?;
        for (slot, out) in [&mut p1, &mut p2].into_iter().enumerate() {
            out[i] = p[slot] + h / 6.0 * (k1[slot] + 2.0 * k2[slot] + 2.0 * k3[slot] + k4[slot]);
        }
        for value in [p1[i], p2[i]] {
            if !value.is_finite() || value.abs() > threshold {
                return Err(Error::BlowUp {
                    node: i,
                    value: value.abs(),
                    threshold,
                });
            }
        }
        let (_, node_saddles) = st.rhs(s, i, [p1[i], p2[i]])?;
        saddles[i] = Some(node_saddles);
    }

    let n_marks = problem.jumps.n_marks();
    Ok(RiccatiSolution {
        grid,
        p1,
        p2,
        lambda1: vec![0.0; n + 1],
        lambda2: vec![0.0; n + 1],
        gamma1: vec![vec![0.0; n_marks]; n + 1],
        gamma2: vec![vec![0.0; n_marks]; n + 1],
        saddles: saddles.into_iter().map(|s| s.expect("every node solved")).collect(),
        meta: SolverMeta {
            method: if trunc.is_some() {
                SolverMethod::Truncated
            } else {
                SolverMethod::Ode
            },
            n_steps: n,
            truncation: trunc,
            saddle_solves: st.solves,
        },
    })
}

/// Integrates the coupled pair backward from `P_k(T) = G` with classic RK4,
/// solving both branch saddles at every stage.
pub fn solve_ode(problem: &Problem, opts: &RiccatiOptions) -> Result<RiccatiSolution> {
    integrate(problem, opts, None)
}

/// Same scheme with the player searches restricted to balls of radii
/// `(n, n̄)`. Needs the decoupled structure (no `F₂`, `S`, `R₁₂` and
/// orthogonal diffusion loadings).
pub fn solve_truncated(problem: &Problem, trunc: Truncation, opts: &RiccatiOptions) -> Result<RiccatiSolution> {
    let report = problem.report()?;
    if !report.structure.all() {
        return Err(Error::InvalidArgument(format!(
            "truncated solves need the decoupled structure; failed: {:?}",
            report.structure
        )));
    }
    integrate(problem, opts, Some(trunc))
}
