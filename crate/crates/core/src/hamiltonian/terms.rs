use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

use super::objective::{BranchObjective, JumpPiece};
use crate::model::{CoefficientSet, JumpMeasure, StepCoefficients};

/// Sign branch of the state: `Positive` drives the `X > 0` Hamiltonian
/// (index 1), `Negative` the `X <= 0` one (index 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Positive,
    Negative,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Positive, Branch::Negative];

    pub fn from_index(k: usize) -> Result<Self> {
        match k {
            1 => Ok(Branch::Positive),
            2 => Ok(Branch::Negative),
            _ => Err(Error::InvalidArgument(format!("branch index must be 1 or 2, got {k}"))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Branch::Positive => 1,
            Branch::Negative => 2,
        }
    }

    /// Zero-based position, for indexing per-branch arrays.
    pub fn slot(self) -> usize {
        self.index() - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Positive => "positive-branch",
            Branch::Negative => "negative-branch",
        }
    }
}

/// Values of the Riccati unknowns at which the Hamiltonians are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub p1: f64,
    pub p2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Jump components of the first unknown, one per mark.
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
}

impl Snapshot {
    /// Deterministic snapshot with no martingale components.
    pub fn deterministic(p1: f64, p2: f64, n_marks: usize) -> Self {
        Self {
            p1,
            p2,
            lambda1: 0.0,
            lambda2: 0.0,
            gamma1: vec![0.0; n_marks],
            gamma2: vec![0.0; n_marks],
        }
    }

    pub fn validate(&self, n_marks: usize) -> Result<()> {
        if self.gamma1.len() != n_marks || self.gamma2.len() != n_marks {
            return Err(Error::InvalidArgument(format!(
                "snapshot carries {}/{} jump components for {n_marks} marks",
                self.gamma1.len(),
                self.gamma2.len()
            )));
        }
        let all = [self.p1, self.p2, self.lambda1, self.lambda2]
            .into_iter()
            .chain(self.gamma1.iter().copied())
            .chain(self.gamma2.iter().copied());
        for x in all {
            if !x.is_finite() {
                return Err(Error::Numeric("snapshot contains a non-finite value".into()));
            }
        }
        Ok(())
    }

    pub fn lambda(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Positive => self.lambda1,
            Branch::Negative => self.lambda2,
        }
    }
}

/// The eight curvature/linear terms of the Hamiltonians at one time index,
/// together with the snapshot and the step coefficients they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerms {
    pub t_idx: usize,
    pub m11: Matrix,
    pub m12: Matrix,
    pub m21: Matrix,
    pub m22: Matrix,
    pub n11: Vector,
    pub n12: Vector,
    pub n21: Vector,
    pub n22: Vector,
    pub snapshot: Snapshot,
    coeffs: StepCoefficients,
    nus: Vec<f64>,
    objectives: [BranchObjective; 2],
}

/// Builds the terms from the coefficients in force at grid index `t_idx`.
pub fn build_terms(
    t_idx: usize,
    coeffs: &CoefficientSet,
    jumps: &JumpMeasure,
    snapshot: &Snapshot,
) -> Result<HamiltonianTerms> {
    if t_idx > coeffs.n_steps() {
        return Err(Error::InvalidArgument(format!(
            "time index {t_idx} outside a grid with {} steps",
            coeffs.n_steps()
        )));
    }
    HamiltonianTerms::from_step(t_idx, coeffs.at_step(t_idx), jumps, snapshot)
}

impl HamiltonianTerms {
    pub fn from_step(
        t_idx: usize,
        s: &StepCoefficients,
        jumps: &JumpMeasure,
        snapshot: &Snapshot,
    ) -> Result<Self> {
        if s.marks.len() != jumps.n_marks() {
            return Err(Error::InvalidArgument(format!(
                "coefficients have {} marks but the jump measure has {}",
                s.marks.len(),
                jumps.n_marks()
            )));
        }
        snapshot.validate(jumps.n_marks())?;
        let dd1 = &s.d1 * s.d1.transpose();
        let dd2 = &s.d2 * s.d2.transpose();
        let n_term = |sv: &Vector, b: &Vector, d: &Vector, p: f64, lambda: f64| -> Vector {
            sv + b * p + d * (p * s.c) + d * lambda
        };
        let mut out = Self {
            t_idx,
            m11: &s.r11 + &dd1 * snapshot.p1,
            m12: &s.r11 + &dd1 * snapshot.p2,
            m21: &s.r22 + &dd2 * snapshot.p1,
            m22: &s.r22 + &dd2 * snapshot.p2,
            n11: n_term(&s.s1, &s.b1, &s.d1, snapshot.p1, snapshot.lambda1),
            n12: n_term(&s.s1, &s.b1, &s.d1, snapshot.p2, snapshot.lambda2),
            n21: n_term(&s.s2, &s.b2, &s.d2, snapshot.p1, snapshot.lambda1),
            n22: n_term(&s.s2, &s.b2, &s.d2, snapshot.p2, snapshot.lambda2),
            snapshot: snapshot.clone(),
            coeffs: s.clone(),
            nus: jumps.intensities().to_vec(),
            objectives: [BranchObjective::empty(), BranchObjective::empty()],
        };
        out.objectives = [
            BranchObjective::new(&out, Branch::Positive),
            BranchObjective::new(&out, Branch::Negative),
        ];
        Ok(out)
    }

    pub(crate) fn objective(&self, branch: Branch) -> &BranchObjective {
        match branch {
            Branch::Positive => &self.objectives[0],
            Branch::Negative => &self.objectives[1],
        }
    }

    pub fn m1(&self) -> usize {
        self.m11.nrows()
    }

    pub fn m2(&self) -> usize {
        self.m21.nrows()
    }

    pub fn coefficients(&self) -> &StepCoefficients {
        &self.coeffs
    }

    pub fn intensities(&self) -> &[f64] {
        &self.nus
    }

    /// Curvature block of the player-1 quadratic on a branch.
    pub fn m_first(&self, branch: Branch) -> &Matrix {
        match branch {
            Branch::Positive => &self.m11,
            Branch::Negative => &self.m12,
        }
    }

    pub fn m_second(&self, branch: Branch) -> &Matrix {
        match branch {
            Branch::Positive => &self.m21,
            Branch::Negative => &self.m22,
        }
    }

    /// Linear coefficient of `v1` (before the factor 2), sign included.
    pub(crate) fn lin_first(&self, branch: Branch) -> Vector {
        match branch {
            Branch::Positive => self.n11.clone(),
            Branch::Negative => -&self.n12,
        }
    }

    pub(crate) fn lin_second(&self, branch: Branch) -> Vector {
        match branch {
            Branch::Positive => self.n21.clone(),
            Branch::Negative => -&self.n22,
        }
    }

    /// Cross block `P_k D1 D2ᵀ + R12`.
    pub(crate) fn cross(&self, branch: Branch) -> Matrix {
        let p = match branch {
            Branch::Positive => self.snapshot.p1,
            Branch::Negative => self.snapshot.p2,
        };
        &self.coeffs.d1 * self.coeffs.d2.transpose() * p + &self.coeffs.r12
    }

    pub(crate) fn jump_pieces(&self, branch: Branch) -> Vec<JumpPiece> {
        let sn = &self.snapshot;
        self.coeffs
            .marks
            .iter()
            .zip(&self.nus)
            .enumerate()
            .map(|(j, (mk, &nu))| {
                let w_pos = sn.p1 + sn.gamma1[j];
                let w_neg = sn.p2 + sn.gamma2[j];
                let (offset, gamma, kappa) = match branch {
                    // (P1+Γ1)((y⁺)²−1) − 2P1(y−1) + (P2+Γ2)(y⁻)², y = 1+E+…
                    Branch::Positive => (1.0 + mk.e, -2.0 * sn.p1, -w_pos + 2.0 * sn.p1),
                    // (P2+Γ2)((y⁻)²−1) + 2P2(y+1) + (P1+Γ1)(y⁺)², y = −1−E+…
                    Branch::Negative => (-1.0 - mk.e, 2.0 * sn.p2, -w_neg + 2.0 * sn.p2),
                };
                JumpPiece {
                    nu,
                    offset,
                    f1: mk.f1.clone(),
                    f2: mk.f2.clone(),
                    alpha: w_pos,
                    beta: w_neg,
                    gamma,
                    kappa,
                }
            })
            .collect()
    }

    fn check_dims(&self, v1: Option<&Vector>, v2: Option<&Vector>) -> Result<()> {
        if let Some(v1) = v1 {
            if v1.len() != self.m1() {
                return Err(Error::InvalidArgument(format!(
                    "v1 has dimension {} but m1 = {}",
                    v1.len(),
                    self.m1()
                )));
            }
        }
        if let Some(v2) = v2 {
            if v2.len() != self.m2() {
                return Err(Error::InvalidArgument(format!(
                    "v2 has dimension {} but m2 = {}",
                    v2.len(),
                    self.m2()
                )));
            }
        }
        Ok(())
    }

    /// Player-1 part, including the cross term and the jump integrals.
    pub fn eval_under(&self, branch: Branch, v1: &Vector, v2: &Vector) -> Result<f64> {
        self.check_dims(Some(v1), Some(v2))?;
        Ok(self.under_unchecked(branch, v1, v2))
    }

    /// Player-2 quadratic part.
    pub fn eval_bar(&self, branch: Branch, v2: &Vector) -> Result<f64> {
        self.check_dims(None, Some(v2))?;
        Ok(self.bar_unchecked(branch, v2))
    }

    /// Full Hamiltonian `H̲_k + H̄_k`.
    pub fn eval(&self, branch: Branch, v1: &Vector, v2: &Vector) -> Result<f64> {
        self.check_dims(Some(v1), Some(v2))?;
        Ok(self.under_unchecked(branch, v1, v2) + self.bar_unchecked(branch, v2))
    }

    pub(crate) fn under_unchecked(&self, branch: Branch, v1: &Vector, v2: &Vector) -> f64 {
        self.objective(branch).under(v1, v2)
    }

    pub(crate) fn bar_unchecked(&self, branch: Branch, v2: &Vector) -> f64 {
        self.objective(branch).bar(v2)
    }
}
