//! Per-branch Hamiltonian as an explicit convex-concave function of
//! `(v1, v2)`: quadratic blocks plus one positive-part piece per mark.

use crate::linalg::{max_eigenvalue, min_eigenvalue, neg, pos, symmetric_norm, Matrix, Vector};

use super::piecewise::{Piece, PwQuad};
use super::terms::{Branch, HamiltonianTerms};

/// Jump integrand for one mark on one branch:
/// `α (y⁺)² + β (y⁻)² + γ y + κ` with `y = offset + f1ᵀv1 + f2ᵀv2`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct JumpPiece {
    pub nu: f64,
    pub offset: f64,
    pub f1: Vector,
    pub f2: Vector,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl JumpPiece {
    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        let (p, n) = (pos(y), neg(y));
        self.alpha * p * p + self.beta * n * n + self.gamma * y + self.kappa
    }

    /// Right derivative in `y`.
    #[inline]
    pub fn slope(&self, y: f64) -> f64 {
        if y >= 0.0 {
            2.0 * self.alpha * y + self.gamma
        } else {
            2.0 * self.beta * y + self.gamma
        }
    }
}

/// `H_k(v1, v2) = v1ᵀq1v1 + 2l1ᵀv1 + 2v1ᵀx v2 + Σ ν φ(y) + v2ᵀq2v2 + 2l2ᵀv2`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BranchObjective {
    pub q1: Matrix,
    pub l1: Vector,
    pub x: Matrix,
    pub q2: Matrix,
    pub l2: Vector,
    pub pieces: Vec<JumpPiece>,
}

impl BranchObjective {
    pub fn empty() -> Self {
        Self {
            q1: Matrix::zeros(0, 0),
            l1: Vector::zeros(0),
            x: Matrix::zeros(0, 0),
            q2: Matrix::zeros(0, 0),
            l2: Vector::zeros(0),
            pieces: Vec::new(),
        }
    }

    pub fn new(terms: &HamiltonianTerms, branch: Branch) -> Self {
        Self {
            q1: terms.m_first(branch).clone(),
            l1: terms.lin_first(branch),
            x: terms.cross(branch),
            q2: terms.m_second(branch).clone(),
            l2: terms.lin_second(branch),
            pieces: terms.jump_pieces(branch),
        }
    }

    #[inline]
    fn y(&self, jp: &JumpPiece, v1: &Vector, v2: &Vector) -> f64 {
        jp.offset + jp.f1.dot(v1) + jp.f2.dot(v2)
    }

    pub fn under(&self, v1: &Vector, v2: &Vector) -> f64 {
        let quad = v1.dot(&(&self.q1 * v1));
        let lin = 2.0 * self.l1.dot(v1);
        let cross = 2.0 * v1.dot(&(&self.x * v2));
        let jumps: f64 = self.pieces.iter().map(|jp| jp.nu * jp.value(self.y(jp, v1, v2))).sum();
        quad + lin + cross + jumps
    }

    pub fn bar(&self, v2: &Vector) -> f64 {
        v2.dot(&(&self.q2 * v2)) + 2.0 * self.l2.dot(v2)
    }

    pub fn value(&self, v1: &Vector, v2: &Vector) -> f64 {
        self.under(v1, v2) + self.bar(v2)
    }

    /// Allocation-free evaluation for scalar controls.
    #[inline]
    pub fn value_scalar(&self, a: f64, b: f64) -> f64 {
        let mut out = self.q1[(0, 0)] * a * a
            + 2.0 * self.l1[0] * a
            + 2.0 * self.x[(0, 0)] * a * b
            + self.q2[(0, 0)] * b * b
            + 2.0 * self.l2[0] * b;
        for jp in &self.pieces {
            out += jp.nu * jp.value(jp.offset + jp.f1[0] * a + jp.f2[0] * b);
        }
        out
    }

    pub fn grad1(&self, v1: &Vector, v2: &Vector) -> Vector {
        let mut g = (&self.q1 * v1 + &self.l1 + &self.x * v2) * 2.0;
        for jp in &self.pieces {
            g += &jp.f1 * (jp.nu * jp.slope(self.y(jp, v1, v2)));
        }
        g
    }

    pub fn grad2(&self, v1: &Vector, v2: &Vector) -> Vector {
        let mut g = (&self.q2 * v2 + &self.l2 + self.x.transpose() * v1) * 2.0;
        for jp in &self.pieces {
            g += &jp.f2 * (jp.nu * jp.slope(self.y(jp, v1, v2)));
        }
        g
    }

    /// True when `v1` and `v2` do not interact.
    pub fn is_separable(&self) -> bool {
        self.x.iter().all(|&c| c == 0.0) && self.pieces.iter().all(|jp| jp.f2.iter().all(|&c| c == 0.0))
    }

    /// Smallest eigenvalue of the least favourable half-Hessian in `v1`.
    pub fn convexity_margin(&self) -> f64 {
        let mut m = self.q1.clone();
        for jp in &self.pieces {
            m += &jp.f1 * jp.f1.transpose() * (jp.nu * jp.alpha.min(jp.beta));
        }
        min_eigenvalue(&m)
    }

    /// Largest eigenvalue of the least favourable half-Hessian in `v2`.
    pub fn concavity_margin(&self) -> f64 {
        let mut m = self.q2.clone();
        for jp in &self.pieces {
            m += &jp.f2 * jp.f2.transpose() * (jp.nu * jp.alpha.max(jp.beta));
        }
        max_eigenvalue(&m)
    }

    /// Lipschitz bound for the gradient of the saddle operator.
    pub fn operator_lipschitz(&self) -> f64 {
        let mut jump = 0.0;
        for jp in &self.pieces {
            let w = jp.alpha.abs().max(jp.beta.abs());
            jump += jp.nu * w * (jp.f1.norm() + jp.f2.norm()).powi(2);
        }
        let x = if self.x.is_empty() { 0.0 } else { self.x.norm() };
        2.0 * (symmetric_norm(&self.q1) + symmetric_norm(&self.q2) + x + jump)
    }

    /// Scale of the coefficients, for relative tolerances.
    pub fn scale(&self) -> f64 {
        let mut s = 1.0f64;
        for m in [&self.q1, &self.q2, &self.x] {
            if !m.is_empty() {
                s = s.max(m.amax());
            }
        }
        for v in [&self.l1, &self.l2] {
            if !v.is_empty() {
                s = s.max(v.amax());
            }
        }
        for jp in &self.pieces {
            s = s.max(jp.nu * jp.alpha.abs().max(jp.beta.abs()).max(jp.gamma.abs()));
        }
        s
    }

    /// `v1 ↦ H̲_k(v1, v2)` as a minimisation problem.
    pub fn first_player(&self, v2: &Vector) -> PwQuad {
        PwQuad {
            q: self.q1.clone(),
            l: &self.l1 + &self.x * v2,
            pieces: self
                .pieces
                .iter()
                .map(|jp| Piece {
                    nu: jp.nu,
                    c: jp.offset + jp.f2.dot(v2),
                    f: jp.f1.clone(),
                    alpha: jp.alpha,
                    beta: jp.beta,
                    gamma: jp.gamma,
                    kappa: jp.kappa,
                })
                .collect(),
            constant: 0.0,
        }
    }

    /// `v2 ↦ −H_k(v1, v2)` as a minimisation problem.
    pub fn second_player(&self, v1: &Vector) -> PwQuad {
        PwQuad {
            q: -&self.q2,
            l: -(&self.l2 + self.x.transpose() * v1),
            pieces: self
                .pieces
                .iter()
                .map(|jp| Piece {
                    nu: jp.nu,
                    c: jp.offset + jp.f1.dot(v1),
                    f: jp.f2.clone(),
                    alpha: -jp.alpha,
                    beta: -jp.beta,
                    gamma: -jp.gamma,
                    kappa: -jp.kappa,
                })
                .collect(),
            constant: -(v1.dot(&(&self.q1 * v1)) + 2.0 * self.l1.dot(v1)),
        }
    }
}
