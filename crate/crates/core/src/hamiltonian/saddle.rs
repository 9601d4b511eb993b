use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{serde_vector, Vector};
use crate::model::Cone;

use super::objective::BranchObjective;
use super::piecewise::MinimizeOptions;
use super::terms::{Branch, HamiltonianTerms};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaddleMethod {
    /// Exact piecewise-quadratic solves of the separated problems.
    Analytic,
    /// Accelerated projected gradient on the separated problems.
    ProjectedGradient,
    Extragradient,
    GridOracle,
}

/// Saddle point of one branch Hamiltonian over the cones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleResult {
    #[serde(with = "serde_vector")]
    pub v1: Vector,
    #[serde(with = "serde_vector")]
    pub v2: Vector,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub method: SaddleMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleOptions {
    /// Stationarity tolerance, relative to the coefficient scale.
    pub tol: f64,
    pub max_iter: usize,
    /// Re-check convexity in `v1` and concavity in `v2` before solving.
    pub check_curvature: bool,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 100_000,
            check_curvature: true,
        }
    }
}

impl SaddleOptions {
    fn minimize(&self) -> MinimizeOptions {
        MinimizeOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// Ball radii `(n, n̄)` restricting the player-1 and player-2 searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub first: f64,
    pub second: f64,
}

impl Truncation {
    pub fn new(first: f64, second: f64) -> Result<Self> {
        for (name, r) in [("n", first), ("n_bar", second)] {
            if !(r >= 0.0) || r.is_nan() {
                return Err(Error::InvalidArgument(format!("truncation radius {name} must be >= 0, got {r}")));
            }
        }
        Ok(Self { first, second })
    }
}

fn check_cones(terms: &HamiltonianTerms, cone1: &Cone, cone2: &Cone) -> Result<()> {
    if cone1.dim() != terms.m1() || cone2.dim() != terms.m2() {
        return Err(Error::InvalidArgument(format!(
            "cone dimensions ({}, {}) do not match control dimensions ({}, {})",
            cone1.dim(),
            cone2.dim(),
            terms.m1(),
            terms.m2()
        )));
    }
    Ok(())
}

pub(crate) fn check_curvature(obj: &BranchObjective, branch: Branch, cone1: &Cone, cone2: &Cone) -> Result<()> {
    let tol = 1e-10 * obj.scale();
    if !cone1.is_trivial() {
        let m = obj.convexity_margin();
        if m < -tol {
            return Err(Error::NotConvex {
                branch: branch.name(),
                min_eigenvalue: m,
            });
        }
    }
    if !cone2.is_trivial() {
        let m = obj.concavity_margin();
        if m > tol {
            return Err(Error::NotConcave {
                branch: branch.name(),
                max_eigenvalue: m,
            });
        }
    }
    Ok(())
}

/// Minimiser of `H̲_k(·, v2)` over the player-1 cone (within the ball of
/// radius `trunc_radius` when given) and the minimal value.
pub fn inner_min(
    branch: Branch,
    v2: &Vector,
    terms: &HamiltonianTerms,
    cone1: &Cone,
    trunc_radius: Option<f64>,
) -> Result<(Vector, f64)> {
    if cone1.dim() != terms.m1() || v2.len() != terms.m2() {
        return Err(Error::InvalidArgument("control dimensions do not match the Hamiltonian".into()));
    }
    if let Some(r) = trunc_radius {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("truncation radius must be positive, got {r}")));
        }
    }
    let obj = terms.objective(branch);
    check_curvature(obj, branch, cone1, &Cone::zero(terms.m2()))?;
    let m = obj
        .first_player(v2)
        .minimize(cone1, trunc_radius, None, SaddleOptions::default().minimize())?;
    Ok((m.v.clone(), obj.under(&m.v, v2)))
}

/// Cone-constrained saddle point `(v1*, v2*)` and value `H_k*` of one branch.
pub fn saddle(
    branch: Branch,
    terms: &HamiltonianTerms,
    cone1: &Cone,
    cone2: &Cone,
    opts: &SaddleOptions,
    trunc: Option<Truncation>,
    warm: Option<(&Vector, &Vector)>,
) -> Result<SaddleResult> {
    check_cones(terms, cone1, cone2)?;
    let obj = terms.objective(branch);
    if opts.check_curvature {
        check_curvature(obj, branch, cone1, cone2)?;
    }
    let (r1, r2) = match trunc {
        Some(t) => (Some(t.first), Some(t.second)),
        None => (None, None),
    };
    let mopts = opts.minimize();
    let zero1 = Vector::zeros(terms.m1());
    let zero2 = Vector::zeros(terms.m2());
    let trivial1 = cone1.is_trivial() || r1 == Some(0.0);
    let trivial2 = cone2.is_trivial() || r2 == Some(0.0);

    if obj.is_separable() || trivial1 || trivial2 {
        if trunc.is_some() && !obj.is_separable() && !(trivial1 || trivial2) {
            return Err(Error::InvalidArgument("truncated saddles require separable Hamiltonians".into()));
        }
        let (v1, v2, iterations, residual, exact) = if trivial2 {
            let m1 = obj.first_player(&zero2).minimize(cone1, r1, warm.map(|w| w.0), mopts)?;
            (m1.v, zero2, m1.iterations, m1.residual, m1.exact)
        } else if trivial1 {
            let m2 = obj.second_player(&zero1).minimize(cone2, r2, warm.map(|w| w.1), mopts)?;
            (zero1, m2.v, m2.iterations, m2.residual, m2.exact)
        } else {
            let m1 = obj.first_player(&zero2).minimize(cone1, r1, warm.map(|w| w.0), mopts)?;
            let m2 = obj.second_player(&zero1).minimize(cone2, r2, warm.map(|w| w.1), mopts)?;
            (
                m1.v,
                m2.v,
                m1.iterations + m2.iterations,
                m1.residual.max(m2.residual),
                m1.exact && m2.exact,
            )
        };
        return Ok(SaddleResult {
            value: obj.value(&v1, &v2),
            v1,
            v2,
            iterations,
            residual,
            method: if exact {
                SaddleMethod::Analytic
            } else {
                SaddleMethod::ProjectedGradient
            },
        });
    }
    extragradient(obj, cone1, cone2, opts, warm)
}

fn extragradient(
    obj: &BranchObjective,
    cone1: &Cone,
    cone2: &Cone,
    opts: &SaddleOptions,
    warm: Option<(&Vector, &Vector)>,
) -> Result<SaddleResult> {
    let lip = obj.operator_lipschitz();
    if lip == 0.0 {
        let v1 = Vector::zeros(obj.l1.len());
        let v2 = Vector::zeros(obj.l2.len());
        return Ok(SaddleResult {
            value: obj.value(&v1, &v2),
            v1,
            v2,
            iterations: 0,
            residual: 0.0,
            method: SaddleMethod::Extragradient,
        });
    }
    let eta = 0.5 / lip;
    let p1 = |v: &Vector| cone1.project_unchecked(v);
    let p2 = |v: &Vector| cone2.project_unchecked(v);
    let (mut v1, mut v2) = match warm {
        Some((a, b)) => (p1(a), p2(b)),
        None => (Vector::zeros(obj.l1.len()), Vector::zeros(obj.l2.len())),
    };
    let tol = opts.tol * obj.scale();
    let blow = 1e12 * (1.0 + obj.scale());
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iter {
        let g1 = obj.grad1(&v1, &v2);
        let g2 = obj.grad2(&v1, &v2);
        let h1 = p1(&(&v1 - &g1 * eta));
        let h2 = p2(&(&v2 + &g2 * eta));
        residual = ((&h1 - &v1).norm_squared() + (&h2 - &v2).norm_squared()).sqrt() / eta;
        if residual <= tol {
            return Ok(SaddleResult {
                value: obj.value(&v1, &v2),
                v1,
                v2,
                iterations: it,
                residual,
                method: SaddleMethod::Extragradient,
            });
        }
        let g1h = obj.grad1(&h1, &h2);
        let g2h = obj.grad2(&h1, &h2);
        v1 = p1(&(&v1 - &g1h * eta));
        v2 = p2(&(&v2 + &g2h * eta));
        if v1.norm() + v2.norm() > blow {
            return Err(Error::Unbounded);
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// `H̲ⁿ_k` and `H̄ⁿ̄_k` separately, for separable Hamiltonians.
pub fn truncated_parts(
    branch: Branch,
    terms: &HamiltonianTerms,
    cone1: &Cone,
    cone2: &Cone,
    trunc: Truncation,
) -> Result<(f64, f64)> {
    check_cones(terms, cone1, cone2)?;
    let obj = terms.objective(branch);
    if !obj.is_separable() {
        return Err(Error::InvalidArgument("truncated parts require separable Hamiltonians".into()));
    }
    check_curvature(obj, branch, cone1, cone2)?;
    let mopts = SaddleOptions::default().minimize();
    let zero1 = Vector::zeros(terms.m1());
    let zero2 = Vector::zeros(terms.m2());
    let m1 = obj.first_player(&zero2).minimize(cone1, Some(trunc.first), None, mopts)?;
    let m2 = obj.second_player(&zero1).minimize(cone2, Some(trunc.second), None, mopts)?;
    Ok((obj.under(&m1.v, &zero2), obj.bar(&m2.v)))
}
