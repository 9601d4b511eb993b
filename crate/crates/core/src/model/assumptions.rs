use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue, Matrix, Vector};

use super::coefficients::{CoefficientSet, StepCoefficients};
use super::grid::TimeGrid;
use super::jumps::JumpMeasure;

/// Floor applied to constants that must be strictly positive.
pub const CONSTANT_FLOOR: f64 = 1e-12;

/// Default lower curvature witness.
pub const DEFAULT_DELTA_LOWER: f64 = 1e-3;

/// Which inequalities of the standing assumption hold on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionFlags {
    /// `R11 > δ̲ I` everywhere.
    pub r11_coercive: bool,
    /// `R22 <= -(δ̄ + K c̄) I` everywhere.
    pub r22_anticoercive: bool,
    pub q_nonnegative: bool,
    /// `G >= δ̲`.
    pub g_lower: bool,
    /// `δ̲ I <= D1 D1ᵀ + Σ F1 F1ᵀ ν`.
    pub noise1_nondegenerate: bool,
    /// `δ̲ I <= D2 D2ᵀ + Σ F2 F2ᵀ ν`.
    pub noise2_nondegenerate: bool,
}

impl AssumptionFlags {
    pub fn all(&self) -> bool {
        self.r11_coercive
            && self.r22_anticoercive
            && self.q_nonnegative
            && self.g_lower
            && self.noise1_nondegenerate
            && self.noise2_nondegenerate
    }

    pub fn failed(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let checks = [
            (self.r11_coercive, "R11 > delta_lower I"),
            (self.r22_anticoercive, "R22 <= -(delta_bar + K c_bar) I"),
            (self.q_nonnegative, "Q >= 0"),
            (self.g_lower, "G >= delta_lower"),
            (self.noise1_nondegenerate, "delta_lower I <= D1 D1' + sum F1 F1' nu"),
            (self.noise2_nondegenerate, "delta_lower I <= D2 D2' + sum F2 F2' nu"),
        ];
        for (ok, name) in checks {
            if !ok {
                out.push(name);
            }
        }
        out
    }
}

/// Coefficient restriction under which the player-1 and player-2 parts of
/// the Hamiltonian separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureFlags {
    pub f2_zero: bool,
    pub s_zero: bool,
    pub r12_zero: bool,
    pub d1_d2_orthogonal: bool,
}

impl StructureFlags {
    pub fn all(&self) -> bool {
        self.f2_zero && self.s_zero && self.r12_zero && self.d1_d2_orthogonal
    }
}

/// Constants and assumption flags computed from a coefficient set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub c_bar: f64,
    pub delta_lower: f64,
    pub delta_bar: f64,
    pub k: f64,
    pub c_lower1: f64,
    pub horizon: f64,
    pub flags: AssumptionFlags,
    pub structure: StructureFlags,
}

impl AssumptionReport {
    /// `K = (c̄+1) e^{2c̄T}`.
    pub fn k_from(c_bar: f64, horizon: f64) -> f64 {
        (c_bar + 1.0) * (2.0 * c_bar * horizon).exp()
    }

    /// `δ̄ = (c̄+1)² e^{4c̄T} (e^{2c̄T} − 1)`.
    pub fn delta_bar_from(c_bar: f64, horizon: f64) -> f64 {
        (c_bar + 1.0).powi(2) * (4.0 * c_bar * horizon).exp() * ((2.0 * c_bar * horizon).exp() - 1.0)
    }

    /// Threshold beyond which a Riccati solution is declared to have blown up.
    pub fn blow_up_threshold(&self, g: f64) -> f64 {
        if self.flags.all() {
            10.0 * self.k
        } else {
            10.0 * g.abs().max(self.c_bar).max(1.0) * (10.0 * self.c_bar * self.horizon).exp()
        }
    }
}

fn noise_matrix(d: &Vector, f: impl Fn(usize) -> Vector, nus: &[f64]) -> Matrix {
    let mut m = d * d.transpose();
    for (j, &nu) in nus.iter().enumerate() {
        let fj = f(j);
        m += &fj * fj.transpose() * nu;
    }
    m
}

struct StepStats {
    c_bar: f64,
    drift_e2: f64,
    lin2: f64,
    r11_min: f64,
    r22_max: f64,
    q: f64,
    noise1_min: f64,
    noise2_min: f64,
    f2_zero: bool,
    s_zero: bool,
    r12_zero: bool,
    d_orth: bool,
}

fn step_stats(s: &StepCoefficients, nus: &[f64]) -> StepStats {
    let drift = 2.0 * s.a + s.c * s.c;
    let e2: f64 = s.marks.iter().zip(nus).map(|(m, nu)| m.e * m.e * nu).sum();
    let b1 = (&s.b1 + &s.d1 * s.c).norm_squared();
    let b2 = (&s.b2 + &s.d2 * s.c).norm_squared();
    let n1 = noise_matrix(&s.d1, |j| s.marks[j].f1.clone(), nus);
    let n2 = noise_matrix(&s.d2, |j| s.marks[j].f2.clone(), nus);
    let c_bar = [drift, e2, b1, b2, max_eigenvalue(&n1), max_eigenvalue(&n2), s.q]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut lin = &s.b1 + &s.d1 * s.c;
    for (m, nu) in s.marks.iter().zip(nus) {
        lin += &m.f1 * (m.e * nu);
    }
    StepStats {
        c_bar,
        drift_e2: drift + e2,
        lin2: lin.norm_squared(),
        r11_min: min_eigenvalue(&s.r11),
        r22_max: max_eigenvalue(&s.r22),
        q: s.q,
        noise1_min: min_eigenvalue(&n1),
        noise2_min: min_eigenvalue(&n2),
        f2_zero: s.marks.iter().all(|m| m.f2.iter().all(|&x| x == 0.0)),
        s_zero: s.s1.iter().chain(s.s2.iter()).all(|&x| x == 0.0),
        r12_zero: s.r12.iter().all(|&x| x == 0.0),
        d_orth: s.d1.iter().all(|&x| x == 0.0) || s.d2.iter().all(|&x| x == 0.0),
    }
}

/// Computes the uniform constants and checks every inequality of the
/// standing assumption over the grid (and all lattice-node overrides).
///
/// Failed inequalities are reported through the flags, not as errors.
pub fn validate_coefficients(
    coeffs: &CoefficientSet,
    grid: &TimeGrid,
    jumps: &JumpMeasure,
    delta_lower: f64,
) -> Result<AssumptionReport> {
    if !(delta_lower.is_finite() && delta_lower > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta_lower must be positive and finite, got {delta_lower}"
        )));
    }
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
    let (m1, m2) = (coeffs.m1(), coeffs.m2());
    let records = coeffs.steps().iter().chain(coeffs.node_overrides().map(|(_, s)| s));
    let nus = jumps.intensities();

    let mut c_bar = coeffs.g();
    let mut c_lower_min = f64::INFINITY;
    let mut r11_min = f64::INFINITY;
    let mut r22_max = f64::NEG_INFINITY;
    let mut q_min = f64::INFINITY;
    let mut noise1_min = f64::INFINITY;
    let mut noise2_min = f64::INFINITY;
    let mut structure = StructureFlags {
        f2_zero: true,
        s_zero: true,
        r12_zero: true,
        d1_d2_orthogonal: true,
    };
    for s in records {
        s.validate(m1, m2, nus.len())?;
        let st = step_stats(s, nus);
        c_bar = c_bar.max(st.c_bar);
        c_lower_min = c_lower_min.min(st.drift_e2 - delta_lower * st.lin2);
        r11_min = r11_min.min(st.r11_min);
        r22_max = r22_max.max(st.r22_max);
        q_min = q_min.min(st.q);
        noise1_min = noise1_min.min(st.noise1_min);
        noise2_min = noise2_min.min(st.noise2_min);
        structure.f2_zero &= st.f2_zero;
        structure.s_zero &= st.s_zero;
        structure.r12_zero &= st.r12_zero;
        structure.d1_d2_orthogonal &= st.d_orth;
    }
    let c_bar = c_bar.max(CONSTANT_FLOOR);
    let horizon = grid.horizon();
    let k = AssumptionReport::k_from(c_bar, horizon);
    let delta_bar = AssumptionReport::delta_bar_from(c_bar, horizon);
    let c_lower1 = (-c_lower_min).max(CONSTANT_FLOOR);
    let flags = AssumptionFlags {
        r11_coercive: r11_min > delta_lower,
        r22_anticoercive: r22_max <= -(delta_bar + k * c_bar),
        q_nonnegative: q_min >= 0.0,
        g_lower: coeffs.g() >= delta_lower,
        noise1_nondegenerate: noise1_min >= delta_lower,
        noise2_nondegenerate: noise2_min >= delta_lower,
    };
    for (name, x) in [("c_bar", c_bar), ("K", k), ("delta_bar", delta_bar), ("c_lower1", c_lower1)] {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("{name} overflowed; horizon or coefficients too large")));
        }
    }
    Ok(AssumptionReport {
        c_bar,
        delta_lower,
        delta_bar,
        k,
        c_lower1,
        horizon,
        flags,
        structure,
    })
}
