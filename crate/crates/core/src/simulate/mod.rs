//! Forward simulation of the controlled state, Monte Carlo payoffs and the
//! verification suites built on them.

mod convexity;
mod cost;
mod engine;
mod feedback;
mod psi;
mod verify;

pub use convexity::{directional_stationarity, verify_convexity_identity, ConvexityReport, StationarityReport};
pub use cost::{evaluate_cost, path_cost, CostEstimate, Quadrature};
pub use engine::{
    simulate_arms, simulate_paths, simulate_schedule, Arm, JumpEvent, PathRecord, Player, PlayerRule, SimOptions,
    SimulationResult,
};
pub use feedback::{extract_feedback, extract_lattice_feedback, FeedbackLaw, Gains};
pub use psi::{psi_eval, saddle_controls, verify_psi_identity, PsiReport, PSI_MESH};
pub use verify::{
    constant_ray, euler_bias, perturbation_corpus, random_schedule, sign_test, verify_saddle, verify_value_formula,
    Perturbation, SaddleArmReport, SaddleReport, ValueFormulaReport, Z_LIMIT,
};
