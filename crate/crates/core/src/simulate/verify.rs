use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{neg, pos, Vector};
use crate::model::{Cone, Problem};
use crate::riccati::{solve_ode, RiccatiOptions, RiccatiSolution};
use crate::simulate::cost::CostEstimate;
use crate::simulate::engine::{require_law_grid, simulate_arms, Arm, Player, PlayerRule, SimOptions};
use crate::simulate::feedback::{extract_feedback, FeedbackLaw};

/// Number of standard errors a Monte Carlo comparison may miss by.
pub const Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFormulaReport {
    /// Monte Carlo payoff under the saddle law.
    pub cost: CostEstimate,
    /// `E[P₁(0)(ξ⁺)² + P₂(0)(ξ⁻)²]`, exact for point laws and otherwise
    /// averaged over the simulated initial states.
    pub target: f64,
    /// Paired per-path difference payoff − target.
    pub diff: CostEstimate,
    pub z: f64,
    /// Time-discretisation bias estimate, when one was computed.
    pub bias: Option<f64>,
    /// `diff / sqrt(stderr² + bias²)`.
    pub z_with_bias: Option<f64>,
    pub pass: bool,
}

impl ValueFormulaReport {
    /// Adds a discretisation bias estimate to the error budget.
    pub fn with_bias(mut self, bias: f64) -> Self {
        let denom = self.diff.stderr.hypot(bias);
        let z = if self.diff.mean == 0.0 { 0.0 } else { self.diff.mean / denom };
        self.bias = Some(bias);
        self.z_with_bias = Some(z);
        self.pass = self.z.abs() <= Z_LIMIT || z.abs() <= Z_LIMIT;
        self
    }
}

fn exact_zero(mean: f64, scale: f64) -> bool {
    mean.abs() <= 1e-12 * (1.0 + scale.abs())
}

/// Monte Carlo payoff under the saddle law against `E[P₁(0)(ξ⁺)²] + E[P₂(0)(ξ⁻)²]`.
pub fn verify_value_formula(
    problem: &Problem,
    sol: &RiccatiSolution,
    law: &FeedbackLaw,
    opts: &SimOptions,
) -> Result<ValueFormulaReport> {
    require_law_grid(problem, law)?;
    let res = simulate_arms(problem, &[Arm::saddle(law)], opts)?.remove(0);
    let (p1, p2) = (sol.p1[0], sol.p2[0]);
    let per_path: Vec<f64> = match problem.initial.exact_split_moment(p1, p2) {
        Some(t) => vec![t; res.n_paths],
        None => res.initial.iter().map(|&x| p1 * pos(x).powi(2) + p2 * neg(x).powi(2)).collect(),
    };
    let target = CostEstimate::from_samples(&per_path).mean;
    let cost = res.cost();
    let diff = CostEstimate::paired(&res.costs, &per_path);
    let z = diff.z();
    let pass = z.abs() <= Z_LIMIT || exact_zero(diff.mean, target);
    Ok(ValueFormulaReport {
        cost,
        target,
        diff,
        z,
        bias: None,
        z_with_bias: None,
        pass,
    })
}

/// Time-discretisation bias of the simulated saddle payoff: the paired
/// difference between the run on the problem grid and a run on a grid of
/// half as many steps driven by the same noise.
pub fn euler_bias(problem: &Problem, riccati: &RiccatiOptions, opts: &SimOptions) -> Result<f64> {
    let n = problem.grid.n_steps();
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!("bias estimate needs an even step count, got {n}")));
    }
    let fine_law = extract_feedback(&solve_ode(problem, riccati)?)?;
    let coarse = problem.refined(n / 2)?;
    let coarse_law = extract_feedback(&solve_ode(&coarse, riccati)?)?;
    let fine = simulate_arms(problem, &[Arm::saddle(&fine_law)], opts)?.remove(0);
    let mut coarse_opts = *opts;
    coarse_opts.coarsen = 2 * opts.coarsen;
    let coarse = simulate_arms(&coarse, &[Arm::saddle(&coarse_law)], &coarse_opts)?.remove(0);
    Ok(CostEstimate::paired(&fine.costs, &coarse.costs).mean.abs())
}

/// A single-player deviation from the saddle law.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub name: String,
    pub player: Player,
    pub rule: PlayerRule,
}

/// Piecewise-constant cone-valued schedule with `pieces` equal pieces.
pub fn random_schedule<R: Rng + ?Sized>(rng: &mut R, cone: &Cone, n_steps: usize, pieces: usize, scale: f64) -> Vec<Vector> {
    let pieces = pieces.clamp(1, n_steps.max(1));
    let values: Vec<Vector> = (0..pieces).map(|_| cone.sample(rng, scale)).collect();
    (0..n_steps).map(|i| values[i * pieces / n_steps].clone()).collect()
}

/// Constant schedule along a unit cone direction at the given radius.
pub fn constant_ray<R: Rng + ?Sized>(rng: &mut R, cone: &Cone, n_steps: usize, radius: f64) -> Vec<Vector> {
    let mut d = cone.sample(rng, 1.0);
    for _ in 0..8 {
        if d.norm() > 0.0 {
            break;
        }
        d = cone.sample(rng, 1.0);
    }
    let n = d.norm();
    let v = if n > 0.0 { d * (radius / n) } else { d };
    vec![v; n_steps]
}

/// Deviations per player: scaled saddle gains `λΘ` for `λ ∈ {0, ½, 2}`,
/// constant cone rays at two radii, and two random piecewise-constant
/// cone schedules.
pub fn perturbation_corpus(problem: &Problem, law: &FeedbackLaw, seed: u64) -> Result<Vec<Perturbation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.grid.n_steps();
    let scale = initial_scale(problem);
    let mut out = Vec::new();
    for (player, cone) in [(Player::First, &problem.cone1), (Player::Second, &problem.cone2)] {
        let tag = match player {
            Player::First => "u1",
            Player::Second => "u2",
        };
        for lambda in [0.0, 0.5, 2.0] {
            out.push(Perturbation {
                name: format!("{tag} = {lambda} x saddle gain"),
                player,
                rule: PlayerRule::feedback(law, player, lambda),
            });
        }
        for radius in [0.2 * scale, scale] {
            out.push(Perturbation {
                name: format!("{tag} = constant ray, radius {radius:.3}"),
                player,
                rule: PlayerRule::schedule(&constant_ray(&mut rng, cone, n, radius))?,
            });
        }
        for k in 0..2 {
            out.push(Perturbation {
                name: format!("{tag} = random schedule {k}"),
                player,
                rule: PlayerRule::schedule(&random_schedule(&mut rng, cone, n, 4, 0.5 * scale))?,
            });
        }
    }
    Ok(out)
}

/// Typical size of the initial state, used to scale perturbations.
fn initial_scale(problem: &Problem) -> f64 {
    use crate::model::{InitialLaw, Sampler};
    let s = match problem.initial {
        InitialLaw::Point(x) => x.abs(),
        InitialLaw::Sampler(Sampler::Normal { mean, std }) => mean.abs() + std,
        InitialLaw::Sampler(Sampler::Uniform { low, high }) => low.abs().max(high.abs()),
    };
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleArmReport {
    pub name: String,
    pub player: Player,
    /// `J(deviation) − J*`, paired.
    pub diff: CostEstimate,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleReport {
    pub reference: CostEstimate,
    pub arms: Vec<SaddleArmReport>,
    pub pass: bool,
}

impl SaddleReport {
    pub fn failures(&self) -> impl Iterator<Item = &SaddleArmReport> {
        self.arms.iter().filter(|a| !a.pass)
    }
}

/// Player 1 cannot lower and player 2 cannot raise the payoff: each
/// difference must have that sign or lie within `Z_LIMIT` standard errors.
pub fn sign_test(player: Player, diff: &CostEstimate, scale: f64) -> bool {
    let slack = Z_LIMIT * diff.stderr + 1e-12 * (1.0 + scale.abs());
    match player {
        Player::First => diff.mean >= -slack,
        Player::Second => diff.mean <= slack,
    }
}

/// Open-loop saddle inequalities on common random numbers: the deviating
/// player follows the perturbation while the other replays its saddle
/// control process from the reference arm.
pub fn verify_saddle(
    problem: &Problem,
    law: &FeedbackLaw,
    perturbations: &[Perturbation],
    opts: &SimOptions,
) -> Result<SaddleReport> {
    require_law_grid(problem, law)?;
    let (m1, m2) = (problem.coeffs.m1(), problem.coeffs.m2());
    let mut arms = vec![Arm::saddle(law)];
    for p in perturbations {
        let other = match p.player {
            Player::First => m2,
            Player::Second => m1,
        };
        arms.push(Arm::deviation(p.name.clone(), p.player, p.rule.clone(), other));
    }
    let results = simulate_arms(problem, &arms, opts)?;
    let reference = results[0].cost();
    let arms: Vec<SaddleArmReport> = perturbations
        .iter()
        .zip(&results[1..])
        .map(|(p, r)| {
            let diff = CostEstimate::paired(&r.costs, &results[0].costs);
            SaddleArmReport {
                name: p.name.clone(),
                player: p.player,
                pass: sign_test(p.player, &diff, reference.mean),
                diff,
            }
        })
        .collect();
    let pass = arms.iter().all(|a| a.pass);
    Ok(SaddleReport { reference, arms, pass })
}
