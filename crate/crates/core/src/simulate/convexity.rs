use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::Problem;
use crate::simulate::cost::CostEstimate;
use crate::simulate::engine::{require_law_grid, simulate_arms, Arm, Player, PlayerRule, SimOptions};
use crate::simulate::feedback::FeedbackLaw;
use crate::simulate::verify::{sign_test, Z_LIMIT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub player: Player,
    pub lambda: f64,
    /// `J(λa + (1−λ)b)`.
    pub mixed: CostEstimate,
    pub at_a: CostEstimate,
    pub at_b: CostEstimate,
    /// Payoff from a zero initial state under the control difference
    /// `a − b` for the varying player and zero for the other.
    pub difference_cost: CostEstimate,
    /// Paired residual `J(mix) + λ(1−λ)J̃ − λJ(a) − (1−λ)J(b)`.
    pub residual: CostEstimate,
    /// `∫|a − b|² dt`.
    pub control_gap: f64,
    /// `±J̃ / ∫|a − b|²` (sign chosen so that uniform convexity for player 1
    /// and uniform concavity for player 2 both show as positive).
    pub margin: Option<f64>,
    pub pass: bool,
}

fn check_schedule(name: &str, s: &[Vector], n: usize, dim: usize) -> Result<()> {
    if s.len() != n || s.iter().any(|v| v.len() != dim) {
        return Err(Error::InvalidArgument(format!(
            "schedule {name} must have {n} steps of dimension {dim}"
        )));
    }
    Ok(())
}

/// Convexity identity for the varying `player` with open-loop schedules
/// `a`, `b` and the other player's schedule `other`, on common random
/// numbers.
pub fn verify_convexity_identity(
    problem: &Problem,
    player: Player,
    a: &[Vector],
    b: &[Vector],
    other: &[Vector],
    lambda: f64,
    opts: &SimOptions,
) -> Result<ConvexityReport> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let n = problem.grid.n_steps();
    let (m1, m2) = (problem.coeffs.m1(), problem.coeffs.m2());
    let (dim, other_dim) = match player {
        Player::First => (m1, m2),
        Player::Second => (m2, m1),
    };
    check_schedule("a", a, n, dim)?;
    check_schedule("b", b, n, dim)?;
    check_schedule("other", other, n, other_dim)?;

    let mix: Vec<Vector> = a.iter().zip(b).map(|(x, y)| x * lambda + y * (1.0 - lambda)).collect();
    let gap: Vec<Vector> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let fixed = PlayerRule::schedule(other)?;
    let arm = |name: &str, own: PlayerRule, fixed: PlayerRule| match player {
        Player::First => Arm::new(name, own, fixed),
        Player::Second => Arm::new(name, fixed, own),
    };
    let mut tilde = arm("difference", PlayerRule::schedule(&gap)?, PlayerRule::zero(other_dim));
    tilde.zero_initial = true;
    tilde.check_cones = false;
    let arms = [
        arm("mixed", PlayerRule::schedule(&mix)?, fixed.clone()),
        arm("a", PlayerRule::schedule(a)?, fixed.clone()),
        arm("b", PlayerRule::schedule(b)?, fixed),
        tilde,
    ];
    let r = simulate_arms(problem, &arms, opts)?;
    let w = lambda * (1.0 - lambda);
    let resid: Vec<f64> = (0..opts.n_paths)
        .map(|p| r[0].costs[p] + w * r[3].costs[p] - lambda * r[1].costs[p] - (1.0 - lambda) * r[2].costs[p])
        .collect();
    let residual = CostEstimate::from_samples(&resid);
    let difference_cost = r[3].cost();
    let dt = problem.grid.dt();
    let control_gap: f64 = gap.iter().map(|g| g.norm_squared() * dt).sum();
    let margin = (control_gap > 0.0).then(|| {
        let m = difference_cost.mean / control_gap;
        match player {
            Player::First => m,
            Player::Second => -m,
        }
    });
    let mixed = r[0].cost();
    let scale = mixed.mean.abs() + r[1].cost().mean.abs() + r[2].cost().mean.abs() + difference_cost.mean.abs();
    // The identity is exact path by path, so only rounding remains when
    // the standard error collapses.
    let pass = residual.mean.abs() <= Z_LIMIT * residual.stderr + 1e-10 * (1.0 + scale);
    Ok(ConvexityReport {
        player,
        lambda,
        mixed,
        at_a: r[1].cost(),
        at_b: r[2].cost(),
        difference_cost,
        residual,
        control_gap,
        margin,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub player: Player,
    pub h: f64,
    /// `[J(u* + h(v − u*)) − J(u*)] / h`, paired.
    pub quotient: CostEstimate,
    pub pass: bool,
}

/// One-sided difference quotient of the payoff at the saddle along
/// `v − u*` for `player`, where `v` is a cone-valued control rule and the
/// other player replays its saddle control process.
pub fn directional_stationarity(
    problem: &Problem,
    law: &FeedbackLaw,
    player: Player,
    direction: &PlayerRule,
    h: f64,
    opts: &SimOptions,
) -> Result<StationarityReport> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::InvalidArgument(format!("step h must lie in (0, 1], got {h}")));
    }
    require_law_grid(problem, law)?;
    let (m1, m2) = (problem.coeffs.m1(), problem.coeffs.m2());
    let other = match player {
        Player::First => m2,
        Player::Second => m1,
    };
    let frozen = PlayerRule::frozen(direction.dim());
    let moved = PlayerRule::linear(&[(1.0 - h, &frozen), (h, direction)])?;
    let arms = [Arm::saddle(law), Arm::deviation("moved", player, moved, other)];
    let r = simulate_arms(problem, &arms, opts)
        .map_err(|e| if matches!(e.root(), Error::InvalidArgument(_)) { e.at("convex combination left the cone") } else { e })?;
    let q: Vec<f64> = r[1].costs.iter().zip(&r[0].costs).map(|(x, y)| (x - y) / h).collect();
    let quotient = CostEstimate::from_samples(&q);
    let pass = sign_test(player, &quotient, r[0].cost().mean);
    Ok(StationarityReport { player, h, quotient, pass })
}
