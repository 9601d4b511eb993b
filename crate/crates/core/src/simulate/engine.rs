use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{neg, pos, Vector};
use crate::model::{Cone, Problem, StepCoefficients};
use crate::simulate::cost::CostEstimate;
use crate::simulate::feedback::FeedbackLaw;

const CONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    First,
    Second,
}

impl Player {
    pub fn name(self) -> &'static str {
        match self {
            Player::First => "player 1",
            Player::Second => "player 2",
        }
    }
}

/// Control rule of one player, per step `i`:
/// `u = r · u_ref + Θ⁺ᵢ X⁺ + Θ⁻ᵢ X⁻ + oᵢ`, where `u_ref` is the same
/// player's control on the reference arm of the same path and `X` is the
/// arm's own pre-jump state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerRule {
    dim: usize,
    reference: f64,
    plus: Option<Vec<f64>>,
    minus: Option<Vec<f64>>,
    offset: Option<Vec<f64>>,
}

fn flatten(blocks: &[Vector], scale: f64) -> Vec<f64> {
    blocks.iter().flat_map(|v| v.iter().map(move |x| scale * x)).collect()
}

fn add_scaled(into: &mut Option<Vec<f64>>, from: &Option<Vec<f64>>, w: f64) -> Result<()> {
    if let Some(src) = from {
        match into {
            Some(dst) if dst.len() == src.len() => dst.iter_mut().zip(src).for_each(|(d, s)| *d += w * s),
            Some(_) => return Err(Error::InvalidArgument("combined rules have different lengths".into())),
            None => *into = Some(src.iter().map(|s| w * s).collect()),
        }
    }
    Ok(())
}

impl PlayerRule {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            reference: 0.0,
            plus: None,
            minus: None,
            offset: None,
        }
    }

    /// Replays the reference arm's control process.
    pub fn frozen(dim: usize) -> Self {
        Self {
            reference: 1.0,
            ..Self::zero(dim)
        }
    }

    /// `scale · (Θ⁺X⁺ + Θ⁻X⁻)` with the player's gains from `law`.
    pub fn feedback(law: &FeedbackLaw, player: Player, scale: f64) -> Self {
        let pick = |g: &crate::simulate::Gains| match player {
            Player::First => g.first.clone(),
            Player::Second => g.second.clone(),
        };
        let plus: Vec<Vector> = law.plus.iter().map(pick).collect();
        let minus: Vec<Vector> = law.minus.iter().map(pick).collect();
        Self {
            dim: plus[0].len(),
            reference: 0.0,
            plus: Some(flatten(&plus, scale)),
            minus: Some(flatten(&minus, scale)),
            offset: None,
        }
    }

    /// Deterministic open-loop control, one vector per grid step.
    pub fn schedule(values: &[Vector]) -> Result<Self> {
        let dim = values
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty control schedule".into()))?
            .len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidArgument("control schedule has mixed dimensions".into()));
        }
        Ok(Self {
            offset: Some(flatten(values, 1.0)),
            ..Self::zero(dim)
        })
    }

    /// `Σ wᵢ · ruleᵢ`, term by term.
    pub fn linear(parts: &[(f64, &PlayerRule)]) -> Result<Self> {
        let dim = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty combination".into()))?
            .1
            .dim;
        let mut out = Self::zero(dim);
        for &(w, r) in parts {
            if r.dim != dim {
                return Err(Error::InvalidArgument("combined rules have different dimensions".into()));
            }
            out.reference += w * r.reference;
            add_scaled(&mut out.plus, &r.plus, w)?;
            add_scaled(&mut out.minus, &r.minus, w)?;
            add_scaled(&mut out.offset, &r.offset, w)?;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn uses_reference(&self) -> bool {
        self.reference != 0.0
    }

    fn check_lengths(&self, n_steps: usize) -> Result<()> {
        for (name, block) in [("gain", &self.plus), ("gain", &self.minus), ("schedule", &self.offset)] {
            if let Some(b) = block {
                if b.len() != n_steps * self.dim {
                    return Err(Error::InvalidArgument(format!(
                        "{name} covers {} steps but the grid has {n_steps}",
                        b.len() / self.dim.max(1)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every block lies in the cone and the reference weight is
    /// nonnegative, so every control the rule produces is cone-valued.
    fn check_cone(&self, cone: &Cone) -> Result<()> {
        if self.reference < 0.0 {
            return Err(Error::InvalidArgument(format!("negative reference weight {}", self.reference)));
        }
        for (name, block) in [("X+ gain", &self.plus), ("X- gain", &self.minus), ("schedule", &self.offset)] {
            let Some(b) = block else { continue };
            for (i, chunk) in b.chunks(self.dim.max(1)).enumerate() {
                let v = Vector::from_column_slice(chunk);
                let tol = CONE_TOL * (1.0 + v.norm());
                if !cone.contains(&v, tol)? {
                    return Err(Error::InvalidArgument(format!("{name} at step {i} leaves the cone")));
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, step: usize, x: f64, reference: &[f64], out: &mut [f64]) {
        let base = step * self.dim;
        let (xp, xm) = (pos(x), neg(x));
        for (c, o) in out.iter_mut().enumerate() {
            let mut u = if self.reference != 0.0 { self.reference * reference[c] } else { 0.0 };
            if let Some(p) = &self.plus {
                u += p[base + c] * xp;
            }
            if let Some(m) = &self.minus {
                u += m[base + c] * xm;
            }
            if let Some(off) = &self.offset {
                u += off[base + c];
            }
            *o = u;
        }
    }
}

/// One comparison arm. Arm 0 of a run is the reference and must not use
/// reference weights itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub name: String,
    pub first: PlayerRule,
    pub second: PlayerRule,
    /// Start from `X(0) = 0` instead of the sampled initial state.
    pub zero_initial: bool,
    pub check_cones: bool,
}

impl Arm {
    pub fn new(name: impl Into<String>, first: PlayerRule, second: PlayerRule) -> Self {
        Self {
            name: name.into(),
            first,
            second,
            zero_initial: false,
            check_cones: true,
        }
    }

    /// Both players on the feedback law.
    pub fn saddle(law: &FeedbackLaw) -> Self {
        Self::new(
            "saddle",
            PlayerRule::feedback(law, Player::First, 1.0),
            PlayerRule::feedback(law, Player::Second, 1.0),
        )
    }

    /// `player` deviates to `rule`; the other player replays the reference.
    pub fn deviation(name: impl Into<String>, player: Player, rule: PlayerRule, other_dim: usize) -> Self {
        let frozen = PlayerRule::frozen(other_dim);
        match player {
            Player::First => Self::new(name, rule, frozen),
            Player::Second => Self::new(name, frozen, rule),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub n_paths: usize,
    pub seed: u64,
    /// Number of leading paths whose trajectories are kept.
    pub record: usize,
    /// Noise is drawn on `coarsen` equal sub-steps of every grid step and
    /// aggregated, so a run on a grid of `n` steps with `coarsen = 2`
    /// sees the same noise as a run on `2n` steps with `coarsen = 1`.
    pub coarsen: usize,
}

impl SimOptions {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            record: 0,
            coarsen: 1,
        }
    }

    pub fn recording(mut self, record: usize) -> Self {
        self.record = record;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub step: usize,
    pub mark: usize,
}

/// Trajectory of one path: `x` on the grid nodes, controls per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub x: Vec<f64>,
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
    pub jumps: Vec<JumpEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub name: String,
    pub n_paths: usize,
    pub seed: u64,
    /// Initial state of every path.
    pub initial: Vec<f64>,
    /// Left-endpoint payoff of every path.
    pub costs: Vec<f64>,
    pub terminal: Vec<f64>,
    pub paths: Vec<PathRecord>,
    /// Largest cone violation of a simulated control, measured directly
    /// for orthant cones (other cones are certified by the rule check).
    pub max_cone_violation: f64,
}

impl SimulationResult {
    pub fn cost(&self) -> CostEstimate {
        CostEstimate::from_samples(&self.costs)
    }

    pub fn terminal_mean(&self) -> CostEstimate {
        CostEstimate::from_samples(&self.terminal)
    }
}

/// Step coefficients laid out flat for the inner loop.
struct FlatStep {
    a: f64,
    c: f64,
    q: f64,
    b1: Vec<f64>,
    b2: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    r11: Vec<f64>,
    r12: Vec<f64>,
    r22: Vec<f64>,
    e: Vec<f64>,
    f1: Vec<Vec<f64>>,
    f2: Vec<Vec<f64>>,
}

impl FlatStep {
    fn new(s: &StepCoefficients) -> Self {
        let row_major = |m: &crate::linalg::Matrix| m.transpose().as_slice().to_vec();
        Self {
            a: s.a,
            c: s.c,
            q: s.q,
            b1: s.b1.as_slice().to_vec(),
            b2: s.b2.as_slice().to_vec(),
            d1: s.d1.as_slice().to_vec(),
            d2: s.d2.as_slice().to_vec(),
            s1: s.s1.as_slice().to_vec(),
            s2: s.s2.as_slice().to_vec(),
            r11: row_major(&s.r11),
            r12: row_major(&s.r12),
            r22: row_major(&s.r22),
            e: s.marks.iter().map(|m| m.e).collect(),
            f1: s.marks.iter().map(|m| m.f1.as_slice().to_vec()).collect(),
            f2: s.marks.iter().map(|m| m.f2.as_slice().to_vec()).collect(),
        }
    }

    /// Running payoff density at `(x, u1, u2)`.
    fn running(&self, x: f64, u1: &[f64], u2: &[f64]) -> f64 {
        self.q * x * x
            + 2.0 * x * (dot(&self.s1, u1) + dot(&self.s2, u2))
            + quad(&self.r11, u1, u1)
            + 2.0 * quad(&self.r12, u1, u2)
            + quad(&self.r22, u2, u2)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `aᵀ M b` with `M` row-major of shape `a.len() × b.len()`.
#[inline]
fn quad(m: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let cols = b.len();
    a.iter().enumerate().map(|(i, ai)| ai * dot(&m[i * cols..(i + 1) * cols], b)).sum()
}

struct PathOutcome {
    xi: f64,
    cost: f64,
    terminal: f64,
    violation: f64,
    record: Option<PathRecord>,
}

fn violation(cone: &Cone, u: &[f64]) -> f64 {
    match cone {
        Cone::NonnegativeOrthant(_) => u.iter().fold(0.0f64, |w, &x| w.max(-x)),
        _ => 0.0,
    }
}

struct Engine<'a> {
    problem: &'a Problem,
    arms: &'a [Arm],
    steps: Vec<FlatStep>,
    nus: Vec<f64>,
    opts: SimOptions,
}

impl Engine<'_> {
    fn run_path(&self, path: usize) -> Result<Vec<PathOutcome>> {
        let grid = &self.problem.grid;
        let n = grid.n_steps();
        let dt = grid.dt();
        let sub = self.opts.coarsen;
        let sub_dt = dt / sub as f64;
        let sub_sd = sub_dt.sqrt();
        let (m1, m2) = (self.problem.coeffs.m1(), self.problem.coeffs.m2());
        let n_arms = self.arms.len();
        let n_marks = self.nus.len();
        let record = path < self.opts.record;

        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        rng.set_stream(path as u64);
        let xi = self.problem.initial.sample(&mut rng);

        let mut x: Vec<f64> = self.arms.iter().map(|a| if a.zero_initial { 0.0 } else { xi }).collect();
        let mut cost = vec![0.0; n_arms];
        let mut worst = vec![0.0f64; n_arms];
        let mut u1 = vec![vec![0.0; m1]; n_arms];
        let mut u2 = vec![vec![0.0; m2]; n_arms];
        let mut counts = vec![0usize; n_marks];
        let mut records: Vec<PathRecord> = if record {
            x.iter()
                .map(|&x0| PathRecord {
                    x: {
                        let mut v = Vec::with_capacity(n + 1);
                        v.push(x0);
                        v
                    },
                    u1: Vec::with_capacity(n),
                    u2: Vec::with_capacity(n),
                    jumps: Vec::new(),
                })
                .collect()
        } else {
            Vec::new()
        };

        for i in 0..n {
            let mut dw = 0.0;
            counts.iter_mut().for_each(|c| *c = 0);
            for _ in 0..sub {
                dw += sub_sd * rng.sample::<f64, _>(StandardNormal);
                for (j, &nu) in self.nus.iter().enumerate() {
                    if nu > 0.0 {
                        let mut t = rng.sample::<f64, _>(Exp1) / nu;
                        while t <= sub_dt {
                            counts[j] += 1;
                            t += rng.sample::<f64, _>(Exp1) / nu;
                        }
                    }
                }
            }
            let s = &self.steps[i.min(self.steps.len() - 1)];
            for k in 0..n_arms {
                let arm = &self.arms[k];
                let (head, tail) = u1.split_at_mut(k);
                arm.first.eval(i, x[k], head.first().map_or(&[][..], |r| r.as_slice()), &mut tail[0]);
                let (head, tail) = u2.split_at_mut(k);
                arm.second.eval(i, x[k], head.first().map_or(&[][..], |r| r.as_slice()), &mut tail[0]);
                let (a1, a2) = (&u1[k], &u2[k]);
                if arm.check_cones {
                    worst[k] = worst[k].max(violation(&self.problem.cone1, a1)).max(violation(&self.problem.cone2, a2));
                }
                let xk = x[k];
                cost[k] += s.running(xk, a1, a2) * dt;
                let mut drift = s.a * xk + dot(&s.b1, a1) + dot(&s.b2, a2);
                let mut jump = 0.0;
                for j in 0..n_marks {
                    let size = s.e[j] * xk + dot(&s.f1[j], a1) + dot(&s.f2[j], a2);
                    drift -= self.nus[j] * size;
                    jump += counts[j] as f64 * size;
                }
                let diffusion = s.c * xk + dot(&s.d1, a1) + dot(&s.d2, a2);
                let next = xk + drift * dt + diffusion * dw + jump;
                if !next.is_finite() {
                    return Err(Error::Numeric(format!(
                        "path {path}, arm {}: state became non-finite at step {i}",
                        arm.name
                    )));
                }
                x[k] = next;
                if record {
                    let r = &mut records[k];
                    r.x.push(next);
                    r.u1.push(a1.clone());
                    r.u2.push(a2.clone());
                    for (j, &c) in counts.iter().enumerate() {
                        r.jumps.extend((0..c).map(|_| JumpEvent { step: i, mark: j }));
                    }
                }
            }
        }
        let g = self.problem.coeffs.g();
        let mut records = records.into_iter();
        Ok((0..n_arms)
            .map(|k| {
                let terminal = g * x[k] * x[k];
                PathOutcome {
                    xi: if self.arms[k].zero_initial { 0.0 } else { xi },
                    cost: cost[k] + terminal,
                    terminal: x[k],
                    violation: worst[k],
                    record: records.next(),
                }
            })
            .collect())
    }
}

/// Simulates all arms on common random numbers: every path draws its
/// initial state, Brownian increments and jump clocks once, from its own
/// substream of `seed`, and drives every arm with them.
pub fn simulate_arms(problem: &Problem, arms: &[Arm], opts: &SimOptions) -> Result<Vec<SimulationResult>> {
    if opts.n_paths == 0 {
        return Err(Error::InvalidArgument("at least one path is required".into()));
    }
    if opts.coarsen == 0 {
        return Err(Error::InvalidArgument("coarsening factor must be at least 1".into()));
    }
    if arms.is_empty() {
        return Err(Error::InvalidArgument("no arms to simulate".into()));
    }
    if !problem.coeffs.is_deterministic() {
        return Err(Error::InvalidArgument(
            "path simulation needs step coefficients without node overrides".into(),
        ));
    }
    problem.initial.validate()?;
    let n = problem.grid.n_steps();
    let (m1, m2) = (problem.coeffs.m1(), problem.coeffs.m2());
    for (k, arm) in arms.iter().enumerate() {
        let ctx = |e: Error| e.at(format!("arm {}", arm.name));
        if arm.first.dim != m1 || arm.second.dim != m2 {
            return Err(ctx(Error::InvalidArgument(format!(
                "control dimensions ({}, {}) do not match the problem ({m1}, {m2})",
                arm.first.dim, arm.second.dim
            ))));
        }
        if k == 0 && (arm.first.uses_reference() || arm.second.uses_reference()) {
            return Err(ctx(Error::InvalidArgument("the reference arm cannot replay itself".into())));
        }
        arm.first.check_lengths(n).map_err(ctx)?;
        arm.second.check_lengths(n).map_err(ctx)?;
        if arm.check_cones {
            arm.first.check_cone(&problem.cone1).map_err(|e| ctx(e.at("player 1")))?;
            arm.second.check_cone(&problem.cone2).map_err(|e| ctx(e.at("player 2")))?;
        }
    }
    let engine = Engine {
        problem,
        arms,
        steps: problem.coeffs.steps().iter().map(FlatStep::new).collect(),
        nus: problem.jumps.intensities().to_vec(),
        opts: *opts,
    };
    let outcomes: Vec<Vec<PathOutcome>> = (0..opts.n_paths)
        .into_par_iter()
        .map(|p| engine.run_path(p))
        .collect::<Result<_>>()?;

    let mut results: Vec<SimulationResult> = arms
        .iter()
        .map(|a| SimulationResult {
            name: a.name.clone(),
            n_paths: opts.n_paths,
            seed: opts.seed,
            initial: Vec::with_capacity(opts.n_paths),
            costs: Vec::with_capacity(opts.n_paths),
            terminal: Vec::with_capacity(opts.n_paths),
            paths: Vec::new(),
            max_cone_violation: 0.0,
        })
        .collect();
    for path in outcomes {
        for (res, out) in results.iter_mut().zip(path) {
            res.initial.push(out.xi);
            res.costs.push(out.cost);
            res.terminal.push(out.terminal);
            res.max_cone_violation = res.max_cone_violation.max(out.violation);
            if let Some(r) = out.record {
                res.paths.push(r);
            }
        }
    }
    Ok(results)
}

fn check_grid(problem: &Problem, law: &FeedbackLaw) -> Result<()> {
    if law.grid != problem.grid {
        return Err(Error::InvalidArgument(format!(
            "feedback law has {} steps on [0, {}] but the problem grid has {} steps on [0, {}]",
            law.grid.n_steps(),
            law.grid.horizon(),
            problem.grid.n_steps(),
            problem.grid.horizon()
        )));
    }
    Ok(())
}

/// Closed-loop simulation under `u = Θ⁺X⁺ + Θ⁻X⁻`.
pub fn simulate_paths(problem: &Problem, law: &FeedbackLaw, opts: &SimOptions) -> Result<SimulationResult> {
    check_grid(problem, law)?;
    let mut out = simulate_arms(problem, &[Arm::saddle(law)], opts)?;
    Ok(out.remove(0))
}

/// Simulation under explicit per-step control schedules.
pub fn simulate_schedule(
    problem: &Problem,
    first: &[Vector],
    second: &[Vector],
    opts: &SimOptions,
) -> Result<SimulationResult> {
    let n = problem.grid.n_steps();
    if first.len() != n || second.len() != n {
        return Err(Error::InvalidArgument(format!(
            "schedules have {} and {} steps but the grid has {n}",
            first.len(),
            second.len()
        )));
    }
    let arm = Arm::new("schedule", PlayerRule::schedule(first)?, PlayerRule::schedule(second)?);
    let mut out = simulate_arms(problem, &[arm], opts)?;
    Ok(out.remove(0))
}

pub(crate) fn require_law_grid(problem: &Problem, law: &FeedbackLaw) -> Result<()> {
    check_grid(problem, law)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_is_row_major() {
        // M = [[1, 2], [3, 4]]
        let m = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quad(&m, &[1.0, 0.0], &[0.0, 1.0]), 2.0);
        assert_eq!(quad(&m, &[0.0, 1.0], &[1.0, 0.0]), 3.0);
    }

    #[test]
    fn linear_combination_of_rules() {
        let a = PlayerRule::schedule(&[Vector::from_vec(vec![1.0]), Vector::from_vec(vec![2.0])]).unwrap();
        let f = PlayerRule::frozen(1);
        let mix = PlayerRule::linear(&[(0.25, &a), (0.75, &f)]).unwrap();
        let mut out = [0.0];
        mix.eval(1, 5.0, &[4.0], &mut out);
        assert_eq!(out[0], 0.25 * 2.0 + 0.75 * 4.0);
    }
}
