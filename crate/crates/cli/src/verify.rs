use std::path::PathBuf;

use clap::{Args, ValueEnum};
use conelq::model::Problem;
use conelq::riccati::{RiccatiOptions, RiccatiSolution};
use conelq::simulate::{
    directional_stationarity, euler_bias, extract_feedback, perturbation_corpus, random_schedule, sign_test,
    verify_convexity_identity, verify_psi_identity, verify_saddle, verify_value_formula, CostEstimate, FeedbackLaw,
    Player, PlayerRule, SimOptions, PSI_MESH, Z_LIMIT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifact::{num, print_table, to_value, Writer};
use crate::config;
use crate::solve::{solve_problem, SolveArgs};
use crate::{CmdResult, Failure, Global, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Value,
    Saddle,
    Psi,
    Convexity,
    Stationarity,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Solution artifact written by `solve`; solved on the fly when omitted.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub n_paths: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Suite::Value, Suite::Saddle, Suite::Psi, Suite::Convexity, Suite::Stationarity])]
    pub suites: Vec<Suite>,
    /// Multiplies the positive-branch gains of both players (falsification runs).
    #[arg(long)]
    pub corrupt: Option<f64>,
    /// Random schedule triples per player in the convexity suite.
    #[arg(long, default_value_t = 3)]
    pub triples: usize,
    /// Random single-player deviations per point in the pointwise suite.
    #[arg(long, default_value_t = 4)]
    pub psi_perturbations: usize,
    /// Step of the directional difference quotient.
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    /// Adds a time-discretisation bias estimate to the value-formula budget.
    #[arg(long)]
    pub bias: bool,
    /// Writes the first K simulated saddle paths to paths.csv.
    #[arg(long, value_name = "K")]
    pub dump_paths: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    pass: bool,
    /// Set when a standard error was infinite (fewer than two paths); the
    /// check is then decided with zero statistical slack.
    stderr_infinite: bool,
    detail: Value,
}

/// Standard error replaced by zero when it is not finite.
fn exact(e: &CostEstimate) -> CostEstimate {
    CostEstimate {
        stderr: if e.stderr.is_finite() { e.stderr } else { 0.0 },
        ..*e
    }
}

fn load_solution(path: &PathBuf, problem: &Problem) -> CmdResult<RiccatiSolution> {
    let doc = config::read_doc(path)?;
    let body = match doc.get("kind").and_then(Value::as_str) {
        Some("riccati-solution") => doc["body"].clone(),
        Some(other) => {
            return Err(Failure::Config(format!("{} holds a `{other}` artifact, not a Riccati solution", path.display())))
        }
        None => doc,
    };
    let sol: RiccatiSolution = serde_json::from_value(body)
        .map_err(|e| Failure::Config(format!("{} is not a Riccati solution: {e}", path.display())))?;
    if sol.grid != problem.grid {
        return Err(Failure::Config(format!(
            "solution grid ({} steps on [0, {}]) does not match the problem grid ({} steps on [0, {}])",
            sol.grid.n_steps(),
            sol.grid.horizon(),
            problem.grid.n_steps(),
            problem.grid.horizon()
        )));
    }
    Ok(sol)
}

fn corrupt(law: &mut FeedbackLaw, s: f64) {
    for g in &mut law.plus {
        g.first *= s;
        g.second *= s;
    }
}

fn player_tag(p: Player) -> &'static str {
    match p {
        Player::First => "u1",
        Player::Second => "u2",
    }
}

/// Richardson estimate of the error in `E[P₁(0)(ξ⁺)² + P₂(0)(ξ⁻)²]` from a
/// re-solve on the doubled grid (fourth-order scheme).
fn target_error(problem: &Problem, doc: &Value, target: f64) -> CmdResult<Option<f64>> {
    let fine = problem.refined(2 * problem.grid.n_steps())?;
    let sol = solve_problem(&fine, doc, &SolveArgs::with_mode(Mode::Ode))?
        .ode
        .expect("ODE mode returns a Riccati solution");
    Ok(problem
        .initial
        .exact_split_moment(sol.p1[0], sol.p2[0])
        .map(|t| (target - t).abs() * 16.0 / 15.0))
}

fn value_check(
    problem: &Problem,
    doc: &Value,
    sol: &RiccatiSolution,
    law: &FeedbackLaw,
    args: &VerifyArgs,
    opts: &SimOptions,
) -> CmdResult<Check> {
    let mut r = verify_value_formula(problem, sol, law, opts)?;
    let rounding = 1e-12 * (1.0 + r.target.abs());
    let exact_zero = r.diff.mean.abs() <= rounding;
    // Without sampling noise only the time discretisation of the simulation
    // and of the Riccati solve separate the payoff from the target, so
    // estimates of both join the budget.
    let noiseless = !(r.diff.stderr > rounding && r.diff.stderr.is_finite());
    let even = problem.grid.n_steps() % 2 == 0;
    if even && (args.bias || (noiseless && !exact_zero)) {
        let b = euler_bias(problem, &RiccatiOptions::default(), opts)?;
        r = r.with_bias(b);
    }
    let solve_err = if noiseless && !exact_zero { target_error(problem, doc, r.target)? } else { None };
    let pass = if noiseless {
        let budget = r.bias.unwrap_or(0.0) + solve_err.unwrap_or(0.0);
        exact_zero || r.diff.mean.abs() <= Z_LIMIT * budget + rounding
    } else {
        r.pass
    };
    let mut detail = to_value(&r)?;
    detail["target_error"] = to_value(&solve_err)?;
    Ok(Check {
        name: "value-formula".into(),
        pass,
        stderr_infinite: !r.diff.stderr.is_finite(),
        detail,
    })
}

fn saddle_check(problem: &Problem, law: &FeedbackLaw, seed: u64, opts: &SimOptions) -> CmdResult<Check> {
    let corpus = perturbation_corpus(problem, law, seed)?;
    let r = verify_saddle(problem, law, &corpus, opts)?;
    let inf = r.arms.iter().any(|a| !a.diff.stderr.is_finite());
    let arms: Vec<Value> = r
        .arms
        .iter()
        .map(|a| {
            let pass = sign_test(a.player, &exact(&a.diff), r.reference.mean);
            json!({ "name": a.name, "player": a.player, "diff": a.diff, "pass": pass })
        })
        .collect();
    let pass = arms.iter().all(|a| a["pass"] == Value::Bool(true));
    Ok(Check {
        name: "saddle".into(),
        pass,
        stderr_infinite: inf,
        detail: json!({ "reference": r.reference, "arms": arms }),
    })
}

fn psi_check(problem: &Problem, sol: &RiccatiSolution, args: &VerifyArgs, seed: u64) -> CmdResult<Check> {
    let r = verify_psi_identity(sol, problem, &PSI_MESH, args.psi_perturbations, seed, 1e-9)?;
    Ok(Check {
        name: "psi".into(),
        pass: r.pass,
        stderr_infinite: false,
        detail: to_value(&r)?,
    })
}

fn convexity_checks(problem: &Problem, args: &VerifyArgs, seed: u64, opts: &SimOptions) -> CmdResult<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.grid.n_steps();
    let ucc = problem.report()?.flags.all();
    let mut out = Vec::new();
    for player in [Player::First, Player::Second] {
        let (own, other) = match player {
            Player::First => (&problem.cone1, &problem.cone2),
            Player::Second => (&problem.cone2, &problem.cone1),
        };
        for k in 0..args.triples {
            let a = random_schedule(&mut rng, own, n, 4, 1.0);
            let b = random_schedule(&mut rng, own, n, 4, 1.0);
            let fixed = random_schedule(&mut rng, other, n, 4, 1.0);
            let lambda = rng.random_range(0.1..0.9);
            let r = verify_convexity_identity(problem, player, &a, &b, &fixed, lambda, opts)?;
            let inf = !r.residual.stderr.is_finite();
            let scale = r.mixed.mean.abs() + r.at_a.mean.abs() + r.at_b.mean.abs() + r.difference_cost.mean.abs();
            let identity = r.residual.mean.abs() <= Z_LIMIT * exact(&r.residual).stderr + 1e-10 * (1.0 + scale);
            // the uniform margin is only claimed when the standing assumption holds
            let margin_ok = !ucc || r.margin.is_none_or(|m| m > 0.0);
            out.push(Check {
                name: format!("convexity {} #{k}", player_tag(player)),
                pass: identity && margin_ok,
                stderr_infinite: inf,
                detail: json!({ "report": to_value(&r)?, "margin_required": ucc }),
            });
        }
    }
    Ok(out)
}

fn stationarity_checks(problem: &Problem, law: &FeedbackLaw, args: &VerifyArgs, seed: u64, opts: &SimOptions) -> CmdResult<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.grid.n_steps();
    let mut out = Vec::new();
    for (player, cone) in [(Player::First, &problem.cone1), (Player::Second, &problem.cone2)] {
        let dir = PlayerRule::schedule(&random_schedule(&mut rng, cone, n, 4, 1.0))?;
        let r = directional_stationarity(problem, law, player, &dir, args.h, opts)?;
        let inf = !r.quotient.stderr.is_finite();
        let pass = sign_test(player, &exact(&r.quotient), 0.0);
        out.push(Check {
            name: format!("stationarity {}", player_tag(player)),
            pass,
            stderr_infinite: inf,
            detail: to_value(&r)?,
        });
    }
    Ok(out)
}

fn dump_paths(problem: &Problem, law: &FeedbackLaw, k: usize, opts: &SimOptions, w: &mut Writer) -> CmdResult<()> {
    let opts = SimOptions { n_paths: k.max(1), ..*opts }.recording(k.max(1));
    let r = conelq::simulate::simulate_paths(problem, law, &opts)?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Config(format!("cannot format paths.csv: {e}"));
    csv.write_record(["path", "step", "t", "x"]).map_err(io)?;
    for (p, rec) in r.paths.iter().enumerate() {
        for (i, x) in rec.x.iter().enumerate() {
            let t = problem.grid.time(i);
            csv.write_record([p.to_string(), i.to_string(), format!("{t:.16e}"), format!("{x:.16e}")])
                .map_err(io)?;
        }
    }
    let bytes = csv.into_inner().map_err(|e| Failure::Config(format!("cannot format paths.csv: {e}")))?;
    w.csv("paths.csv", &bytes)
}

pub fn run(global: &Global, args: &VerifyArgs) -> CmdResult<()> {
    if args.n_paths == 0 {
        return Err(Failure::Config("--n-paths must be positive".into()));
    }
    if !(args.h > 0.0 && args.h <= 1.0) {
        return Err(Failure::Config(format!("--h must lie in (0, 1], got {}", args.h)));
    }
    let loaded = config::load(global)?;
    let problem = &loaded.problem;
    let sol = match &args.solution {
        Some(path) => load_solution(path, problem)?,
        None => solve_problem(problem, &loaded.doc, &SolveArgs::with_mode(Mode::Ode))?
            .ode
            .expect("ODE mode returns a Riccati solution"),
    };
    let mut law = extract_feedback(&sol)?;
    if let Some(s) = args.corrupt {
        corrupt(&mut law, s);
    }
    let opts = SimOptions::new(args.n_paths, global.seed);
    // distinct substreams for the auxiliary draws of each suite
    let seed = |k: u64| global.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);

    let mut checks = Vec::new();
    for suite in &args.suites {
        match suite {
            Suite::Value => checks.push(value_check(problem, &loaded.doc, &sol, &law, args, &opts)?),
            Suite::Saddle => checks.push(saddle_check(problem, &law, seed(1), &opts)?),
            Suite::Psi => checks.push(psi_check(problem, &sol, args, seed(2))?),
            Suite::Convexity => checks.extend(convexity_checks(problem, args, seed(3), &opts)?),
            Suite::Stationarity => checks.extend(stationarity_checks(problem, &law, args, seed(4), &opts)?),
        }
    }
    let all_pass = checks.iter().all(|c| c.pass);
    let body = json!({
        "options": {
            "n_paths": args.n_paths,
            "seed": global.seed,
            "suites": args.suites,
            "corrupt": args.corrupt,
            "h": args.h,
            "triples": args.triples,
            "psi_perturbations": args.psi_perturbations,
        },
        "checks": to_value(&checks)?,
        "pass": all_pass,
    });

    let mut w = Writer::new(&global.out, &loaded.hash)?;
    if global.format.json() {
        w.json("verify.json", "verify-report", body.clone())?;
    }
    if global.format.csv() {
        w.flat_csv("verify.csv", &body)?;
    }
    if let Some(k) = args.dump_paths {
        dump_paths(problem, &law, k, &opts, &mut w)?;
    }

    let mut rows: Vec<(String, String)> = checks
        .iter()
        .map(|c| {
            let flag = if c.stderr_infinite { " (stderr infinite)" } else { "" };
            (c.name.clone(), format!("{}{flag}", if c.pass { "pass" } else { "FAIL" }))
        })
        .collect();
    if let Some(c) = checks.iter().find(|c| c.name == "value-formula") {
        if let (Some(cost), Some(target)) = (c.detail.pointer("/cost/mean"), c.detail.get("target")) {
            rows.push(("  payoff / target".into(), format!("{} / {}", num(cost.as_f64().unwrap_or(f64::NAN)), num(target.as_f64().unwrap_or(f64::NAN)))));
        }
    }
    rows.push(("config sha256".into(), w.hash().to_string()));
    for p in w.written() {
        rows.push(("wrote".into(), p.display().to_string()));
    }
    print_table("verify", &rows);
    if all_pass {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(Failure::Verify(format!("failed checks: {}", failed.join(", "))))
    }
}
