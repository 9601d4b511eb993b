use clap::Args;
use conelq::hamiltonian::Truncation;
use conelq::lattice::{build_lattice_with_cap, solve_bsde_on_lattice, LatticeOptions, DEFAULT_JUMP_CAP};
use conelq::model::Problem;
use conelq::riccati::{
    bounds_envelope, ladder_levels, monotone_ladder, solve_ode, solve_truncated, LadderReport, RiccatiOptions,
    RiccatiSolution,
};
use serde_json::{json, Value};

use crate::artifact::{num, print_table, to_value, Writer};
use crate::config::{self, opt_f64, opt_list, opt_usize};
use crate::{CmdResult, Failure, Global, Mode};

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum, default_value_t = Mode::Ode)]
    pub mode: Mode,
    /// Player-1 truncation radii of the ladder (default `ladder.first` or 1,2,4,8).
    #[arg(long, value_delimiter = ',')]
    pub levels_first: Option<Vec<f64>>,
    /// Player-2 truncation radii of the ladder (default `ladder.second` or 1,2,4,8).
    #[arg(long, value_delimiter = ',')]
    pub levels_second: Option<Vec<f64>>,
    /// Monotonicity tolerance of the ladder (default `ladder.tol` or 1e-8).
    #[arg(long)]
    pub ladder_tol: Option<f64>,
    /// Jump-count cap per mark of the lattice (default `lattice.jump_cap`).
    #[arg(long)]
    pub jump_cap: Option<usize>,
}

impl SolveArgs {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            levels_first: None,
            levels_second: None,
            ladder_tol: None,
            jump_cap: None,
        }
    }
}

/// Outcome of one solve in a form the commands can write or tabulate.
pub struct Solved {
    pub kind: &'static str,
    pub json: Value,
    pub csv: Vec<u8>,
    /// Root values of `(P₁, P₂)`.
    pub p0: [f64; 2],
    pub ode: Option<RiccatiSolution>,
    pub ladder: Option<LadderReport>,
}

/// `truncation.n` / `truncation.n_bar` from the document, when present.
pub fn truncation(doc: &Value) -> CmdResult<Option<Truncation>> {
    let n = opt_f64(doc, "/truncation/n")?;
    let n_bar = opt_f64(doc, "/truncation/n_bar")?;
    match (n, n_bar) {
        (None, None) => Ok(None),
        (Some(a), Some(b)) => Ok(Some(Truncation::new(a, b)?)),
        _ => Err(Failure::Config("`truncation` needs both `n` and `n_bar`".into())),
    }
}

fn ode_solved(sol: RiccatiSolution) -> CmdResult<Solved> {
    let mut csv = Vec::new();
    sol.write_csv(&mut csv)?;
    Ok(Solved {
        kind: "riccati-solution",
        json: to_value(&sol)?,
        csv,
        p0: [sol.p1[0], sol.p2[0]],
        ode: Some(sol),
        ladder: None,
    })
}

pub fn solve_problem(problem: &Problem, doc: &Value, args: &SolveArgs) -> CmdResult<Solved> {
    let opts = RiccatiOptions::default();
    match args.mode {
        Mode::Ode => match truncation(doc)? {
            Some(t) => ode_solved(solve_truncated(problem, t, &opts)?),
            None => ode_solved(solve_ode(problem, &opts)?),
        },
        Mode::Ladder => {
            let default = [1.0, 2.0, 4.0, 8.0];
            let first = match &args.levels_first {
                Some(v) => v.clone(),
                None => opt_list(doc, "/ladder/first")?.unwrap_or(default.to_vec()),
            };
            let second = match &args.levels_second {
                Some(v) => v.clone(),
                None => opt_list(doc, "/ladder/second")?.unwrap_or(default.to_vec()),
            };
            let tol = match args.ladder_tol {
                Some(t) => t,
                None => opt_f64(doc, "/ladder/tol")?.unwrap_or(1e-8),
            };
            let levels = ladder_levels(&first, &second)?;
            let (sol, report) = monotone_ladder(problem, &levels, tol, &opts)?;
            let mut s = ode_solved(sol)?;
            s.ladder = Some(report);
            Ok(s)
        }
        Mode::Lattice => {
            let cap = match args.jump_cap {
                Some(c) => c,
                None => opt_usize(doc, "/lattice/jump_cap")?.unwrap_or(DEFAULT_JUMP_CAP),
            };
            let lattice = build_lattice_with_cap(&problem.grid, &problem.jumps, cap)?;
            let sol = solve_bsde_on_lattice(problem, &lattice, &LatticeOptions::default())?;
            let json: Value = serde_json::from_str(&sol.to_json()?)
                .map_err(|e| Failure::Config(format!("cannot re-read lattice JSON: {e}")))?;
            let mut csv = Vec::new();
            sol.write_csv(&mut csv)?;
            Ok(Solved {
                kind: "lattice-solution",
                json,
                csv,
                p0: sol.root().p,
                ode: None,
                ladder: None,
            })
        }
    }
}

/// Assumption constants and flags, with the envelope check when the
/// constants allow one.
pub fn assumption_body(problem: &Problem, solved: &Solved) -> CmdResult<Value> {
    let report = problem.report()?;
    let mut body = json!({ "report": to_value(&report)? });
    match bounds_envelope(&report, &problem.grid) {
        Ok(env) => {
            if let Some(sol) = &solved.ode {
                let (e1, i1) = env.excursion(&sol.p1);
                let (e2, i2) = env.excursion(&sol.p2);
                body["envelope_excursion"] = json!({ "P1": e1, "P1_node": i1, "P2": e2, "P2_node": i2 });
            }
            body["envelope"] = to_value(&env)?;
        }
        Err(e) => body["envelope_unavailable"] = Value::from(e.to_string()),
    }
    Ok(body)
}

pub fn run(global: &Global, args: &SolveArgs) -> CmdResult<()> {
    let loaded = config::load(global)?;
    let solved = solve_problem(&loaded.problem, &loaded.doc, args)?;
    let assumptions = assumption_body(&loaded.problem, &solved)?;
    let mut w = Writer::new(&global.out, &loaded.hash)?;
    let stem = if solved.kind == "lattice-solution" { "lattice" } else { "solution" };
    if global.format.json() {
        w.json(&format!("{stem}.json"), solved.kind, solved.json.clone())?;
        w.json("assumptions.json", "assumption-report", assumptions.clone())?;
        if let Some(l) = &solved.ladder {
            w.json("ladder.json", "ladder-report", to_value(l)?)?;
        }
    }
    if global.format.csv() {
        w.csv(&format!("{stem}.csv"), &solved.csv)?;
        w.flat_csv("assumptions.csv", &assumptions)?;
        if let Some(l) = &solved.ladder {
            w.flat_csv("ladder.csv", &to_value(l)?)?;
        }
    }

    let mut rows = vec![
        ("mode".to_string(), format!("{:?}", args.mode).to_lowercase()),
        ("steps".into(), loaded.problem.grid.n_steps().to_string()),
        ("P1(0)".into(), num(solved.p0[0])),
        ("P2(0)".into(), num(solved.p0[1])),
    ];
    if let Some(flags) = assumptions.pointer("/report/flags") {
        let failed: Vec<&str> = flags
            .as_object()
            .map(|m| m.iter().filter(|(_, v)| v == &&Value::Bool(false)).map(|(k, _)| k.as_str()).collect())
            .unwrap_or_default();
        rows.push((
            "assumption flags".into(),
            if failed.is_empty() { "all hold".into() } else { format!("failing: {}", failed.join(", ")) },
        ));
    }
    if let Some(l) = &solved.ladder {
        rows.push(("ladder monotone".into(), format!("{} (worst {:.3e})", l.is_monotone(), l.worst_violation())));
    }
    rows.push(("config sha256".into(), w.hash().to_string()));
    for p in w.written() {
        rows.push(("wrote".into(), p.display().to_string()));
    }
    print_table("solve", &rows);
    Ok(())
}
