use std::io::Write;
use std::path::PathBuf;

use clap::{Subcommand, ValueEnum};
use conelq::hamiltonian::{build_terms, saddle, Branch, SaddleOptions, Snapshot, Truncation};
use serde_json::{Map, Value};

use crate::artifact::to_value;
use crate::config::{self, opt_f64};
use crate::{CmdResult, Failure, Global};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    Positive,
    Negative,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum HamiltonianCommand {
    /// Saddle point of the branch Hamiltonian(s) at one snapshot, printed as JSON.
    Eval {
        /// JSON object with `p1`, `p2` and optionally `lambda1`, `lambda2`,
        /// `gamma1`, `gamma2` (one entry per mark).
        #[arg(long)]
        snapshot: PathBuf,
        /// Grid index whose coefficients are used.
        #[arg(long, default_value_t = 0)]
        t_index: usize,
        #[arg(long, value_enum, default_value_t = BranchArg::Positive)]
        branch: BranchArg,
        /// Ball radii `n,n_bar` restricting the two searches.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        truncation: Option<Vec<f64>>,
    },
}

fn read_snapshot(path: &PathBuf, n_marks: usize) -> CmdResult<Snapshot> {
    let doc = config::read_doc(path)?;
    let req = |key: &str| -> CmdResult<f64> {
        opt_f64(&doc, &format!("/{key}"))?.ok_or_else(|| Failure::Config(format!("snapshot is missing key `{key}`")))
    };
    let gamma = |key: &str| -> CmdResult<Vec<f64>> {
        Ok(config::opt_list(&doc, &format!("/{key}"))?.unwrap_or_else(|| vec![0.0; n_marks]))
    };
    let snap = Snapshot {
        p1: req("p1")?,
        p2: req("p2")?,
        lambda1: opt_f64(&doc, "/lambda1")?.unwrap_or(0.0),
        lambda2: opt_f64(&doc, "/lambda2")?.unwrap_or(0.0),
        gamma1: gamma("gamma1")?,
        gamma2: gamma("gamma2")?,
    };
    snap.validate(n_marks)?;
    Ok(snap)
}

pub fn run(global: &Global, cmd: &HamiltonianCommand) -> CmdResult<()> {
    let HamiltonianCommand::Eval {
        snapshot,
        t_index,
        branch,
        truncation,
    } = cmd;
    let loaded = config::load(global)?;
    let problem = &loaded.problem;
    let snap = read_snapshot(snapshot, problem.jumps.n_marks())?;
    let trunc = match truncation {
        Some(v) => Some(Truncation::new(v[0], v[1])?),
        None => None,
    };
    let terms = build_terms(*t_index, &problem.coeffs, &problem.jumps, &snap)?;
    let solve = |b: Branch| -> CmdResult<Value> {
        let r = saddle(b, &terms, &problem.cone1, &problem.cone2, &SaddleOptions::default(), trunc, None)?;
        to_value(&r)
    };
    let out = match branch {
        BranchArg::Positive => solve(Branch::Positive)?,
        BranchArg::Negative => solve(Branch::Negative)?,
        BranchArg::Both => {
            let mut m = Map::new();
            m.insert("positive".into(), solve(Branch::Positive)?);
            m.insert("negative".into(), solve(Branch::Negative)?);
            Value::Object(m)
        }
    };
    let text = serde_json::to_string_pretty(&out).expect("a JSON value always serialises");
    // a closed pipe is not an error of the evaluation
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}
