use clap::Args;
use conelq::simulate::{extract_feedback, verify_value_formula, SimOptions};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::artifact::{config_hash, num, print_table, Writer};
use crate::config;
use crate::solve::{solve_problem, SolveArgs};
use crate::{CmdResult, Failure, Global, Mode};

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// `dt`, `n_steps`, `delta_lower`, or a dotted path to a number in the
    /// problem file (e.g. `coefficients.A`, `truncation.n`).
    #[arg(long)]
    pub parameter: String,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub values: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Mode::Ode)]
    pub mode: Mode,
    /// Known value of `P1(0)`; adds an `error` metric.
    #[arg(long)]
    pub reference: Option<f64>,
    /// Also runs the value-formula check per value.
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value_t = 10_000)]
    pub n_paths: usize,
    /// Runs the values in parallel instead of one after another.
    #[arg(long)]
    pub parallel: bool,
}

/// Keys that may be created by a sweep even when the file omits them.
const OPTIONAL_SCALARS: [&str; 6] = [
    "coefficients.A",
    "coefficients.C",
    "coefficients.Q",
    "truncation.n",
    "truncation.n_bar",
    "delta_lower",
];

fn pointer(dotted: &str) -> String {
    format!("/{}", dotted.replace('.', "/"))
}

/// Checks that `name` can be swept on `doc`.
fn check_parameter(doc: &Value, name: &str) -> CmdResult<()> {
    if matches!(name, "dt" | "n_steps") || OPTIONAL_SCALARS.contains(&name) {
        return Ok(());
    }
    match doc.pointer(&pointer(name)) {
        Some(v) if v.is_number() => Ok(()),
        Some(_) => Err(Failure::Config(format!("parameter `{name}` is not a scalar entry"))),
        None => Err(Failure::Config(format!("unknown parameter `{name}`"))),
    }
}

/// Document and global flags with `name` set to `value`.
fn apply(doc: &Value, global: &Global, name: &str, value: f64) -> CmdResult<(Value, Global)> {
    let mut doc = doc.clone();
    let mut g = global.clone();
    match name {
        "dt" => {
            g.n_steps = None;
            g.dt = Some(value);
        }
        "n_steps" => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Failure::Config(format!("n_steps must be a positive integer, got {value}")));
            }
            g.dt = None;
            g.n_steps = Some(value as usize);
        }
        "delta_lower" => g.delta_lower = Some(value),
        _ => {
            let mut parts = name.split('.').peekable();
            let mut node = &mut doc;
            while let Some(key) = parts.next() {
                let last = parts.peek().is_none();
                node = match node {
                    Value::Array(xs) => {
                        let i: usize = key
                            .parse()
                            .map_err(|_| Failure::Config(format!("`{key}` in `{name}` is not an array index")))?;
                        xs.get_mut(i).ok_or_else(|| Failure::Config(format!("index {i} out of range in `{name}`")))?
                    }
                    Value::Object(m) => m.entry(key.to_string()).or_insert_with(|| {
                        if last {
                            Value::Null
                        } else {
                            Value::Object(Default::default())
                        }
                    }),
                    _ => return Err(Failure::Config(format!("cannot descend into `{key}` of `{name}`"))),
                };
            }
            *node = Value::from(value);
        }
    }
    Ok((doc, g))
}

type Row = (f64, &'static str, f64);

fn run_value(doc: &Value, global: &Global, args: &SweepArgs, value: f64) -> CmdResult<Vec<Row>> {
    let (doc, g) = apply(doc, global, &args.parameter, value)?;
    let loaded = config::build(doc, &g)?;
    let p = &loaded.problem;
    let solved = solve_problem(p, &loaded.doc, &SolveArgs::with_mode(args.mode))?;
    let mut rows = vec![
        (value, "n_steps", p.grid.n_steps() as f64),
        (value, "dt", p.grid.dt()),
        (value, "P1_0", solved.p0[0]),
        (value, "P2_0", solved.p0[1]),
    ];
    if let Some(r) = args.reference {
        rows.push((value, "error", (solved.p0[0] - r).abs()));
    }
    if let Some(l) = &solved.ladder {
        rows.push((value, "ladder_monotone", f64::from(u8::from(l.is_monotone()))));
        rows.push((value, "ladder_worst_violation", l.worst_violation()));
    }
    if args.verify {
        let sol = solved
            .ode
            .as_ref()
            .ok_or_else(|| Failure::Config("--verify needs an ODE or ladder solve".into()))?;
        let law = extract_feedback(sol)?;
        let r = verify_value_formula(p, sol, &law, &SimOptions::new(args.n_paths, global.seed))?;
        rows.push((value, "value_diff", r.diff.mean));
        rows.push((value, "value_stderr", r.diff.stderr));
        rows.push((value, "value_z", r.z));
        rows.push((value, "value_pass", f64::from(u8::from(r.pass))));
    }
    Ok(rows)
}

pub fn run(global: &Global, args: &SweepArgs) -> CmdResult<()> {
    if args.values.is_empty() {
        return Err(Failure::Config("--values is empty; nothing to sweep".into()));
    }
    if args.verify && args.n_paths == 0 {
        return Err(Failure::Config("--n-paths must be positive".into()));
    }
    let path = global
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config PATH is required".into()))?;
    let doc = config::read_doc(path)?;
    check_parameter(&doc, &args.parameter)?;

    let results: Vec<CmdResult<Vec<Row>>> = if args.parallel {
        args.values.par_iter().map(|&v| run_value(&doc, global, args, v)).collect()
    } else {
        args.values.iter().map(|&v| run_value(&doc, global, args, v)).collect()
    };
    let mut rows = Vec::new();
    for (v, r) in args.values.iter().zip(results) {
        rows.extend(r.map_err(|f| match f {
            Failure::Config(m) => Failure::Config(format!("{} = {v}: {m}", args.parameter)),
            Failure::Solver(m) => Failure::Solver(format!("{} = {v}: {m}", args.parameter)),
            other => other,
        })?);
    }

    let spec = json!({ "config": doc, "parameter": args.parameter, "values": args.values, "mode": format!("{:?}", args.mode).to_lowercase() });
    let mut w = Writer::new(&global.out, &config_hash(&spec))?;
    let table: Vec<Value> = rows
        .iter()
        .map(|(v, m, r)| json!({ "parameter": args.parameter, "value": v, "metric": m, "result": r }))
        .collect();
    if global.format.json() {
        w.json("sweep.json", "sweep-table", json!({ "parameter": args.parameter, "rows": table }))?;
    }
    if global.format.csv() {
        let mut csv = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Failure::Config(format!("cannot format sweep.csv: {e}"));
        csv.write_record(["parameter", "value", "metric", "result"]).map_err(io)?;
        for (v, m, r) in &rows {
            csv.write_record([args.parameter.clone(), format!("{v:e}"), m.to_string(), format!("{r:.16e}")])
                .map_err(io)?;
        }
        let bytes = csv.into_inner().map_err(|e| Failure::Config(format!("cannot format sweep.csv: {e}")))?;
        w.csv("sweep.csv", &bytes)?;
    }

    let mut summary: Vec<(String, String)> = rows
        .iter()
        .filter(|(_, m, _)| matches!(*m, "P1_0" | "error" | "value_z"))
        .map(|(v, m, r)| (format!("{} = {:<10}  {m}", args.parameter, format!("{v:e}")), num(*r)))
        .collect();
    for p in w.written() {
        summary.push(("wrote".into(), p.display().to_string()));
    }
    print_table("sweep", &summary);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Format;

    fn global() -> Global {
        Global {
            config: None,
            seed: 1,
            out: "out".into(),
            format: Format::Both,
            delta_lower: None,
            n_steps: Some(10),
            dt: None,
        }
    }

    #[test]
    fn dotted_paths_reach_nested_numbers() {
        let doc = json!({"jumps": {"marks": [{"nu": 1.0}]}, "coefficients": {"G": 1.0}});
        let (d, _) = apply(&doc, &global(), "jumps.marks.0.nu", 2.5).unwrap();
        assert_eq!(d["jumps"]["marks"][0]["nu"], 2.5);
        let (d, _) = apply(&doc, &global(), "truncation.n", 4.0).unwrap();
        assert_eq!(d["truncation"]["n"], 4.0);
        assert!(apply(&doc, &global(), "jumps.marks.3.nu", 1.0).is_err());
        assert!(check_parameter(&doc, "jumps.marks.0.nu").is_ok());
        assert!(check_parameter(&doc, "jumps.marks").is_err());
        assert!(check_parameter(&doc, "grid.T").is_err());
    }

    #[test]
    fn grid_parameters_become_overrides() {
        let doc = json!({});
        let (_, g) = apply(&doc, &global(), "dt", 0.1).unwrap();
        assert_eq!((g.dt, g.n_steps), (Some(0.1), None));
        let (_, g) = apply(&doc, &global(), "n_steps", 20.0).unwrap();
        assert_eq!((g.dt, g.n_steps), (None, Some(20)));
        assert!(apply(&doc, &global(), "n_steps", 2.5).is_err());
    }
}
