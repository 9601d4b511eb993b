//! Problem-file ingestion and the command-line overrides applied to it.

use std::path::Path;

use conelq::model::Problem;
use serde_json::Value;

use crate::artifact::config_hash;
use crate::{CmdResult, Failure, Global};

/// A parsed problem together with the document it came from.
pub struct Loaded {
    /// Effective document, overrides included.
    pub doc: Value,
    pub problem: Problem,
    pub hash: String,
}

pub fn read_doc(path: &Path) -> CmdResult<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("config {} is not valid JSON: {e}", path.display())))
}

pub fn load(global: &Global) -> CmdResult<Loaded> {
    let path = global
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config PATH is required".into()))?;
    let doc = read_doc(path)?;
    build(doc, global)
}

fn horizon(doc: &Value) -> CmdResult<f64> {
    doc.pointer("/grid/T")
        .and_then(Value::as_f64)
        .ok_or_else(|| Failure::Config("missing key `grid.T`".into()))
}

/// Steps implied by `--n-steps` or `--dt`, if either is given.
fn step_override(doc: &Value, global: &Global) -> CmdResult<Option<usize>> {
    if let Some(n) = global.n_steps {
        if n == 0 {
            return Err(Failure::Config("--n-steps must be positive".into()));
        }
        return Ok(Some(n));
    }
    let Some(dt) = global.dt else {
        return Ok(None);
    };
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Failure::Config(format!("--dt must be positive, got {dt}")));
    }
    steps_for_dt(horizon(doc)?, dt).map(Some)
}

pub fn steps_for_dt(t: f64, dt: f64) -> CmdResult<usize> {
    let n = (t / dt).round();
    if n < 1.0 || (n * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(Failure::Config(format!("step {dt} does not divide the horizon {t}")));
    }
    Ok(n as usize)
}

/// Applies the global overrides to `doc` and parses it.
pub fn build(mut doc: Value, global: &Global) -> CmdResult<Loaded> {
    if !doc.is_object() {
        return Err(Failure::Config("config must be a JSON object".into()));
    }
    if let Some(d) = global.delta_lower {
        doc["delta_lower"] = Value::from(d);
    }
    let steps = step_override(&doc, global)?;
    let mut problem = Problem::from_json(&doc)?;
    if let Some(n) = steps {
        if n != problem.grid.n_steps() {
            problem = problem.refined(n)?;
        }
        // recorded so the hash tells the runs apart
        doc["grid"]["n_steps_override"] = Value::from(n);
    }
    let hash = config_hash(&doc);
    Ok(Loaded { doc, problem, hash })
}

/// Optional non-negative integer at a JSON pointer.
pub fn opt_usize(doc: &Value, pointer: &str) -> CmdResult<Option<usize>> {
    match doc.pointer(pointer) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|x| Some(x as usize))
            .ok_or_else(|| Failure::Config(format!("`{}` must be a non-negative integer", dotted(pointer)))),
    }
}

/// Optional number at a JSON pointer.
pub fn opt_f64(doc: &Value, pointer: &str) -> CmdResult<Option<f64>> {
    match doc.pointer(pointer) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Failure::Config(format!("`{}` must be a number", dotted(pointer)))),
    }
}

/// Optional list of numbers at a JSON pointer.
pub fn opt_list(doc: &Value, pointer: &str) -> CmdResult<Option<Vec<f64>>> {
    match doc.pointer(pointer) {
        None => Ok(None),
        Some(Value::Array(xs)) => xs
            .iter()
            .map(Value::as_f64)
            .collect::<Option<Vec<_>>>()
            .map(Some)
            .ok_or_else(|| Failure::Config(format!("`{}` must be an array of numbers", dotted(pointer)))),
        Some(_) => Err(Failure::Config(format!("`{}` must be an array of numbers", dotted(pointer)))),
    }
}

pub fn dotted(pointer: &str) -> String {
    pointer.trim_start_matches('/').replace('/', ".")
}
