//! Problem files: a JSON document with `grid`, `jumps`, `coefficients`,
//! `cones` and `initial` sections.
//!
//! Coefficients are constants or per-step arrays, told apart by nesting
//! depth: a scalar entry is a number or an array of `n_steps` numbers, a
//! vector entry is an array of numbers or an array of `n_steps` such arrays,
//! and a matrix entry is an array of rows or an array of `n_steps` such
//! matrices. A bare number is accepted wherever the vector or matrix has a
//! single entry.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

use super::coefficients::{CoefficientSet, MarkCoefficients, StepCoefficients};
use super::cone::Cone;
use super::grid::TimeGrid;
use super::initial::{InitialLaw, Sampler};
use super::jumps::JumpMeasure;
use super::Problem;

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn get<'a>(obj: &'a Value, key: &str, ctx: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| {
        if ctx.is_empty() {
            cfg(format!("missing key `{key}`"))
        } else {
            cfg(format!("missing key `{ctx}.{key}`"))
        }
    })
}

fn number(v: &Value, ctx: &str) -> Result<f64> {
    let x = v.as_f64().ok_or_else(|| cfg(format!("`{ctx}` must be a number")))?;
    if !x.is_finite() {
        return Err(cfg(format!("`{ctx}` is not finite")));
    }
    Ok(x)
}

fn numbers(v: &Value, ctx: &str) -> Result<Vec<f64>> {
    match v {
        Value::Number(_) => Ok(vec![number(v, ctx)?]),
        Value::Array(xs) => xs.iter().enumerate().map(|(i, x)| number(x, &format!("{ctx}[{i}]"))).collect(),
        _ => Err(cfg(format!("`{ctx}` must be a number or an array of numbers"))),
    }
}

fn depth(v: &Value) -> usize {
    match v {
        Value::Array(xs) => 1 + xs.first().map(depth).unwrap_or(0),
        _ => 0,
    }
}

/// Expands a field to one value per step using its nesting depth.
fn per_step<T>(
    v: &Value,
    const_depth: usize,
    n_steps: usize,
    ctx: &str,
    parse: impl Fn(&Value, &str) -> Result<T>,
) -> Result<Vec<T>>
where
    T: Clone,
{
    let d = depth(v);
    if d <= const_depth {
        let x = parse(v, ctx)?;
        return Ok(vec![x; n_steps]);
    }
    if d == const_depth + 1 {
        let xs = v.as_array().expect("depth > 0 means array");
        if xs.len() != n_steps {
            return Err(cfg(format!(
                "`{ctx}` is given per step with {} entries but the grid has {n_steps} steps",
                xs.len()
            )));
        }
        return xs.iter().enumerate().map(|(i, x)| parse(x, &format!("{ctx}[{i}]"))).collect();
    }
    Err(cfg(format!("`{ctx}` is nested too deeply")))
}

fn parse_vector(dim: usize) -> impl Fn(&Value, &str) -> Result<Vector> {
    move |v, ctx| {
        let xs = numbers(v, ctx)?;
        if xs.len() != dim {
            return Err(cfg(format!("`{ctx}` has length {} but the control dimension is {dim}", xs.len())));
        }
        Ok(Vector::from_vec(xs))
    }
}

fn parse_matrix(rows: usize, cols: usize) -> impl Fn(&Value, &str) -> Result<Matrix> {
    move |v, ctx| {
        if let Value::Number(_) = v {
            if rows == 1 && cols == 1 {
                return Ok(Matrix::from_element(1, 1, number(v, ctx)?));
            }
        }
        let rs = v
            .as_array()
            .ok_or_else(|| cfg(format!("`{ctx}` must be a {rows}x{cols} array of rows")))?;
        if rs.len() != rows {
            return Err(cfg(format!("`{ctx}` has {} rows but expected {rows}", rs.len())));
        }
        let mut m = Matrix::zeros(rows, cols);
        for (i, r) in rs.iter().enumerate() {
            let xs = numbers(r, &format!("{ctx}[{i}]"))?;
            if xs.len() != cols {
                return Err(cfg(format!("`{ctx}[{i}]` has {} columns but expected {cols}", xs.len())));
            }
            for (j, x) in xs.into_iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        Ok(m)
    }
}

fn dim_of(v: &Value, ctx: &str) -> Result<usize> {
    match depth(v) {
        0 => Ok(1),
        1 => Ok(v.as_array().map(Vec::len).unwrap_or(0)),
        _ => {
            let first = &v.as_array().expect("array")[0];
            Ok(first.as_array().map(Vec::len).unwrap_or(1))
        }
    }
    .and_then(|d| if d == 0 { Err(cfg(format!("`{ctx}` is empty"))) } else { Ok(d) })
}

fn parse_cone(v: Option<&Value>, dim: usize, ctx: &str) -> Result<Cone> {
    let Some(v) = v else {
        return Ok(Cone::FullSpace(dim));
    };
    match v {
        Value::String(s) => match s.as_str() {
            "full" => Ok(Cone::FullSpace(dim)),
            "orthant" => Ok(Cone::NonnegativeOrthant(dim)),
            "zero" => Ok(Cone::zero(dim)),
            other => Err(cfg(format!(
                "`{ctx}` must be \"full\", \"orthant\", \"zero\" or {{\"generators\": [...]}}, got \"{other}\""
            ))),
        },
        Value::Object(_) => {
            let gens = get(v, "generators", ctx)?
                .as_array()
                .ok_or_else(|| cfg(format!("`{ctx}.generators` must be an array of vectors")))?;
            let mut m = Matrix::zeros(dim, gens.len());
            for (k, g) in gens.iter().enumerate() {
                let col = parse_vector(dim)(g, &format!("{ctx}.generators[{k}]"))?;
                m.set_column(k, &col);
            }
            Cone::finitely_generated(m).map_err(|e| cfg(format!("`{ctx}`: {e}")))
        }
        _ => Err(cfg(format!("`{ctx}` has an unrecognised form"))),
    }
}

fn parse_initial(v: Option<&Value>) -> Result<InitialLaw> {
    let Some(v) = v else {
        return Ok(InitialLaw::Point(1.0));
    };
    let law = if let Some(p) = v.get("point") {
        InitialLaw::Point(number(p, "initial.point")?)
    } else if let Some(s) = v.get("sampler") {
        if let Some(n) = s.get("normal") {
            InitialLaw::Sampler(Sampler::Normal {
                mean: number(get(n, "mean", "initial.sampler.normal")?, "initial.sampler.normal.mean")?,
                std: number(get(n, "std", "initial.sampler.normal")?, "initial.sampler.normal.std")?,
            })
        } else if let Some(u) = s.get("uniform") {
            InitialLaw::Sampler(Sampler::Uniform {
                low: number(get(u, "low", "initial.sampler.uniform")?, "initial.sampler.uniform.low")?,
                high: number(get(u, "high", "initial.sampler.uniform")?, "initial.sampler.uniform.high")?,
            })
        } else {
            return Err(cfg("`initial.sampler` must contain `normal` or `uniform`"));
        }
    } else {
        return Err(cfg("`initial` must contain `point` or `sampler`"));
    };
    law.validate().map_err(|e| cfg(e.to_string()))?;
    Ok(law)
}

impl Problem {
    /// Parses a problem document.
    ///
    /// `B1`, `B2`, `R11`, `R22` and `G` are required; the remaining
    /// coefficients default to zero, cones default to the full space and
    /// the initial law defaults to the point 1.
    pub fn from_json(doc: &Value) -> Result<Self> {
        let grid_v = get(doc, "grid", "")?;
        let horizon = number(get(grid_v, "T", "grid")?, "grid.T")?;
        let n_steps = get(grid_v, "n_steps", "grid")?
            .as_u64()
            .ok_or_else(|| cfg("`grid.n_steps` must be a positive integer"))? as usize;
        let grid = TimeGrid::new(horizon, n_steps).map_err(|e| cfg(e.to_string()))?;

        let co = get(doc, "coefficients", "")?;
        let b1_v = get(co, "B1", "coefficients")?;
        let b2_v = get(co, "B2", "coefficients")?;
        let g_v = get(co, "G", "coefficients")?;
        let m1 = dim_of(b1_v, "coefficients.B1")?;
        let m2 = dim_of(b2_v, "coefficients.B2")?;

        let marks_v: Vec<Value> = match doc.get("jumps") {
            None => Vec::new(),
            Some(j) => get(j, "marks", "jumps")?
                .as_array()
                .cloned()
                .ok_or_else(|| cfg("`jumps.marks` must be an array"))?,
        };
        let mut nus = Vec::with_capacity(marks_v.len());
        for (j, mk) in marks_v.iter().enumerate() {
            nus.push(number(get(mk, "nu", &format!("jumps.marks[{j}]"))?, &format!("jumps.marks[{j}].nu"))?);
        }
        let jumps = JumpMeasure::new(nus).map_err(|e| cfg(e.to_string()))?;

        let mut steps = vec![StepCoefficients::zeros(m1, m2, marks_v.len()); n_steps];
        let zero = Value::from(0.0);

        macro_rules! scalar_field {
            ($key:literal, $field:ident) => {
                let v = co.get($key).unwrap_or(&zero);
                let xs = per_step(v, 0, n_steps, concat!("coefficients.", $key), number)?;
                for (s, x) in steps.iter_mut().zip(xs) {
                    s.$field = x;
                }
            };
        }
        macro_rules! vector_field {
            ($key:literal, $field:ident, $dim:expr, $required:expr) => {
                let owned;
                let v = match co.get($key) {
                    Some(v) => v,
                    None if $required => return Err(cfg(concat!("missing key `coefficients.", $key, "`"))),
                    None => {
                        owned = Value::from(vec![0.0; $dim]);
                        &owned
                    }
                };
                let xs = per_step(v, 1, n_steps, concat!("coefficients.", $key), parse_vector($dim))?;
                for (s, x) in steps.iter_mut().zip(xs) {
                    s.$field = x;
                }
            };
        }
        macro_rules! matrix_field {
            ($key:literal, $field:ident, $r:expr, $c:expr, $required:expr) => {
                let owned;
                let v = match co.get($key) {
                    Some(v) => v,
                    None if $required => return Err(cfg(concat!("missing key `coefficients.", $key, "`"))),
                    None => {
                        owned = Value::from(vec![vec![0.0; $c]; $r]);
                        &owned
                    }
                };
                let xs = per_step(v, 2, n_steps, concat!("coefficients.", $key), parse_matrix($r, $c))?;
                for (s, x) in steps.iter_mut().zip(xs) {
                    s.$field = x;
                }
            };
        }

        scalar_field!("A", a);
        scalar_field!("C", c);
        scalar_field!("Q", q);
        vector_field!("B1", b1, m1, true);
        vector_field!("B2", b2, m2, true);
        vector_field!("D1", d1, m1, false);
        vector_field!("D2", d2, m2, false);
        vector_field!("S1", s1, m1, false);
        vector_field!("S2", s2, m2, false);
        matrix_field!("R11", r11, m1, m1, true);
        matrix_field!("R12", r12, m1, m2, false);
        matrix_field!("R22", r22, m2, m2, true);

        for (j, mk) in marks_v.iter().enumerate() {
            let ctx = format!("jumps.marks[{j}]");
            let e = per_step(mk.get("E").unwrap_or(&zero), 0, n_steps, &format!("{ctx}.E"), number)?;
            let f1_default = Value::from(vec![0.0; m1]);
            let f2_default = Value::from(vec![0.0; m2]);
            let f1 = per_step(mk.get("F1").unwrap_or(&f1_default), 1, n_steps, &format!("{ctx}.F1"), parse_vector(m1))?;
            let f2 = per_step(mk.get("F2").unwrap_or(&f2_default), 1, n_steps, &format!("{ctx}.F2"), parse_vector(m2))?;
            for (i, s) in steps.iter_mut().enumerate() {
                s.marks[j] = MarkCoefficients {
                    e: e[i],
                    f1: f1[i].clone(),
                    f2: f2[i].clone(),
                };
            }
        }

        let g = number(g_v, "coefficients.G")?;
        let coeffs = CoefficientSet::new(steps, g).map_err(|e| cfg(e.to_string()))?;

        let cones = doc.get("cones");
        let cone1 = parse_cone(cones.and_then(|c| c.get("pi1")), m1, "cones.pi1")?;
        let cone2 = parse_cone(cones.and_then(|c| c.get("pi2")), m2, "cones.pi2")?;
        let initial = parse_initial(doc.get("initial"))?;
        let delta_lower = match doc.get("delta_lower") {
            Some(v) => number(v, "delta_lower")?,
            None => super::assumptions::DEFAULT_DELTA_LOWER,
        };

        Problem::new(grid, jumps, coeffs, cone1, cone2, initial)
            .map(|p| p.with_delta_lower(delta_lower))
            .map_err(|e| cfg(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| cfg(format!("problem file is not valid JSON: {e}")))?;
        Self::from_json(&doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg(format!("cannot read problem file {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORACLE: &str = r#"{
        "grid": {"T": 1.0, "n_steps": 4},
        "coefficients": {"B1": [1.0], "B2": [0.0], "R11": [[1.0]], "R22": [[-1.0]], "G": 1.0},
        "cones": {"pi1": "full", "pi2": "full"},
        "initial": {"point": 1.0}
    }"#;

    #[test]
    fn parses_minimal_problem() {
        let p = Problem::from_json_str(ORACLE).unwrap();
        assert_eq!(p.grid.n_steps(), 4);
        assert_eq!(p.coeffs.m1(), 1);
        assert_eq!(p.coeffs.at_step(2).b1[0], 1.0);
        assert_eq!(p.coeffs.at_step(2).a, 0.0);
        assert!(p.jumps.is_empty());
        assert_eq!(p.initial, InitialLaw::Point(1.0));
    }

    #[test]
    fn missing_key_is_named() {
        let doc = ORACLE.replace(r#", "R22": [[-1.0]]"#, "");
        let err = Problem::from_json_str(&doc).unwrap_err();
        assert!(err.to_string().contains("coefficients.R22"), "{err}");
    }

    #[test]
    fn per_step_and_constant_forms() {
        let doc = r#"{
            "grid": {"T": 2.0, "n_steps": 3},
            "jumps": {"marks": [{"nu": 0.5, "E": [0.1, 0.2, 0.3], "F1": [0.0, 1.0]}]},
            "coefficients": {
                "A": [1.0, 2.0, 3.0], "B1": [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], "B2": 0.5,
                "R11": [[1.0, 0.0], [0.0, 2.0]], "R22": -3.0, "G": 0.5
            },
            "cones": {"pi1": {"generators": [[1.0, 1.0], [1.0, 0.0]]}, "pi2": "orthant"},
            "initial": {"sampler": {"normal": {"mean": 0.0, "std": 1.0}}}
        }"#;
        let p = Problem::from_json_str(doc).unwrap();
        assert_eq!(p.coeffs.m1(), 2);
        assert_eq!(p.coeffs.m2(), 1);
        assert_eq!(p.coeffs.at_step(1).a, 2.0);
        assert_eq!(p.coeffs.at_step(2).b1[1], 1.0);
        assert_eq!(p.coeffs.at_step(2).marks[0].e, 0.3);
        assert_eq!(p.coeffs.at_step(0).marks[0].f1[1], 1.0);
        assert_eq!(p.coeffs.at_step(0).r22[(0, 0)], -3.0);
        assert!(matches!(p.cone1, Cone::FinitelyGenerated { .. }));
        assert_eq!(p.cone2, Cone::NonnegativeOrthant(1));
    }

    #[test]
    fn wrong_lengths_are_reported() {
        let doc = ORACLE.replace(r#""B2": [0.0]"#, r#""B2": [0.0], "D1": [1.0, 2.0]"#);
        let err = Problem::from_json_str(&doc).unwrap_err();
        assert!(err.to_string().contains("coefficients.D1"), "{err}");
        let doc = ORACLE.replace(r#""G": 1.0"#, r#""G": 1.0, "Q": [1.0, 2.0]"#);
        let err = Problem::from_json_str(&doc).unwrap_err();
        assert!(err.to_string().contains("coefficients.Q"), "{err}");
    }
}
