use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssumptionReport, TimeGrid};

/// Explicit exponential sub- and super-solutions on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsEnvelope {
    pub times: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub delta_lower: f64,
    pub c_lower1: f64,
    pub c_bar: f64,
    pub delta_bar: f64,
    pub k: f64,
}

impl BoundsEnvelope {
    /// Largest distance by which `values` leave `[lower − tol, upper + tol]`
    /// (0 when contained), with the offending node.
    pub fn excursion(&self, values: &[f64]) -> (f64, Option<usize>) {
        let mut worst = (0.0, None);
        for (i, &p) in values.iter().enumerate() {
            let out = (self.lower[i] - p).max(p - self.upper[i]);
            if out > worst.0 {
                worst = (out, Some(i));
            }
        }
        worst
    }
}

/// `P̲(t) = δ̲ e^{−c̲₁(T−t)}` and `P̄(t) = (c̄ + a) e^{2c̄(T−t)} − a` with
/// `a = (δ̄ + K²)/δ̄`.
pub fn bounds_envelope(report: &AssumptionReport, grid: &TimeGrid) -> Result<BoundsEnvelope> {
    let consts = [
        ("delta_lower", report.delta_lower),
        ("c_lower1", report.c_lower1),
        ("c_bar", report.c_bar),
        ("delta_bar", report.delta_bar),
        ("K", report.k),
    ];
    for (name, x) in consts {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {x}")));
        }
    }
    if (grid.horizon() - report.horizon).abs() > 1e-12 * report.horizon.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "report horizon {} does not match grid horizon {}",
            report.horizon,
            grid.horizon()
        )));
    }
    let a = (report.delta_bar + report.k * report.k) / report.delta_bar;
    let times = grid.times();
    let horizon = grid.horizon();
    let lower = times
        .iter()
        .map(|&t| report.delta_lower * (-report.c_lower1 * (horizon - t)).exp())
        .collect();
    let upper = times
        .iter()
        .map(|&t| {
            let x = 2.0 * report.c_bar * (horizon - t);
            report.c_bar * x.exp() + a * x.exp_m1()
        })
        .collect();
    Ok(BoundsEnvelope {
        times,
        lower,
        upper,
        delta_lower: report.delta_lower,
        c_lower1: report.c_lower1,
        c_bar: report.c_bar,
        delta_bar: report.delta_bar,
        k: report.k,
    })
}
