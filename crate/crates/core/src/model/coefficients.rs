use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite_mat, all_finite_vec, is_symmetric, Matrix, Vector};

/// Jump loadings attached to a single mark.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkCoefficients {
    pub e: f64,
    pub f1: Vector,
    pub f2: Vector,
}

impl MarkCoefficients {
    pub fn zeros(m1: usize, m2: usize) -> Self {
        Self {
            e: 0.0,
            f1: Vector::zeros(m1),
            f2: Vector::zeros(m2),
        }
    }
}

/// State and cost coefficients frozen over one grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCoefficients {
    pub a: f64,
    pub b1: Vector,
    pub b2: Vector,
    pub c: f64,
    pub d1: Vector,
    pub d2: Vector,
    pub marks: Vec<MarkCoefficients>,
    pub q: f64,
    pub s1: Vector,
    pub s2: Vector,
    pub r11: Matrix,
    pub r12: Matrix,
    pub r22: Matrix,
}

impl StepCoefficients {
    /// All-zero coefficients of the given shape.
    pub fn zeros(m1: usize, m2: usize, n_marks: usize) -> Self {
        Self {
            a: 0.0,
            b1: Vector::zeros(m1),
            b2: Vector::zeros(m2),
            c: 0.0,
            d1: Vector::zeros(m1),
            d2: Vector::zeros(m2),
            marks: vec![MarkCoefficients::zeros(m1, m2); n_marks],
            q: 0.0,
            s1: Vector::zeros(m1),
            s2: Vector::zeros(m2),
            r11: Matrix::zeros(m1, m1),
            r12: Matrix::zeros(m1, m2),
            r22: Matrix::zeros(m2, m2),
        }
    }

    pub fn m1(&self) -> usize {
        self.b1.len()
    }

    pub fn m2(&self) -> usize {
        self.b2.len()
    }

    /// Checks shapes, finiteness and symmetry of the weight blocks.
    pub fn validate(&self, m1: usize, m2: usize, n_marks: usize) -> Result<()> {
        let vecs: [(&str, &Vector, usize); 6] = [
            ("B1", &self.b1, m1),
            ("B2", &self.b2, m2),
            ("D1", &self.d1, m1),
            ("D2", &self.d2, m2),
            ("S1", &self.s1, m1),
            ("S2", &self.s2, m2),
        ];
        for (name, v, dim) in vecs {
            if v.len() != dim {
                return Err(Error::Validation(format!("{name} has length {} but expected {dim}", v.len())));
            }
            if !all_finite_vec(v) {
                return Err(Error::Validation(format!("{name} has a non-finite entry")));
            }
        }
        for (name, x) in [("A", self.a), ("C", self.c), ("Q", self.q)] {
            if !x.is_finite() {
                return Err(Error::Validation(format!("{name} is not finite")));
            }
        }
        let mats: [(&str, &Matrix, usize, usize); 3] = [
            ("R11", &self.r11, m1, m1),
            ("R12", &self.r12, m1, m2),
            ("R22", &self.r22, m2, m2),
        ];
        for (name, m, r, c) in mats {
            if m.shape() != (r, c) {
                return Err(Error::Validation(format!(
                    "{name} has shape {:?} but expected ({r}, {c})",
                    m.shape()
                )));
            }
            if !all_finite_mat(m) {
                return Err(Error::Validation(format!("{name} has a non-finite entry")));
            }
        }
        for (name, m) in [("R11", &self.r11), ("R22", &self.r22)] {
            if !is_symmetric(m, 1e-12) {
                return Err(Error::Validation(format!("{name} is not symmetric")));
            }
        }
        if self.marks.len() != n_marks {
            return Err(Error::Validation(format!(
                "{} mark loadings given for {n_marks} marks",
                self.marks.len()
            )));
        }
        for (j, mk) in self.marks.iter().enumerate() {
            if !mk.e.is_finite() {
                return Err(Error::Validation(format!("E of mark {j} is not finite")));
            }
            if mk.f1.len() != m1 || mk.f2.len() != m2 {
                return Err(Error::Validation(format!("F1/F2 of mark {j} have the wrong length")));
            }
            if !all_finite_vec(&mk.f1) || !all_finite_vec(&mk.f2) {
                return Err(Error::Validation(format!("F1/F2 of mark {j} have a non-finite entry")));
            }
        }
        Ok(())
    }
}

/// Lattice node identifier: time step, number of Brownian up-moves so far,
/// and the (capped) jump count per mark.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeKey {
    pub step: usize,
    pub level: usize,
    pub jumps: Vec<usize>,
}

/// Coefficients on a time grid, piecewise constant with the left-endpoint
/// convention, optionally overridden per lattice node.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    m1: usize,
    m2: usize,
    steps: Vec<StepCoefficients>,
    g: f64,
    adapted: BTreeMap<NodeKey, StepCoefficients>,
}

impl CoefficientSet {
    /// One coefficient record per grid step.
    pub fn new(steps: Vec<StepCoefficients>, g: f64) -> Result<Self> {
        let first = steps
            .first()
            .ok_or_else(|| Error::Validation("at least one step of coefficients is required".into()))?;
        let (m1, m2, n_marks) = (first.m1(), first.m2(), first.marks.len());
        if m1 == 0 || m2 == 0 {
            return Err(Error::Validation("control dimensions must be at least 1".into()));
        }
        for (i, s) in steps.iter().enumerate() {
            s.validate(m1, m2, n_marks).map_err(|e| e.at(format!("step {i}")))?;
        }
        if !g.is_finite() {
            return Err(Error::Validation("G is not finite".into()));
        }
        Ok(Self {
            m1,
            m2,
            steps,
            g,
            adapted: BTreeMap::new(),
        })
    }

    /// Time-constant coefficients repeated over `n_steps` steps.
    pub fn constant(step: StepCoefficients, n_steps: usize, g: f64) -> Result<Self> {
        Self::new(vec![step; n_steps.max(1)], g)
    }

    /// Replaces the coefficients seen at one lattice node.
    pub fn with_node_override(mut self, key: NodeKey, coeffs: StepCoefficients) -> Result<Self> {
        if key.step >= self.steps.len() || key.level > key.step || key.jumps.len() != self.n_marks() {
            return Err(Error::InvalidArgument(format!("node key {key:?} does not fit the grid")));
        }
        coeffs
            .validate(self.m1, self.m2, self.n_marks())
            .map_err(|e| e.at(format!("node {key:?}")))?;
        self.adapted.insert(key, coeffs);
        Ok(self)
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn n_marks(&self) -> usize {
        self.steps[0].marks.len()
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn steps(&self) -> &[StepCoefficients] {
        &self.steps
    }

    /// Coefficients in force on `[t_i, t_{i+1})`; the terminal node reuses
    /// the last step.
    pub fn at_step(&self, i: usize) -> &StepCoefficients {
        &self.steps[i.min(self.steps.len() - 1)]
    }

    pub fn at_node(&self, key: &NodeKey) -> &StepCoefficients {
        self.adapted.get(key).unwrap_or_else(|| self.at_step(key.step))
    }

    /// True when no node overrides are present.
    pub fn is_deterministic(&self) -> bool {
        self.adapted.is_empty()
    }

    pub fn node_overrides(&self) -> impl Iterator<Item = (&NodeKey, &StepCoefficients)> {
        self.adapted.iter()
    }

    /// Same coefficients resampled onto a grid with `n_steps` steps, taking
    /// the value in force at each new left endpoint.
    pub fn resample(&self, n_steps: usize) -> Result<Self> {
        if !self.is_deterministic() {
            return Err(Error::InvalidArgument("cannot resample lattice-adapted coefficients".into()));
        }
        let old = self.steps.len();
        let steps = (0..n_steps)
            .map(|i| {
                // index of the old step containing t_i = i/n_steps (in units of T)
                let idx = (i * old) / n_steps;
                self.steps[idx.min(old - 1)].clone()
            })
            .collect();
        Self::new(steps, self.g)
    }

    /// Applies `f` to every step record (and node override).
    pub fn map_steps(&self, mut f: impl FnMut(&mut StepCoefficients)) -> Result<Self> {
        let mut steps = self.steps.clone();
        steps.iter_mut().for_each(&mut f);
        let mut out = Self::new(steps, self.g)?;
        for (k, v) in &self.adapted {
            let mut v = v.clone();
            f(&mut v);
            out = out.with_node_override(k.clone(), v)?;
        }
        Ok(out)
    }

    pub fn with_g(&self, g: f64) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::Validation("G is not finite".into()));
        }
        let mut out = self.clone();
        out.g = g;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric_weights() {
        let mut s = StepCoefficients::zeros(2, 1, 0);
        s.r11 = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(CoefficientSet::constant(s, 3, 1.0).is_err());
    }

    #[test]
    fn rejects_non_finite_entries() {
        let mut s = StepCoefficients::zeros(1, 1, 1);
        s.marks[0].f1[0] = f64::NAN;
        assert!(CoefficientSet::constant(s.clone(), 2, 1.0).is_err());
        s.marks[0].f1[0] = 0.0;
        assert!(CoefficientSet::constant(s.clone(), 2, f64::INFINITY).is_err());
        assert!(CoefficientSet::constant(s, 2, 1.0).is_ok());
    }

    #[test]
    fn shape_mismatch_between_steps() {
        let a = StepCoefficients::zeros(1, 1, 0);
        let b = StepCoefficients::zeros(2, 1, 0);
        assert!(CoefficientSet::new(vec![a, b], 1.0).is_err());
    }

    #[test]
    fn terminal_node_reuses_last_step() {
        let mut a = StepCoefficients::zeros(1, 1, 0);
        let mut b = a.clone();
        a.q = 1.0;
        b.q = 2.0;
        let set = CoefficientSet::new(vec![a, b], 1.0).unwrap();
        assert_eq!(set.at_step(0).q, 1.0);
        assert_eq!(set.at_step(2).q, 2.0);
    }

    #[test]
    fn resample_keeps_left_endpoint_values() {
        let steps: Vec<_> = (0..2)
            .map(|i| {
                let mut s = StepCoefficients::zeros(1, 1, 0);
                s.q = i as f64;
                s
            })
            .collect();
        let set = CoefficientSet::new(steps, 1.0).unwrap().resample(4).unwrap();
        let qs: Vec<f64> = set.steps().iter().map(|s| s.q).collect();
        assert_eq!(qs, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn node_overrides() {
        let base = StepCoefficients::zeros(1, 1, 1);
        let set = CoefficientSet::constant(base.clone(), 2, 1.0).unwrap();
        let mut o = base.clone();
        o.q = 5.0;
        let key = NodeKey { step: 1, level: 1, jumps: vec![0] };
        let set = set.with_node_override(key.clone(), o).unwrap();
        assert!(!set.is_deterministic());
        assert_eq!(set.at_node(&key).q, 5.0);
        assert_eq!(set.at_node(&NodeKey { step: 1, level: 0, jumps: vec![0] }).q, 0.0);
        let bad = NodeKey { step: 1, level: 2, jumps: vec![0] };
        assert!(set.clone().with_node_override(bad, base).is_err());
    }
}
