//! Backward induction for the coupled Riccati pair with random coefficients
//! on a recombining Brownian/jump lattice.

mod tree;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::hamiltonian::{saddle, Branch, HamiltonianTerms, SaddleOptions, SaddleResult, Snapshot};
use crate::model::{NodeKey, Problem};
use crate::riccati::driver;

pub use tree::{build_lattice, build_lattice_with_cap, Lattice, Move, DEFAULT_JUMP_CAP, MAX_JUMP_PROBABILITY};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatticeOptions {
    pub saddle: SaddleOptions,
}

/// Unknowns at one lattice node. `driver` is the Riccati driver used to
/// step from the child expectation to this node (zero at terminal nodes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeValue {
    pub p: [f64; 2],
    pub lambda: [f64; 2],
    pub gamma: [Vec<f64>; 2],
    pub driver: [f64; 2],
    pub saddles: Option<[SaddleResult; 2]>,
}

impl NodeValue {
    fn terminal(g: f64, n_marks: usize) -> Self {
        Self {
            p: [g, g],
            lambda: [0.0; 2],
            gamma: [vec![0.0; n_marks], vec![0.0; n_marks]],
            driver: [0.0; 2],
            saddles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSolution {
    lattice: Lattice,
    layers: Vec<Vec<NodeValue>>,
}

/// Conditional moments of the child layer seen from one node.
struct ChildMoments {
    mean: [f64; 2],
    lambda: [f64; 2],
    gamma: [Vec<f64>; 2],
}

fn child_moments(lattice: &Lattice, next: &[NodeValue], step: usize, id: usize) -> ChildMoments {
    let dt = lattice.grid().dt();
    let n_marks = lattice.n_marks();
    let mut mean = [0.0; 2];
    let mut cov = [0.0; 2];
    // Brownian-averaged child value per jump branch (index 0: no jump).
    let mut by_branch = [vec![0.0; n_marks + 1], vec![0.0; n_marks + 1]];
    // Sums are centred at one child so that equal children give exactly
    // that value and zero martingale parts.
    let reference = next[lattice.child(step, id, &lattice.moves()[0])].p;
    for mv in lattice.moves() {
        let child = &next[lattice.child(step, id, mv)];
        let slot = mv.mark.map_or(0, |j| j + 1);
        for k in 0..2 {
            let d = child.p[k] - reference[k];
            mean[k] += mv.prob * d;
            cov[k] += mv.prob * d * mv.dw;
            by_branch[k][slot] += 0.5 * d;
        }
    }
    let gamma = by_branch.map(|b| b[1..].iter().map(|x| x - b[0]).collect());
    ChildMoments {
        mean: [reference[0] + mean[0], reference[1] + mean[1]],
        lambda: cov.map(|c| c / dt),
        gamma,
    }
}

/// Explicit backward scheme: at every node the driver is evaluated at the
/// conditional mean of the children and the extracted `(Λ, Γ)`.
pub fn solve_bsde_on_lattice(problem: &Problem, lattice: &Lattice, opts: &LatticeOptions) -> Result<LatticeSolution> {
    if lattice.grid() != &problem.grid {
        return Err(Error::InvalidArgument("lattice and problem grids differ".into()));
    }
    if lattice.intensities() != problem.jumps.intensities() {
        return Err(Error::InvalidArgument("lattice and problem jump measures differ".into()));
    }
    let n = lattice.depth();
    let n_marks = lattice.n_marks();
    let dt = lattice.grid().dt();
    let g = problem.coeffs.g();
    let mut layers: Vec<Vec<NodeValue>> = vec![Vec::new(); n + 1];
    layers[n] = vec![NodeValue::terminal(g, n_marks); lattice.n_nodes(n)];

    for step in (0..n).rev() {
        let next = &layers[step + 1];
        let values = (0..lattice.n_nodes(step))
            .into_par_iter()
            .map(|id| -> Result<NodeValue> {
                let key = lattice.key(step, id);
                let node_err = |e: Error| e.at(format!("lattice node {}", node_id(&key)));
                let m = child_moments(lattice, next, step, id);
                let snap = Snapshot {
                    p1: m.mean[0],
                    p2: m.mean[1],
                    lambda1: m.lambda[0],
                    lambda2: m.lambda[1],
                    gamma1: m.gamma[0].clone(),
                    gamma2: m.gamma[1].clone(),
                };
                let s = problem.coeffs.at_node(&key);
                let terms = HamiltonianTerms::from_step(step, s, &problem.jumps, &snap).map_err(node_err)?;
                let solve = |b: Branch| {
                    saddle(b, &terms, &problem.cone1, &problem.cone2, &opts.saddle, None, None)
                        .map_err(|e| e.at(b.name()))
                        .map_err(node_err)
                };
                let sad = [solve(Branch::Positive)?, solve(Branch::Negative)?];
                let drv = [
                    driver(s, m.mean[0], m.lambda[0], sad[0].value),
                    driver(s, m.mean[1], m.lambda[1], sad[1].value),
                ];
                let p = [m.mean[0] + dt * drv[0], m.mean[1] + dt * drv[1]];
                if !(p[0].is_finite() && p[1].is_finite()) {
                    return Err(node_err(Error::Numeric("lattice value became non-finite".into())));
                }
                Ok(NodeValue {
                    p,
                    lambda: m.lambda,
                    gamma: m.gamma,
                    driver: drv,
                    saddles: Some(sad),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        layers[step] = values;
    }
    Ok(LatticeSolution {
        lattice: lattice.clone(),
        layers,
    })
}

/// Node identifier `step:level:c0,c1,...` used as the JSON key.
pub fn node_id(key: &NodeKey) -> String {
    let counts: Vec<String> = key.jumps.iter().map(usize::to_string).collect();
    format!("{}:{}:{}", key.step, key.level, counts.join(","))
}

impl LatticeSolution {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn root(&self) -> &NodeValue {
        &self.layers[0][0]
    }

    pub fn layer(&self, step: usize) -> &[NodeValue] {
        &self.layers[step]
    }

    pub fn node(&self, key: &NodeKey) -> Option<&NodeValue> {
        let id = self.lattice.id(key)?;
        self.layers.get(key.step)?.get(id)
    }

    /// All nodes with their keys, layer by layer from the root.
    pub fn iter(&self) -> impl Iterator<Item = (NodeKey, &NodeValue)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(move |(s, layer)| layer.iter().enumerate().map(move |(id, v)| (self.lattice.key(s, id), v)))
    }

    /// Largest `|E[P_k(child)] − P_k(node) − Δt · driver|` over all
    /// non-terminal nodes.
    pub fn tower_residual(&self) -> f64 {
        let dt = self.lattice.grid().dt();
        let mut worst = 0.0f64;
        for step in 0..self.lattice.depth() {
            for (id, v) in self.layers[step].iter().enumerate() {
                let m = child_moments(&self.lattice, &self.layers[step + 1], step, id);
                for k in 0..2 {
                    worst = worst.max((m.mean[k] - v.p[k] + dt * v.driver[k]).abs());
                }
            }
        }
        worst
    }

    /// Smallest and largest of `P_k` and `P_k + Γ_k[j]` over all nodes.
    pub fn value_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for layer in &self.layers {
            for v in layer {
                for k in 0..2 {
                    let vals = std::iter::once(v.p[k]).chain(v.gamma[k].iter().map(|g| v.p[k] + g));
                    for x in vals {
                        lo = lo.min(x);
                        hi = hi.max(x);
                    }
                }
            }
        }
        (lo, hi)
    }

    /// JSON object keyed by node id.
    pub fn to_json(&self) -> Result<String> {
        let mut nodes = Map::new();
        for (key, v) in self.iter() {
            nodes.insert(node_id(&key), serde_json::to_value(v)?);
        }
        let doc = serde_json::json!({
            "grid": self.lattice.grid(),
            "intensities": self.lattice.intensities(),
            "jump_cap": self.lattice.jump_cap(),
            "nodes": Value::Object(nodes),
        });
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Flat CSV: step, level, jump counts, then the unknowns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n_marks = self.lattice.n_marks();
        let mut w = csv::Writer::from_writer(out);
        let mut head: Vec<String> = vec!["step".into(), "level".into()];
        head.extend((0..n_marks).map(|j| format!("N_{j}")));
        head.extend(["P1", "P2", "L1", "L2"].map(String::from));
        for k in 1..=2 {
            head.extend((0..n_marks).map(|j| format!("G{k}_{j}")));
        }
        w.write_record(&head)?;
        for (key, v) in self.iter() {
            let mut row = vec![key.step.to_string(), key.level.to_string()];
            row.extend(key.jumps.iter().map(usize::to_string));
            let nums = v.p.iter().chain(&v.lambda).chain(&v.gamma[0]).chain(&v.gamma[1]);
            row.extend(nums.map(|x| format!("{x:.16e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
