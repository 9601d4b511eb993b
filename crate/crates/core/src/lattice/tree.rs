use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JumpMeasure, NodeKey, TimeGrid};

/// Largest total jump probability per step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.5;
pub const DEFAULT_JUMP_CAP: usize = 3;

/// One branch out of a node: a Brownian move combined with either no jump
/// or a jump of one mark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub up: bool,
    pub mark: Option<usize>,
    pub prob: f64,
    /// Brownian increment `±√Δt`.
    pub dw: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    counts: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
}

impl Layer {
    fn new(step: usize, n_marks: usize, cap: usize) -> Self {
        let top = step.min(cap);
        let mut counts = vec![Vec::new()];
        for _ in 0..n_marks {
            counts = counts
                .into_iter()
                .flat_map(|c: Vec<usize>| {
                    (0..=top).map(move |k| {
                        let mut next = c.clone();
                        next.push(k);
                        next
                    })
                })
                .collect();
        }
        counts.retain(|c| c.iter().sum::<usize>() <= step);
        let lookup = counts.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        Self { counts, lookup }
    }
}

/// Recombining tree for a Brownian motion and a marked Poisson measure.
///
/// Nodes at step `s` are indexed by the number of Brownian up-moves
/// `0..=s` and a jump-count vector with each entry capped at `jump_cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    grid: TimeGrid,
    intensities: Vec<f64>,
    jump_cap: usize,
    moves: Vec<Move>,
    layers: Vec<Layer>,
}

pub fn build_lattice(grid: &TimeGrid, jumps: &JumpMeasure) -> Result<Lattice> {
    build_lattice_with_cap(grid, jumps, DEFAULT_JUMP_CAP)
}

pub fn build_lattice_with_cap(grid: &TimeGrid, jumps: &JumpMeasure, jump_cap: usize) -> Result<Lattice> {
    let dt = grid.dt();
    let total = jumps.total_intensity() * dt;
    if total > MAX_JUMP_PROBABILITY {
        return Err(Error::InvalidArgument(format!(
            "jump probability per step {total} exceeds {MAX_JUMP_PROBABILITY}; use at least {} steps",
            (jumps.total_intensity() * grid.horizon() / MAX_JUMP_PROBABILITY).ceil() as usize
        )));
    }
    if jumps.n_marks() > 0 && jump_cap == 0 {
        return Err(Error::InvalidArgument("jump cap must be at least 1 when marks are present".into()));
    }
    let jump_probs: Vec<f64> = jumps.intensities().iter().map(|nu| nu * dt).collect();
    let quiet = 1.0 - jump_probs.iter().sum::<f64>();
    let sq = dt.sqrt();
    let mut moves = Vec::with_capacity(2 * (1 + jump_probs.len()));
    for up in [true, false] {
        let dw = if up { sq } else { -sq };
        moves.push(Move {
            up,
            mark: None,
            prob: 0.5 * quiet,
            dw,
        });
        for (j, p) in jump_probs.iter().enumerate() {
            moves.push(Move {
                up,
                mark: Some(j),
                prob: 0.5 * p,
                dw,
            });
        }
    }
    let layers = (0..=grid.n_steps())
        .map(|s| Layer::new(s, jumps.n_marks(), jump_cap))
        .collect();
    Ok(Lattice {
        grid: *grid,
        intensities: jumps.intensities().to_vec(),
        jump_cap,
        moves,
        layers,
    })
}

impl Lattice {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn depth(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn n_marks(&self) -> usize {
        self.intensities.len()
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn jump_cap(&self) -> usize {
        self.jump_cap
    }

    /// Branches out of every non-terminal node, identical across nodes.
    pub fn moves(&self) -> &[Move] {
        &self.moves
    }

    pub fn n_nodes(&self, step: usize) -> usize {
        (step + 1) * self.layers[step].counts.len()
    }

    pub fn total_nodes(&self) -> usize {
        (0..=self.depth()).map(|s| self.n_nodes(s)).sum()
    }

    pub fn key(&self, step: usize, id: usize) -> NodeKey {
        let layer = &self.layers[step];
        let n = layer.counts.len();
        NodeKey {
            step,
            level: id / n,
            jumps: layer.counts[id % n].clone(),
        }
    }

    pub fn id(&self, key: &NodeKey) -> Option<usize> {
        let layer = self.layers.get(key.step)?;
        if key.level > key.step {
            return None;
        }
        let pos = layer.lookup.get(&key.jumps)?;
        Some(key.level * layer.counts.len() + pos)
    }

    /// Index in layer `step + 1` of the child reached by `mv`.
    pub fn child(&self, step: usize, id: usize, mv: &Move) -> usize {
        let layer = &self.layers[step];
        let n = layer.counts.len();
        let level = id / n + usize::from(mv.up);
        let mut counts = layer.counts[id % n].clone();
        if let Some(j) = mv.mark {
            counts[j] = (counts[j] + 1).min(self.jump_cap);
        }
        let next = &self.layers[step + 1];
        level * next.counts.len() + next.lookup[&counts]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_tree_has_level_count() {
        let lat = build_lattice(&TimeGrid::new(1.0, 3).unwrap(), &JumpMeasure::none()).unwrap();
        assert_eq!(lat.n_nodes(3), 4);
        assert_eq!(lat.total_nodes(), 1 + 2 + 3 + 4);
        assert_eq!(lat.moves().len(), 2);
    }

    #[test]
    fn branch_probabilities() {
        let lat = build_lattice(&TimeGrid::new(1.0, 10).unwrap(), &JumpMeasure::new(vec![1.0]).unwrap()).unwrap();
        let probs: Vec<f64> = lat.moves().iter().map(|m| m.prob).collect();
        let expected = [0.45, 0.05, 0.45, 0.05];
        for (p, e) in probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-15);
        }
        assert_eq!(probs.iter().sum::<f64>(), 1.0);
        let mean: f64 = lat.moves().iter().map(|m| m.prob * m.dw).sum();
        let var: f64 = lat.moves().iter().map(|m| m.prob * m.dw * m.dw).sum();
        assert!(mean.abs() < 1e-16);
        assert!((var - 0.1).abs() < 1e-16);
    }

    #[test]
    fn probability_guard() {
        let err = build_lattice(&TimeGrid::new(1.0, 10).unwrap(), &JumpMeasure::new(vec![6.0]).unwrap()).unwrap_err();
        assert!(err.to_string().contains("12 steps"), "{err}");
    }

    #[test]
    fn children_recombine_and_cap() {
        let lat = build_lattice_with_cap(&TimeGrid::new(1.0, 6).unwrap(), &JumpMeasure::new(vec![0.5, 0.5]).unwrap(), 2)
            .unwrap();
        for step in 0..6 {
            for id in 0..lat.n_nodes(step) {
                let key = lat.key(step, id);
                assert_eq!(lat.id(&key), Some(id));
                for mv in lat.moves() {
                    let child = lat.key(step + 1, lat.child(step, id, mv));
                    assert_eq!(child.level, key.level + usize::from(mv.up));
                    assert!(child.jumps.iter().all(|&c| c <= 2));
                }
            }
        }
        // up-then-down and down-then-up meet
        let up = lat.moves().iter().find(|m| m.up && m.mark.is_none()).unwrap();
        let down = lat.moves().iter().find(|m| !m.up && m.mark.is_none()).unwrap();
        let a = lat.child(1, lat.child(0, 0, up), down);
        let b = lat.child(1, lat.child(0, 0, down), up);
        assert_eq!(a, b);
    }
}
