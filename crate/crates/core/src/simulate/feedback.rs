use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{Branch, SaddleResult};
use crate::lattice::LatticeSolution;
use crate::linalg::{serde_vector, Vector};
use crate::model::{Cone, TimeGrid};
use crate::riccati::RiccatiSolution;

/// Saddle directions of both players for one sign branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    #[serde(with = "serde_vector")]
    pub first: Vector,
    #[serde(with = "serde_vector")]
    pub second: Vector,
}

impl From<&SaddleResult> for Gains {
    fn from(s: &SaddleResult) -> Self {
        Self {
            first: s.v1.clone(),
            second: s.v2.clone(),
        }
    }
}

/// `u = Θ⁺ X⁺ + Θ⁻ X⁻`, one pair of gains per grid step (left endpoint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLaw {
    pub grid: TimeGrid,
    pub plus: Vec<Gains>,
    pub minus: Vec<Gains>,
}

impl FeedbackLaw {
    pub fn m1(&self) -> usize {
        self.plus[0].first.len()
    }

    pub fn m2(&self) -> usize {
        self.plus[0].second.len()
    }

    pub fn gains(&self, step: usize, branch: Branch) -> &Gains {
        match branch {
            Branch::Positive => &self.plus[step],
            Branch::Negative => &self.minus[step],
        }
    }

    /// Largest distance of any gain block from its cone.
    pub fn cone_violation(&self, cone1: &Cone, cone2: &Cone) -> Result<f64> {
        let mut worst = 0.0f64;
        for g in self.plus.iter().chain(&self.minus) {
            worst = worst.max((&g.first - cone1.project(&g.first)?).norm());
            worst = worst.max((&g.second - cone2.project(&g.second)?).norm());
        }
        Ok(worst)
    }

    /// Largest gain norm over steps and branches.
    pub fn max_gain(&self) -> f64 {
        self.plus
            .iter()
            .chain(&self.minus)
            .map(|g| g.first.norm().max(g.second.norm()))
            .fold(0.0, f64::max)
    }

    /// Copy with every player-1 gain replaced by `f(gain)`.
    pub fn map_first(&self, f: impl Fn(&Vector) -> Vector) -> Self {
        let apply = |g: &Gains| Gains {
            first: f(&g.first),
            second: g.second.clone(),
        };
        Self {
            grid: self.grid,
            plus: self.plus.iter().map(apply).collect(),
            minus: self.minus.iter().map(apply).collect(),
        }
    }

    /// Copy with every player-2 gain replaced by `f(gain)`.
    pub fn map_second(&self, f: impl Fn(&Vector) -> Vector) -> Self {
        let apply = |g: &Gains| Gains {
            first: g.first.clone(),
            second: f(&g.second),
        };
        Self {
            grid: self.grid,
            plus: self.plus.iter().map(apply).collect(),
            minus: self.minus.iter().map(apply).collect(),
        }
    }
}

/// Feedback law from the saddle caches of an ODE solution: `Θ⁺` from the
/// positive-branch saddle and `Θ⁻` from the negative-branch saddle.
pub fn extract_feedback(sol: &RiccatiSolution) -> Result<FeedbackLaw> {
    let n = sol.grid.n_steps();
    if sol.saddles.len() != n + 1 {
        return Err(Error::InvalidArgument(format!(
            "solution carries {} saddle records for {} nodes",
            sol.saddles.len(),
            n + 1
        )));
    }
    Ok(FeedbackLaw {
        grid: sol.grid,
        plus: sol.saddles[..n].iter().map(|s| Gains::from(&s[0])).collect(),
        minus: sol.saddles[..n].iter().map(|s| Gains::from(&s[1])).collect(),
    })
}

/// Feedback law from a lattice solution whose saddles do not vary across
/// the nodes of a layer. Node-dependent laws have no counterpart on
/// continuous paths and are rejected.
pub fn extract_lattice_feedback(sol: &LatticeSolution) -> Result<FeedbackLaw> {
    let lat = sol.lattice();
    let mut plus = Vec::with_capacity(lat.depth());
    let mut minus = Vec::with_capacity(lat.depth());
    for step in 0..lat.depth() {
        let layer = sol.layer(step);
        let first = layer[0]
            .saddles
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("missing saddle cache at step {step}")))?;
        for v in layer {
            let s = v
                .saddles
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("missing saddle cache at step {step}")))?;
            let same = (0..2).all(|k| s[k].v1 == first[k].v1 && s[k].v2 == first[k].v2);
            if !same {
                return Err(Error::InvalidArgument(format!(
                    "saddle gains vary across lattice nodes at step {step}; the law is node-dependent"
                )));
            }
        }
        plus.push(Gains::from(&first[0]));
        minus.push(Gains::from(&first[1]));
    }
    Ok(FeedbackLaw {
        grid: *lat.grid(),
        plus,
        minus,
    })
}
