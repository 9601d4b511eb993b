use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finitely supported jump measure: mark `j` fires at rate `intensities[j]`.
///
/// An empty measure is the pure-diffusion model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JumpMeasure {
    intensities: Vec<f64>,
}

impl JumpMeasure {
    pub fn new(intensities: Vec<f64>) -> Result<Self> {
        for (j, &nu) in intensities.iter().enumerate() {
            if !(nu.is_finite() && nu > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "jump intensity of mark {j} must be positive and finite, got {nu}"
                )));
            }
        }
        Ok(Self { intensities })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn n_marks(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    pub fn intensity(&self, j: usize) -> f64 {
        self.intensities[j]
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn total_intensity(&self) -> f64 {
        self.intensities.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_rates() {
        assert!(JumpMeasure::new(vec![1.0, 0.0]).is_err());
        assert!(JumpMeasure::new(vec![-2.0]).is_err());
        assert!(JumpMeasure::new(vec![f64::INFINITY]).is_err());
        let m = JumpMeasure::new(vec![0.5, 1.5]).unwrap();
        assert_eq!(m.total_intensity(), 2.0);
        assert!(JumpMeasure::none().is_empty());
    }
}
