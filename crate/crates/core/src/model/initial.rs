use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar distribution with finite second moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

/// Law of the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialLaw {
    Point(f64),
    Sampler(Sampler),
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialLaw::Point(x) if !x.is_finite() => {
                Err(Error::Validation(format!("initial point {x} is not finite")))
            }
            InitialLaw::Sampler(Sampler::Normal { mean, std }) if !(mean.is_finite() && std.is_finite() && std >= 0.0) => {
                Err(Error::Validation(format!("normal initial law needs finite mean and std >= 0, got ({mean}, {std})")))
            }
            InitialLaw::Sampler(Sampler::Uniform { low, high }) if !(low.is_finite() && high.is_finite() && low <= high) => {
                Err(Error::Validation(format!("uniform initial law needs finite low <= high, got [{low}, {high}]")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_point(&self) -> bool {
        matches!(self, InitialLaw::Point(_))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialLaw::Point(x) => x,
            InitialLaw::Sampler(Sampler::Normal { mean, std }) => {
                if std == 0.0 {
                    mean
                } else {
                    Normal::new(mean, std).expect("validated normal law").sample(rng)
                }
            }
            InitialLaw::Sampler(Sampler::Uniform { low, high }) => {
                if low == high {
                    low
                } else {
                    Uniform::new(low, high).expect("validated uniform law").sample(rng)
                }
            }
        }
    }

    /// `E[a (ξ⁺)² + b (ξ⁻)²]` when available in closed form (point laws).
    pub fn exact_split_moment(&self, a: f64, b: f64) -> Option<f64> {
        match *self {
            InitialLaw::Point(x) => Some(a * crate::linalg::pos(x).powi(2) + b * crate::linalg::neg(x).powi(2)),
            InitialLaw::Sampler(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_law_is_constant() {
        let law = InitialLaw::Point(1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(law.sample(&mut rng), 1.5);
        assert_eq!(law.exact_split_moment(2.0, 3.0), Some(4.5));
        assert_eq!(InitialLaw::Point(-2.0).exact_split_moment(2.0, 3.0), Some(12.0));
    }

    #[test]
    fn samples_are_finite_with_finite_second_moment() {
        let law = InitialLaw::Sampler(Sampler::Normal { mean: 0.5, std: 2.0 });
        law.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let m2: f64 = (0..n).map(|_| law.sample(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((m2 - 4.25).abs() < 0.2, "{m2}");
        let u = InitialLaw::Sampler(Sampler::Uniform { low: -1.0, high: 3.0 });
        for _ in 0..1000 {
            let x = u.sample(&mut rng);
            assert!((-1.0..3.0).contains(&x));
        }
    }

    #[test]
    fn invalid_laws() {
        assert!(InitialLaw::Point(f64::NAN).validate().is_err());
        assert!(InitialLaw::Sampler(Sampler::Normal { mean: 0.0, std: -1.0 }).validate().is_err());
        assert!(InitialLaw::Sampler(Sampler::Uniform { low: 1.0, high: 0.0 }).validate().is_err());
    }
}
