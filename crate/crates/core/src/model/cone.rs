use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

const NNLS_TOL: f64 = 1e-12;

/// Closed convex control cone.
///
/// `FinitelyGenerated` stores generators as the columns of a `dim × r`
/// matrix; with `r = 0` it is the trivial cone `{0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cone {
    FullSpace(usize),
    NonnegativeOrthant(usize),
    FinitelyGenerated { generators: Matrix },
}

impl Cone {
    pub fn finitely_generated(generators: Matrix) -> Result<Self> {
        for (k, col) in generators.column_iter().enumerate() {
            if col.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("generator {k} is not finite")));
            }
            if col.norm() == 0.0 {
                return Err(Error::InvalidArgument(format!("generator {k} is the zero vector")));
            }
        }
        Ok(Cone::FinitelyGenerated { generators })
    }

    /// The trivial cone `{0}` in dimension `dim`.
    pub fn zero(dim: usize) -> Self {
        Cone::FinitelyGenerated {
            generators: Matrix::zeros(dim, 0),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Cone::FullSpace(d) | Cone::NonnegativeOrthant(d) => *d,
            Cone::FinitelyGenerated { generators } => generators.nrows(),
        }
    }

    pub fn is_full_space(&self) -> bool {
        matches!(self, Cone::FullSpace(_))
    }

    pub fn is_trivial(&self) -> bool {
        match self {
            Cone::FullSpace(d) | Cone::NonnegativeOrthant(d) => *d == 0,
            Cone::FinitelyGenerated { generators } => generators.ncols() == 0,
        }
    }

    fn check_dim(&self, point: &Vector) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "point has dimension {} but cone has dimension {}",
                point.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Euclidean projection onto the cone.
    pub fn project(&self, point: &Vector) -> Result<Vector> {
        self.check_dim(point)?;
        Ok(self.project_unchecked(point))
    }

    pub(crate) fn project_unchecked(&self, point: &Vector) -> Vector {
        match self {
            Cone::FullSpace(_) => point.clone(),
            Cone::NonnegativeOrthant(_) => point.map(|x| x.max(0.0)),
            Cone::FinitelyGenerated { generators } => {
                if generators.ncols() == 0 {
                    return Vector::zeros(point.len());
                }
                let coef = nnls(generators, point);
                let proj = generators * coef;
                let gap = (&proj - point).norm();
                if gap <= NNLS_TOL * point.norm().max(1.0) {
                    point.clone()
                } else {
                    proj
                }
            }
        }
    }

    /// Projection onto the cone intersected with the closed ball of the given
    /// radius around the origin.
    ///
    /// For a closed convex cone this is the cone projection followed by
    /// radial scaling into the ball.
    pub fn project_ball(&self, point: &Vector, radius: Option<f64>) -> Vector {
        let p = self.project_unchecked(point);
        match radius {
            Some(r) => {
                let n = p.norm();
                if n > r {
                    if r <= 0.0 {
                        Vector::zeros(p.len())
                    } else {
                        p * (r / n)
                    }
                } else {
                    p
                }
            }
            None => p,
        }
    }

    pub fn contains(&self, point: &Vector, tol: f64) -> Result<bool> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be nonnegative, got {tol}")));
        }
        self.check_dim(point)?;
        Ok((point - self.project_unchecked(point)).norm() <= tol)
    }

    /// For one-dimensional cones, the interval `[lo, hi]` the cone spans.
    pub fn interval_1d(&self) -> Option<(f64, f64)> {
        if self.dim() != 1 {
            return None;
        }
        Some(match self {
            Cone::FullSpace(_) => (f64::NEG_INFINITY, f64::INFINITY),
            Cone::NonnegativeOrthant(_) => (0.0, f64::INFINITY),
            Cone::FinitelyGenerated { generators } => {
                let has_pos = generators.iter().any(|&g| g > 0.0);
                let has_neg = generators.iter().any(|&g| g < 0.0);
                (
                    if has_neg { f64::NEG_INFINITY } else { 0.0 },
                    if has_pos { f64::INFINITY } else { 0.0 },
                )
            }
        })
    }

    /// Random member of the cone with entries of order `scale`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> Vector {
        let d = self.dim();
        match self {
            Cone::FullSpace(_) => Vector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
            Cone::NonnegativeOrthant(_) => {
                Vector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal).abs())
            }
            Cone::FinitelyGenerated { generators } => {
                let r = generators.ncols();
                let w = Vector::from_fn(r, |_, _| scale * rng.random::<f64>());
                generators * w
            }
        }
    }
}

/// Nonnegative least squares `min |G c - x|` over `c >= 0` by the
/// Lawson–Hanson active-set iteration.
fn nnls(g: &Matrix, x: &Vector) -> Vector {
    let r = g.ncols();
    let mut coef = Vector::zeros(r);
    let mut passive = vec![false; r];
    let scale = g.amax().max(1.0) * x.norm().max(1.0);
    let tol = NNLS_TOL * scale;
    let max_outer = 3 * r + 10;

    for _ in 0..max_outer {
        let resid = x - g * &coef;
        let w = g.transpose() * resid;
        let candidate = (0..r)
            .filter(|&j| !passive[j])
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let j = match candidate {
            Some(j) if w[j] > tol => j,
            _ => break,
        };
        passive[j] = true;

        for _ in 0..(3 * r + 10) {
            let s = solve_passive(g, x, &passive);
            let infeasible: Vec<usize> = (0..r).filter(|&i| passive[i] && s[i] <= 0.0).collect();
            if infeasible.is_empty() {
                coef = s;
                break;
            }
            let alpha = infeasible
                .iter()
                .map(|&i| coef[i] / (coef[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            coef = &coef + (&s - &coef) * alpha;
            for i in 0..r {
                if passive[i] && coef[i] <= NNLS_TOL {
                    passive[i] = false;
                    coef[i] = 0.0;
                }
            }
        }
    }
    coef
}

fn solve_passive(g: &Matrix, x: &Vector, passive: &[bool]) -> Vector {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let mut out = Vector::zeros(passive.len());
    if idx.is_empty() {
        return out;
    }
    let sub = g.select_columns(&idx);
    let svd = sub.svd(true, true);
    if let Ok(sol) = svd.solve(x, 1e-14) {
        for (k, &i) in idx.iter().enumerate() {
            out[i] = sol[k];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn orthant_clamps() {
        let c = Cone::NonnegativeOrthant(2);
        assert_eq!(c.project(&v(&[-1.0, 2.0])).unwrap(), v(&[0.0, 2.0]));
    }

    #[test]
    fn full_space_is_identity() {
        let c = Cone::FullSpace(3);
        assert_eq!(c.project(&v(&[1.0, -4.0, 0.5])).unwrap(), v(&[1.0, -4.0, 0.5]));
    }

    #[test]
    fn ray_projection() {
        let c = Cone::finitely_generated(Matrix::from_column_slice(2, 1, &[1.0, 1.0])).unwrap();
        let p = c.project(&v(&[2.0, 0.0])).unwrap();
        assert!((p - v(&[1.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn contains_examples() {
        let c = Cone::NonnegativeOrthant(2);
        assert!(c.contains(&v(&[0.0, 3.0]), 0.0).unwrap());
        assert!(c.contains(&v(&[-1e-12, 3.0]), 1e-9).unwrap());
        let ray = Cone::finitely_generated(Matrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        assert!(!ray.contains(&v(&[0.0, 1.0]), 1e-9).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let c = Cone::NonnegativeOrthant(2);
        assert!(c.project(&v(&[1.0])).is_err());
        assert!(c.contains(&v(&[1.0, 2.0, 3.0]), 0.0).is_err());
        assert!(c.contains(&v(&[1.0, 2.0]), -1.0).is_err());
    }

    #[test]
    fn zero_generators_rejected() {
        assert!(Cone::finitely_generated(Matrix::from_column_slice(2, 1, &[0.0, 0.0])).is_err());
        let z = Cone::zero(2);
        assert_eq!(z.project(&v(&[3.0, -1.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn two_generator_cone_projection_matches_brute_force() {
        // cone spanned by (1,0) and (1,1): the wedge 0 <= y <= x
        let g = Matrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let c = Cone::finitely_generated(g.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            let p = c.project(&x).unwrap();
            // brute force over a fine polar grid of the wedge
            let mut best = f64::INFINITY;
            for a in 0..=400 {
                let theta = std::f64::consts::FRAC_PI_4 * a as f64 / 400.0;
                let dir = v(&[theta.cos(), theta.sin()]);
                let t = x.dot(&dir).max(0.0);
                best = best.min((&x - dir * t).norm());
            }
            let d = (&x - &p).norm();
            assert!(d <= best + 1e-9, "{d} > {best}");
            // the polar scan has angular resolution about 2e-3, i.e. up to 1e-2 in distance
            assert!(d >= best - 1e-2, "x={x:?} p={p:?} d={d} best={best}");
        }
    }

    #[test]
    fn interval_of_one_dimensional_cones() {
        assert_eq!(Cone::NonnegativeOrthant(1).interval_1d(), Some((0.0, f64::INFINITY)));
        let neg = Cone::finitely_generated(Matrix::from_column_slice(1, 1, &[-2.0])).unwrap();
        assert_eq!(neg.interval_1d(), Some((f64::NEG_INFINITY, 0.0)));
        assert_eq!(Cone::zero(1).interval_1d(), Some((0.0, 0.0)));
        assert_eq!(Cone::FullSpace(2).interval_1d(), None);
    }

    #[test]
    fn ball_projection_scales_radially() {
        let c = Cone::NonnegativeOrthant(2);
        let p = c.project_ball(&v(&[3.0, 4.0]), Some(1.0));
        assert!((p - v(&[0.6, 0.8])).norm() < 1e-15);
        assert_eq!(c.project_ball(&v(&[3.0, 4.0]), Some(0.0)), v(&[0.0, 0.0]));
    }

    fn arb_cone() -> impl Strategy<Value = Cone> {
        prop_oneof![
            (1usize..4).prop_map(Cone::FullSpace),
            (1usize..4).prop_map(Cone::NonnegativeOrthant),
            (1usize..4, 1usize..4, prop::collection::vec(-2.0f64..2.0, 16)).prop_filter_map(
                "nonzero generators",
                |(d, r, raw)| {
                    let g = Matrix::from_fn(d, r, |i, j| raw[i * 4 + j]);
                    Cone::finitely_generated(g).ok()
                }
            ),
        ]
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(cone in arb_cone(), raw in prop::collection::vec(-5.0f64..5.0, 4)) {
            let x = Vector::from_iterator(cone.dim(), raw.into_iter().take(cone.dim()));
            let p = cone.project(&x).unwrap();
            let pp = cone.project(&p).unwrap();
            prop_assert!((&pp - &p).norm() <= 1e-12 * p.norm().max(1.0));
            prop_assert!(cone.contains(&p, 1e-9).unwrap());
        }

        #[test]
        fn members_scale_within_cone(cone in arb_cone(), seed in 0u64..1000, lambda in 0.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = cone.sample(&mut rng, 1.0);
            prop_assert!(cone.contains(&x, 1e-9).unwrap());
            prop_assert!(cone.contains(&(x * lambda), 1e-9 * (1.0 + lambda)).unwrap());
            prop_assert!(cone.contains(&Vector::zeros(cone.dim()), 0.0).unwrap());
        }
    }
}
