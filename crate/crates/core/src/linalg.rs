//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Smallest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone().symmetric_eigenvalues().min()
}

/// Largest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn max_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone().symmetric_eigenvalues().max()
}

/// Spectral norm of a symmetric matrix.
pub fn symmetric_norm(m: &Matrix) -> f64 {
    max_eigenvalue(m).abs().max(min_eigenvalue(m).abs())
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}

pub fn all_finite_vec(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn all_finite_mat(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Positive part `max(x, 0)`.
#[inline]
pub fn pos(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Negative part `max(-x, 0)`.
#[inline]
pub fn neg(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        0.0
    }
}

/// Serde adapter writing a vector as a flat list of numbers.
pub mod serde_vector {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Vector;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}
