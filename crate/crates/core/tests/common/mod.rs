#![allow(dead_code)]

use conelq::linalg::{Matrix, Vector};
use conelq::model::{
    CoefficientSet, Cone, InitialLaw, JumpMeasure, MarkCoefficients, Problem, StepCoefficients, TimeGrid,
};
use rand::Rng;

pub fn v1(x: f64) -> Vector {
    Vector::from_element(1, x)
}

pub fn scalar_step(n_marks: usize) -> StepCoefficients {
    StepCoefficients::zeros(1, 1, n_marks)
}

/// Scalar instance with the given step coefficients held constant.
pub fn constant_problem(
    step: StepCoefficients,
    nus: Vec<f64>,
    horizon: f64,
    n_steps: usize,
    g: f64,
    cone1: Cone,
    cone2: Cone,
    initial: InitialLaw,
) -> Problem {
    let grid = TimeGrid::new(horizon, n_steps).unwrap();
    let jumps = JumpMeasure::new(nus).unwrap();
    let coeffs = CoefficientSet::constant(step, n_steps, g).unwrap();
    Problem::new(grid, jumps, coeffs, cone1, cone2, initial).unwrap()
}

/// `dP/dt = P²`, `P(T) = 1`: player 1 steers with unit cost, player 2 has
/// no effect.
pub fn riccati_oracle(n_steps: usize) -> Problem {
    let mut s = scalar_step(0);
    s.b1[0] = 1.0;
    s.r11[(0, 0)] = 1.0;
    s.r22[(0, 0)] = -1.0;
    constant_problem(
        s,
        vec![],
        1.0,
        n_steps,
        1.0,
        Cone::FullSpace(1),
        Cone::FullSpace(1),
        InitialLaw::Point(1.0),
    )
}

/// Instance satisfying every standing assumption and the separable
/// structure, with one jump mark.
pub fn valid_instance(n_steps: usize, cone1: Cone, cone2: Cone) -> Problem {
    let mut s = scalar_step(1);
    s.a = 0.05;
    s.c = 0.2;
    s.b1[0] = 0.3;
    s.b2[0] = 0.2;
    s.d2[0] = 0.3;
    s.q = 0.1;
    s.r11[(0, 0)] = 1.0;
    s.r22[(0, 0)] = -6.0;
    s.marks[0] = MarkCoefficients {
        e: 0.1,
        f1: v1(0.3),
        f2: v1(0.0),
    };
    constant_problem(s, vec![1.0], 1.0, n_steps, 0.3, cone1, cone2, InitialLaw::Point(1.0)).with_delta_lower(0.05)
}

/// Random bounded scalar coefficients with strong curvature in both
/// players, optionally coupled and with jumps.
pub fn random_step<R: Rng>(rng: &mut R, n_marks: usize, coupled: bool) -> StepCoefficients {
    let mut s = scalar_step(n_marks);
    s.a = rng.random_range(-0.5..0.5);
    s.c = rng.random_range(-0.5..0.5);
    s.b1[0] = rng.random_range(-1.0..1.0);
    s.b2[0] = rng.random_range(-1.0..1.0);
    s.d1[0] = rng.random_range(-0.5..0.5);
    s.q = rng.random_range(0.0..1.0);
    s.r11[(0, 0)] = rng.random_range(1.0..2.0);
    s.r22[(0, 0)] = -rng.random_range(2.0..4.0);
    if coupled {
        s.d2[0] = rng.random_range(-0.5..0.5);
        s.s1[0] = rng.random_range(-0.5..0.5);
        s.s2[0] = rng.random_range(-0.5..0.5);
        s.r12[(0, 0)] = rng.random_range(-0.5..0.5);
    }
    for m in s.marks.iter_mut() {
        m.e = rng.random_range(-0.5..0.5);
        m.f1[0] = rng.random_range(-0.5..0.5);
        if coupled {
            m.f2[0] = rng.random_range(-0.3..0.3);
        }
    }
    s
}

pub fn random_cone<R: Rng>(rng: &mut R) -> Cone {
    match rng.random_range(0..4) {
        0 => Cone::FullSpace(1),
        1 => Cone::NonnegativeOrthant(1),
        2 => Cone::finitely_generated(Matrix::from_element(1, 1, -1.0)).unwrap(),
        _ => Cone::finitely_generated(Matrix::from_element(1, 1, 2.0)).unwrap(),
    }
}
