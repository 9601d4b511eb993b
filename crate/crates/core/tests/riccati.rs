mod common;

use std::time::Instant;

use common::*;
use conelq::hamiltonian::{Branch, Truncation};
use conelq::model::{AssumptionReport, Cone, InitialLaw, NodeKey, TimeGrid};
use conelq::riccati::{
    bounds_envelope, ladder_levels, monotone_ladder, solve_ode, solve_truncated, LadderDirection, RiccatiOptions,
    RiccatiSolution, SolutionTable,
};
use conelq::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts() -> RiccatiOptions {
    RiccatiOptions::default()
}

#[test]
fn closed_form_oracle() {
    let problem = riccati_oracle(1000);
    let start = Instant::now();
    let sol = solve_ode(&problem, &opts()).unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0);
    for (i, t) in problem.grid.times().into_iter().enumerate() {
        let exact = 1.0 / (1.0 + (1.0 - t));
        assert!((sol.p1[i] - exact).abs() <= 1e-8, "t = {t}");
    }
    assert!((sol.p1[0] - 0.5).abs() <= 1e-8);
    let s = sol.saddle_at(0, Branch::Positive);
    assert!((s.v1[0] + 0.5).abs() < 1e-8);
}

#[test]
fn zero_dynamics_keep_terminal_value() {
    let mut s = scalar_step(0);
    s.r11[(0, 0)] = 1.0;
    s.r22[(0, 0)] = -1.0;
    let p = constant_problem(
        s,
        vec![],
        1.0,
        50,
        0.7,
        Cone::NonnegativeOrthant(1),
        Cone::FullSpace(1),
        InitialLaw::Point(1.0),
    );
    let sol = solve_ode(&p, &opts()).unwrap();
    assert!(sol.p1.iter().chain(&sol.p2).all(|&x| x == 0.7));
    assert_eq!(sol.p1[50], 0.7);
    assert!(sol.lambda1.iter().chain(&sol.lambda2).all(|&x| x == 0.0));
    assert!(sol.gamma1.iter().flatten().all(|&x| x == 0.0));
}

#[test]
fn full_space_branches_coincide() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..10 {
        let n_marks = case % 3;
        let s = random_step(&mut rng, n_marks, case % 2 == 1);
        let nus = (0..n_marks).map(|_| rng.random_range(0.2..1.0)).collect();
        let g = rng.random_range(0.2..1.0);
        let p = constant_problem(s, nus, 1.0, 200, g, Cone::FullSpace(1), Cone::FullSpace(1), InitialLaw::Point(1.0));
        let sol = solve_ode(&p, &opts()).unwrap();
        assert!(sol.branch_gap() <= 1e-9, "case {case}: gap {}", sol.branch_gap());
    }
}

#[test]
fn constrained_branches_differ() {
    let p = valid_instance(200, Cone::NonnegativeOrthant(1), Cone::NonnegativeOrthant(1));
    let sol = solve_ode(&p, &opts()).unwrap();
    assert!(sol.branch_gap() > 1e-6);
    assert_eq!(sol.p1[200], 0.3);
    assert_eq!(sol.p2[200], 0.3);
}

#[test]
fn rk4_converges_at_fourth_order_on_smooth_problem() {
    let err = |n: usize| (solve_ode(&riccati_oracle(n), &opts()).unwrap().p1[0] - 0.5).abs();
    let (e1, e2) = (err(10), err(20));
    let order = (e1 / e2).log2();
    assert!((3.6..4.4).contains(&order), "order {order}");
}

#[test]
fn inactive_truncation_matches_direct_solve() {
    let p = valid_instance(200, Cone::NonnegativeOrthant(1), Cone::FullSpace(1));
    let direct = solve_ode(&p, &opts()).unwrap();
    let trunc = solve_truncated(&p, Truncation::new(1e6, 1e6).unwrap(), &opts()).unwrap();
    assert!(direct.sup_distance(&trunc) <= 1e-10);
}

#[test]
fn zero_first_radius_forces_zero_control() {
    let p = valid_instance(100, Cone::FullSpace(1), Cone::FullSpace(1));
    let sol = solve_truncated(&p, Truncation::new(0.0, 1e6).unwrap(), &opts()).unwrap();
    for node in &sol.saddles {
        assert!(node.iter().all(|s| s.v1[0] == 0.0));
    }
}

#[test]
fn zero_second_radius_matches_inert_second_player() {
    let p = valid_instance(100, Cone::FullSpace(1), Cone::FullSpace(1));
    let trunc = solve_truncated(&p, Truncation::new(1e6, 0.0).unwrap(), &opts()).unwrap();
    let mut inert = p.clone();
    inert.cone2 = Cone::zero(1);
    let direct = solve_ode(&inert, &opts()).unwrap();
    assert!(trunc.sup_distance(&direct) <= 1e-12);
}

#[test]
fn truncation_requires_separable_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_step(&mut rng, 1, true);
    let p = constant_problem(s, vec![0.5], 1.0, 10, 0.5, Cone::FullSpace(1), Cone::FullSpace(1), InitialLaw::Point(1.0));
    let err = solve_truncated(&p, Truncation::new(1.0, 1.0).unwrap(), &opts()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

/// Separable instance whose unconstrained saddle controls are of order one.
fn clamped_instance(seed: u64) -> conelq::model::Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = valid_instance(200, Cone::FullSpace(1), Cone::FullSpace(1));
    let b1 = rng.random_range(1.0..2.0);
    let b2 = rng.random_range(0.5..1.0);
    let q = rng.random_range(0.0..0.5);
    p.coeffs = p
        .coeffs
        .map_steps(|s| {
            s.b1[0] = b1;
            s.b2[0] = b2;
            s.q = q;
        })
        .unwrap();
    p
}

#[test]
fn ladder_is_monotone_and_reaches_direct_solve() {
    for seed in 0..3 {
        let p = clamped_instance(seed);
        let levels = ladder_levels(&[0.02, 0.05, 0.1, 1e3], &[0.01, 0.03, 1e3]).unwrap();
        let (finest, report) = monotone_ladder(&p, &levels, 1e-8, &opts()).unwrap();
        assert!(report.is_monotone(), "violation {}", report.worst_violation());
        // truncation must be active at the small levels
        let first_steps: Vec<_> = report.steps.iter().filter(|s| s.direction == LadderDirection::First).collect();
        assert!(first_steps.iter().any(|s| s.diff1.iter().any(|&d| d < -1e-6)));
        assert!(report
            .steps
            .iter()
            .filter(|s| s.direction == LadderDirection::Second)
            .any(|s| s.diff1.iter().any(|&d| d > 1e-6)));
        let direct = solve_ode(&p, &opts()).unwrap();
        assert!(finest.sup_distance(&direct) <= 1e-6);
        assert_eq!(report.finest, Truncation::new(1e3, 1e3).unwrap());
    }
}

#[test]
fn inactive_ladder_has_zero_differences() {
    let p = valid_instance(50, Cone::FullSpace(1), Cone::FullSpace(1));
    let levels = ladder_levels(&[1e4, 1e5], &[1e4, 1e5]).unwrap();
    let (_, report) = monotone_ladder(&p, &levels, 1e-8, &opts()).unwrap();
    for s in &report.steps {
        assert!(s.diff1.iter().chain(&s.diff2).all(|d| d.abs() <= 1e-10));
    }
}

#[test]
fn envelope_reference_values() {
    let k = AssumptionReport::k_from(1.0, 1.0);
    let delta_bar = AssumptionReport::delta_bar_from(1.0, 1.0);
    let e2 = 1f64.exp().powi(2);
    assert!((k - 2.0 * e2).abs() <= 1e-12);
    let report = AssumptionReport {
        c_bar: 1.0,
        delta_lower: 0.1,
        delta_bar,
        k,
        c_lower1: 0.5,
        horizon: 1.0,
        flags: valid_instance(1, Cone::FullSpace(1), Cone::FullSpace(1)).report().unwrap().flags,
        structure: valid_instance(1, Cone::FullSpace(1), Cone::FullSpace(1)).report().unwrap().structure,
    };
    let env = bounds_envelope(&report, &TimeGrid::new(1.0, 10).unwrap()).unwrap();
    let a = (delta_bar + k * k) / delta_bar;
    let expected0 = (1.0 + a) * e2 - a;
    assert!((env.upper[0] - expected0).abs() <= 1e-12 * expected0);
    assert!((env.upper[0] - k).abs() <= 1e-12 * k);
    assert_eq!(env.upper[10], 1.0);
    assert_eq!(env.lower[10], 0.1);
    assert!(env.upper.iter().all(|&u| u <= k + 1e-12));
    assert!((env.lower[0] - 0.1 * (-0.5f64).exp()).abs() < 1e-15);
}

#[test]
fn solutions_stay_inside_envelope() {
    let cones = [
        (Cone::FullSpace(1), Cone::FullSpace(1)),
        (Cone::NonnegativeOrthant(1), Cone::FullSpace(1)),
        (Cone::NonnegativeOrthant(1), Cone::NonnegativeOrthant(1)),
        (Cone::FullSpace(1), Cone::NonnegativeOrthant(1)),
    ];
    for (c1, c2) in cones {
        let p = valid_instance(200, c1, c2);
        let report = p.report().unwrap();
        assert!(report.flags.all(), "{:?}", report.flags.failed());
        let env = bounds_envelope(&report, &p.grid).unwrap();
        let sol = solve_ode(&p, &opts()).unwrap();
        for b in Branch::BOTH {
            let (out, node) = env.excursion(sol.p(b));
            assert!(out <= 1e-8, "{b:?} leaves the envelope by {out} at {node:?}");
            assert!(sol.p(b).iter().all(|&x| x > 0.0 && x <= report.k));
        }
    }
}

#[test]
fn blow_up_is_reported_with_node() {
    // dP/d(T-t) = P², from 1/2 at T = 3: explodes near t = 1
    let mut s = scalar_step(0);
    s.b2[0] = 0.1;
    s.r11[(0, 0)] = 1.0;
    s.r22[(0, 0)] = -0.01;
    let p = constant_problem(s, vec![], 3.0, 300, 0.5, Cone::FullSpace(1), Cone::FullSpace(1), InitialLaw::Point(1.0));
    match solve_ode(&p, &opts()).unwrap_err().root() {
        Error::BlowUp { node, threshold, .. } => {
            assert!((90..=101).contains(node), "node {node}");
            assert_eq!(*threshold, 10.0 * (10.0 * 0.5 * 3.0f64).exp());
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn node_adapted_coefficients_are_rejected() {
    let p = valid_instance(4, Cone::FullSpace(1), Cone::FullSpace(1));
    let key = NodeKey {
        step: 1,
        level: 0,
        jumps: vec![0],
    };
    let step = p.coeffs.at_step(1).clone();
    let mut q = p.clone();
    q.coeffs = p.coeffs.with_node_override(key, step).unwrap();
    assert!(matches!(solve_ode(&q, &opts()), Err(Error::InvalidArgument(_))));
}

#[test]
fn csv_and_json_round_trip() {
    let p = valid_instance(40, Cone::NonnegativeOrthant(1), Cone::FullSpace(1));
    let sol = solve_ode(&p, &opts()).unwrap();
    let mut buf = Vec::new();
    sol.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("t,P1,P2,L1,L2,G1_0,G2_0,pos_v1_0,pos_v2_0,neg_v1_0,neg_v2_0,H1,H2"));
    let table = SolutionTable::read_csv(buf.as_slice()).unwrap();
    assert_eq!(table, sol.table());
    let back = RiccatiSolution::from_json(&sol.to_json().unwrap()).unwrap();
    assert_eq!(back, sol);
}
