mod common;

use common::*;
use conelq::hamiltonian::{Branch, HamiltonianTerms, Snapshot};
use conelq::linalg::{Matrix, Vector};
use conelq::model::{Cone, InitialLaw, Problem, Sampler};
use conelq::riccati::{solve_ode, RiccatiOptions, RiccatiSolution};
use conelq::simulate::*;
use conelq::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn solve(p: &Problem) -> (RiccatiSolution, FeedbackLaw) {
    let sol = solve_ode(p, &RiccatiOptions::default()).unwrap();
    let law = extract_feedback(&sol).unwrap();
    (sol, law)
}

fn inert_problem(n_steps: usize, g: f64, x0: f64) -> Problem {
    let mut s = scalar_step(1);
    s.r11[(0, 0)] = 1.0;
    s.r22[(0, 0)] = -1.0;
    constant_problem(s, vec![2.0], 1.0, n_steps, g, Cone::FullSpace(1), Cone::FullSpace(1), InitialLaw::Point(x0))
}

fn coupled_instance(n_steps: usize, seed: u64, cone1: Cone, cone2: Cone) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_step(&mut rng, 1, true);
    constant_problem(s, vec![1.0], 1.0, n_steps, 0.5, cone1, cone2, InitialLaw::Point(1.0))
}

#[test]
fn zero_linear_terms_give_zero_gains() {
    let (_, law) = solve(&inert_problem(20, 0.7, 1.0));
    assert!(law.max_gain() == 0.0);
}

#[test]
fn decoupled_gains_match_clamped_saddle() {
    let mut s = scalar_step(0);
    s.r11[(0, 0)] = 2.0;
    s.r22[(0, 0)] = -2.0;
    s.s1[0] = -3.0;
    s.s2[0] = 1.0;
    let p = constant_problem(s, vec![], 1.0, 10, 1.0, Cone::FullSpace(1), Cone::FullSpace(1), InitialLaw::Point(1.0));
    let (_, law) = solve(&p);
    for i in 0..10 {
        assert!((law.plus[i].first[0] - 1.5).abs() < 1e-9);
        assert!((law.plus[i].second[0] - 0.5).abs() < 1e-9);
        assert!((law.minus[i].first[0] + 1.5).abs() < 1e-9);
        assert!((law.minus[i].second[0] + 0.5).abs() < 1e-9);
    }
}

#[test]
fn full_space_gains_are_classical_linear_feedback() {
    // Without jumps and with full-space cones the saddle is `v = −M⁻¹N`.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = random_step(&mut rng, 0, true);
    let p = constant_problem(s.clone(), vec![], 1.0, 50, 0.5, Cone::FullSpace(1), Cone::FullSpace(1), InitialLaw::Point(1.0));
    let (sol, law) = solve(&p);
    for i in [0, 17, 49] {
        let pk = sol.p1[i];
        let m = Matrix::from_row_slice(
            2,
            2,
            &[
                s.r11[(0, 0)] + pk * s.d1[0] * s.d1[0],
                s.r12[(0, 0)] + pk * s.d1[0] * s.d2[0],
                s.r12[(0, 0)] + pk * s.d1[0] * s.d2[0],
                s.r22[(0, 0)] + pk * s.d2[0] * s.d2[0],
            ],
        );
        let n = Vector::from_vec(vec![
            s.s1[0] + pk * (s.b1[0] + s.c * s.d1[0]),
            s.s2[0] + pk * (s.b2[0] + s.c * s.d2[0]),
        ]);
        let v = -m.lu().solve(&n).unwrap();
        assert!((law.plus[i].first[0] - v[0]).abs() < 1e-8, "step {i}");
        assert!((law.plus[i].second[0] - v[1]).abs() < 1e-8, "step {i}");
        assert!((law.minus[i].first[0] + v[0]).abs() < 1e-8, "step {i}");
        assert!((law.minus[i].second[0] + v[1]).abs() < 1e-8, "step {i}");
    }
}

#[test]
fn extracted_gains_lie_in_their_cones() {
    let nonneg = Cone::NonnegativeOrthant(1);
    let neg = Cone::finitely_generated(Matrix::from_element(1, 1, -1.0)).unwrap();
    let p = coupled_instance(40, 2, nonneg.clone(), neg.clone());
    let (_, law) = solve(&p);
    assert!(law.cone_violation(&nonneg, &neg).unwrap() <= 1e-9);
}

#[test]
fn lattice_feedback_needs_layer_constant_saddles() {
    use conelq::lattice::{build_lattice, solve_bsde_on_lattice, LatticeOptions};
    use conelq::model::NodeKey;
    let p = valid_instance(6, Cone::NonnegativeOrthant(1), Cone::FullSpace(1));
    let lat = build_lattice(&p.grid, &p.jumps).unwrap();
    let sol = solve_bsde_on_lattice(&p, &lat, &LatticeOptions::default()).unwrap();
    let law = extract_lattice_feedback(&sol).unwrap();
    assert_eq!(law.plus.len(), 6);
    assert_eq!(law.plus[2].first, sol.layer(2)[0].saddles.as_ref().unwrap()[0].v1);

    let mut q = p.clone();
    let mut s = q.coeffs.at_step(3).clone();
    s.s1[0] = 0.4;
    let key = NodeKey {
        step: 3,
        level: 1,
        jumps: vec![0],
    };
    q.coeffs = q.coeffs.with_node_override(key, s).unwrap();
    let sol = solve_bsde_on_lattice(&q, &lat, &LatticeOptions::default()).unwrap();
    assert!(matches!(extract_lattice_feedback(&sol), Err(Error::InvalidArgument(_))));
}

#[test]
fn zero_dynamics_keep_the_initial_state() {
    let p = inert_problem(50, 0.7, 1.3);
    let (_, law) = solve(&p);
    let r = simulate_paths(&p, &law, &SimOptions::new(20, 1).recording(20)).unwrap();
    assert_eq!(r.paths.len(), 20);
    assert!(r.paths.iter().all(|path| path.x.iter().all(|&x| x == 1.3)));
    // jumps happen but move nothing
    assert!(r.paths.iter().any(|path| !path.jumps.is_empty()));
}

#[test]
fn growth_rate_mean_matches_exponential() {
    let mut s = scalar_step(1);
    s.a = 1.0;
    s.c = 0.5;
    s.marks[0].e = 0.2;
    s.r11[(0, 0)] = 1.0;
    s.r22[(0, 0)] = -1.0;
    let n = 1000;
    let x0 = 0.8;
    let p = constant_problem(s, vec![1.0], 1.0, n, 0.0, Cone::zero(1), Cone::zero(1), InitialLaw::Point(x0));
    let zero = vec![Vector::zeros(1); n];
    let r = simulate_schedule(&p, &zero, &zero, &SimOptions::new(100_000, 11)).unwrap();
    let m = r.terminal_mean();
    // Euler reproduces the mean of the discrete recursion exactly
    let discrete = x0 * (1.0 + p.grid.dt()).powi(n as i32);
    assert!((m.mean - discrete).abs() <= 3.0 * m.stderr, "{m:?} vs {discrete}");
    let exact = x0 * 1f64.exp();
    assert!((m.mean - exact).abs() <= 3.0 * m.stderr + (exact - discrete), "{m:?} vs {exact}");
}

#[test]
fn deterministic_feedback_follows_the_ode() {
    let mut s = scalar_step(0);
    s.a = 0.4;
    s.b1[0] = 1.0;
    s.q = 1.0;
    s.r11[(0, 0)] = 1.0;
    s.r22[(0, 0)] = -1.0;
    let mut errs = Vec::new();
    for n in [100, 200] {
        let p = constant_problem(s.clone(), vec![], 1.0, n, 1.0, Cone::FullSpace(1), Cone::FullSpace(1), InitialLaw::Point(1.0));
        let (sol, law) = solve(&p);
        let r = simulate_paths(&p, &law, &SimOptions::new(1, 0).recording(1)).unwrap();
        // x' = (a + θ(t)) x with θ = −P(t); integrate by RK4 on the same P
        let dt = p.grid.dt();
        let mut x = 1.0;
        let mut worst = 0.0f64;
        for i in 0..n {
            let rate = |t_frac: f64| s.a - (sol.p1[i] * (1.0 - t_frac) + sol.p1[i + 1] * t_frac);
            let k1 = rate(0.0) * x;
            let k2 = rate(0.5) * (x + 0.5 * dt * k1);
            let k3 = rate(0.5) * (x + 0.5 * dt * k2);
            let k4 = rate(1.0) * (x + dt * k3);
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            worst = worst.max((r.paths[0].x[i + 1] - x).abs());
        }
        errs.push(worst);
    }
    assert!(errs[0] < 0.01, "{errs:?}");
    assert!(errs[0] / errs[1] > 1.8, "{errs:?}");
}

#[test]
fn controls_respect_cones_on_every_path() {
    let gen = Cone::finitely_generated(Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).unwrap();
    let mut s = conelq::model::StepCoefficients::zeros(2, 1, 1);
    s.a = 0.1;
    s.b1 = Vector::from_vec(vec![0.5, -0.3]);
    s.c = 0.3;
    s.d1 = Vector::from_vec(vec![0.2, 0.1]);
    s.q = 0.2;
    s.r11 = Matrix::identity(2, 2);
    s.r22[(0, 0)] = -2.0;
    s.b2[0] = 0.4;
    s.marks[0].f1 = Vector::from_vec(vec![0.2, -0.2]);
    s.marks[0].e = -0.2;
    let grid = conelq::model::TimeGrid::new(1.0, 40).unwrap();
    let coeffs = conelq::model::CoefficientSet::constant(s, 40, 0.6).unwrap();
    let jumps = conelq::model::JumpMeasure::new(vec![1.5]).unwrap();
    let p = Problem::new(
        grid,
        jumps,
        coeffs,
        gen.clone(),
        Cone::NonnegativeOrthant(1),
        InitialLaw::Sampler(Sampler::Normal { mean: 0.0, std: 1.0 }),
    )
    .unwrap();
    let (_, law) = solve(&p);
    let r = simulate_paths(&p, &law, &SimOptions::new(200, 3).recording(200)).unwrap();
    assert!(r.max_cone_violation <= 1e-9);
    for path in &r.paths {
        for (u1, u2) in path.u1.iter().zip(&path.u2) {
            assert!(gen.contains(&Vector::from_column_slice(u1), 1e-9).unwrap());
            assert!(u2[0] >= -1e-9);
        }
    }
}

#[test]
fn seeds_are_reproducible() {
    let p = valid_instance(50, Cone::NonnegativeOrthant(1), Cone::FullSpace(1))
        .with_initial(InitialLaw::Sampler(Sampler::Uniform { low: -1.0, high: 1.0 }));
    let (_, law) = solve(&p);
    let a = simulate_paths(&p, &law, &SimOptions::new(500, 9).recording(3)).unwrap();
    let b = simulate_paths(&p, &law, &SimOptions::new(500, 9).recording(3)).unwrap();
    let c = simulate_paths(&p, &law, &SimOptions::new(500, 10)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cost().mean.to_bits(), b.cost().mean.to_bits());
    assert_ne!(a.costs, c.costs);
    // paths are independent of how many paths are run
    let d = simulate_paths(&p, &law, &SimOptions::new(3, 9).recording(3)).unwrap();
    assert_eq!(d.paths, a.paths);
}

#[test]
fn coarsened_noise_matches_fine_noise() {
    let mut s = scalar_step(1);
    s.c = 1.0;
    s.marks[0].e = 1.0;
    s.r11[(0, 0)] = 1.0;
    s.r22[(0, 0)] = -1.0;
    let make = |n| constant_problem(s.clone(), vec![3.0], 1.0, n, 0.0, Cone::zero(1), Cone::zero(1), InitialLaw::Point(1.0));
    let (fine, coarse) = (make(20), make(10));
    let zero = |n| vec![Vector::zeros(1); n];
    let f = simulate_schedule(&fine, &zero(20), &zero(20), &SimOptions::new(50, 5).recording(50)).unwrap();
    let mut opts = SimOptions::new(50, 5).recording(50);
    opts.coarsen = 2;
    let c = simulate_schedule(&coarse, &zero(10), &zero(10), &opts).unwrap();
    for (pf, pc) in f.paths.iter().zip(&c.paths) {
        assert_eq!(pf.jumps.len(), pc.jumps.len());
        for (a, b) in pf.jumps.iter().zip(&pc.jumps) {
            assert_eq!(a.step / 2, b.step);
        }
    }
}

#[test]
fn non_finite_state_names_the_path() {
    let mut s = scalar_step(0);
    s.a = 1e300;
    s.r11[(0, 0)] = 1.0;
    s.r22[(0, 0)] = -1.0;
    let p = constant_problem(s, vec![], 1.0, 10, 0.0, Cone::zero(1), Cone::zero(1), InitialLaw::Point(1.0));
    let zero = vec![Vector::zeros(1); 10];
    let err = simulate_schedule(&p, &zero, &zero, &SimOptions::new(4, 0)).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)));
    assert!(err.to_string().contains("path 0"), "{err}");
}

#[test]
fn mismatched_schedules_and_laws_are_rejected() {
    let p = inert_problem(10, 1.0, 1.0);
    let short = vec![Vector::zeros(1); 9];
    let ok = vec![Vector::zeros(1); 10];
    assert!(matches!(simulate_schedule(&p, &short, &ok, &SimOptions::new(1, 0)), Err(Error::InvalidArgument(_))));
    let (_, law) = solve(&inert_problem(20, 1.0, 1.0));
    assert!(matches!(simulate_paths(&p, &law, &SimOptions::new(1, 0)), Err(Error::InvalidArgument(_))));
    let outside = vec![Vector::from_element(1, -1.0); 10];
    let q = constant_problem(scalar_step(0), vec![], 1.0, 10, 1.0, Cone::NonnegativeOrthant(1), Cone::FullSpace(1), InitialLaw::Point(1.0));
    let err = simulate_schedule(&q, &outside, &ok, &SimOptions::new(1, 0)).unwrap_err();
    assert!(err.to_string().contains("leaves the cone"), "{err}");
    assert!(matches!(simulate_paths(&p, &extract_feedback(&solve_ode(&p, &RiccatiOptions::default()).unwrap()).unwrap(), &SimOptions::new(0, 0)), Err(Error::InvalidArgument(_))));
}

#[test]
fn cost_of_a_constant_state() {
    let p = inert_problem(25, 0.7, 1.5);
    let (_, law) = solve(&p);
    let r = simulate_paths(&p, &law, &SimOptions::new(10, 2).recording(10)).unwrap();
    let e = r.cost();
    assert!((e.mean - 0.7 * 1.5 * 1.5).abs() < 1e-14);
    assert!(e.stderr < 1e-15);
    let again = evaluate_cost(&r, &p, Quadrature::Left).unwrap();
    assert_eq!(again.mean, e.mean);
}

#[test]
fn cost_of_a_constant_control() {
    let mut s = conelq::model::StepCoefficients::zeros(2, 1, 0);
    s.r11 = Matrix::identity(2, 2);
    s.r22[(0, 0)] = -1.0;
    let grid = conelq::model::TimeGrid::new(2.0, 40).unwrap();
    let coeffs = conelq::model::CoefficientSet::constant(s, 40, 0.0).unwrap();
    let p = Problem::new(
        grid,
        conelq::model::JumpMeasure::none(),
        coeffs,
        Cone::FullSpace(2),
        Cone::FullSpace(1),
        InitialLaw::Point(1.0),
    )
    .unwrap();
    let v = Vector::from_vec(vec![0.3, -0.4]);
    let r = simulate_schedule(&p, &vec![v.clone(); 40], &vec![Vector::zeros(1); 40], &SimOptions::new(3, 0).recording(3)).unwrap();
    assert!((r.cost().mean - 2.0 * v.norm_squared()).abs() < 1e-14);
    assert!((evaluate_cost(&r, &p, Quadrature::Trapezoid).unwrap().mean - 2.0 * v.norm_squared()).abs() < 1e-14);
}

#[test]
fn left_and_trapezoid_costs_agree_to_first_order() {
    let mut gaps = Vec::new();
    for n in [50, 100, 200] {
        let p = coupled_instance(n, 6, Cone::FullSpace(1), Cone::FullSpace(1));
        let (_, law) = solve(&p);
        let r = simulate_paths(&p, &law, &SimOptions::new(400, 1).recording(400)).unwrap();
        let left = evaluate_cost(&r, &p, Quadrature::Left).unwrap();
        assert_eq!(left.mean.to_bits(), r.cost().mean.to_bits());
        let trap = evaluate_cost(&r, &p, Quadrature::Trapezoid).unwrap();
        gaps.push((left.mean - trap.mean).abs());
    }
    assert!(gaps[2] < gaps[0] / 2.5, "{gaps:?}");
    assert!(gaps[2] < 0.01, "{gaps:?}");
}

#[test]
fn value_formula_trivial_instance_is_exact() {
    let p = inert_problem(30, 0.7, 2.0);
    let (sol, law) = solve(&p);
    let r = verify_value_formula(&p, &sol, &law, &SimOptions::new(50, 1)).unwrap();
    assert!((r.cost.mean - 0.7 * 4.0).abs() < 1e-14);
    assert!((r.target - 0.7 * 4.0).abs() < 1e-14);
    assert!(r.pass);
}

#[test]
fn value_formula_on_the_oracle_instance() {
    let p = riccati_oracle(1000);
    let (sol, law) = solve(&p);
    let r = verify_value_formula(&p, &sol, &law, &SimOptions::new(2_000, 42)).unwrap();
    assert!((r.target - 0.5).abs() < 1e-8);
    assert!(r.pass, "{r:?}");
    assert!((r.cost.mean - 0.5).abs() < 1e-12);
}

#[test]
fn value_formula_on_a_noisy_instance() {
    let p = valid_instance(200, Cone::NonnegativeOrthant(1), Cone::FullSpace(1))
        .with_initial(InitialLaw::Sampler(Sampler::Normal { mean: 0.2, std: 1.0 }));
    let (sol, law) = solve(&p);
    let r = verify_value_formula(&p, &sol, &law, &SimOptions::new(20_000, 42)).unwrap();
    assert!(r.pass, "{r:?}");
    let bias = euler_bias(&p, &RiccatiOptions::default(), &SimOptions::new(5_000, 3)).unwrap();
    assert!(bias < 0.01, "bias {bias}");
    let with = r.clone().with_bias(bias);
    assert!(with.z_with_bias.unwrap().abs() <= r.z.abs());
}

#[test]
fn negative_start_uses_the_second_value() {
    let p = valid_instance(100, Cone::NonnegativeOrthant(1), Cone::NonnegativeOrthant(1))
        .with_initial(InitialLaw::Point(-1.2));
    let (sol, law) = solve(&p);
    assert!((sol.p1[0] - sol.p2[0]).abs() > 1e-3);
    let r = verify_value_formula(&p, &sol, &law, &SimOptions::new(200, 1)).unwrap();
    assert!((r.target - sol.p2[0] * 1.44).abs() < 1e-14);
    assert!((r.target - sol.p1[0] * 1.44).abs() > 1e-3);
}

fn saddle_opts() -> SimOptions {
    SimOptions::new(4_000, 17)
}

#[test]
fn saddle_law_as_its_own_perturbation_gives_zero() {
    let p = valid_instance(100, Cone::NonnegativeOrthant(1), Cone::FullSpace(1));
    let (_, law) = solve(&p);
    let same = [
        Perturbation {
            name: "self 1".into(),
            player: Player::First,
            rule: PlayerRule::feedback(&law, Player::First, 1.0),
        },
        Perturbation {
            name: "self 2".into(),
            player: Player::Second,
            rule: PlayerRule::feedback(&law, Player::Second, 1.0),
        },
    ];
    let r = verify_saddle(&p, &law, &same, &saddle_opts()).unwrap();
    for a in &r.arms {
        assert_eq!(a.diff.mean, 0.0);
        assert!(a.pass);
    }
}

#[test]
fn saddle_corpus_passes_and_corruption_fails() {
    for (seed, p) in [
        (1, valid_instance(100, Cone::NonnegativeOrthant(1), Cone::FullSpace(1))),
        (2, coupled_instance(100, 8, Cone::FullSpace(1), Cone::NonnegativeOrthant(1))),
    ] {
        let (_, law) = solve(&p);
        let corpus = perturbation_corpus(&p, &law, seed).unwrap();
        assert!(corpus.len() >= 12);
        let r = verify_saddle(&p, &law, &corpus, &saddle_opts()).unwrap();
        for a in &r.arms {
            assert!(a.pass, "{} {:?}", a.name, a.diff);
        }
        let bad = law.map_first(|v| v * 3.0 + p.cone1.sample(&mut ChaCha8Rng::seed_from_u64(0), 1.0));
        let corpus = perturbation_corpus(&p, &bad, seed).unwrap();
        let r = verify_saddle(&p, &bad, &corpus, &saddle_opts()).unwrap();
        assert!(!r.pass);
    }
}

#[test]
fn maximiser_switching_off_cannot_gain() {
    let p = coupled_instance(100, 3, Cone::FullSpace(1), Cone::FullSpace(1));
    let (_, law) = solve(&p);
    let off = Perturbation {
        name: "u2 = 0".into(),
        player: Player::Second,
        rule: PlayerRule::zero(1),
    };
    let r = verify_saddle(&p, &law, &[off], &saddle_opts()).unwrap();
    assert!(r.arms[0].diff.mean <= 3.0 * r.arms[0].diff.stderr);
}

#[test]
fn shifted_minimiser_grows_quadratically() {
    let p = coupled_instance(100, 5, Cone::FullSpace(1), Cone::FullSpace(1));
    let (_, law) = solve(&p);
    let n = p.grid.n_steps();
    let dir = PlayerRule::schedule(&vec![Vector::from_element(1, 1.0); n]).unwrap();
    let frozen = PlayerRule::frozen(1);
    let eps = [0.05, 0.1, 0.2, 0.4];
    let corpus: Vec<Perturbation> = eps
        .iter()
        .map(|&e| Perturbation {
            name: format!("eps {e}"),
            player: Player::First,
            rule: PlayerRule::linear(&[(1.0, &frozen), (e, &dir)]).unwrap(),
        })
        .collect();
    let r = verify_saddle(&p, &law, &corpus, &saddle_opts()).unwrap();
    let diffs: Vec<f64> = r.arms.iter().map(|a| a.diff.mean).collect();
    assert!(diffs.iter().all(|&d| d > 0.0), "{diffs:?}");
    let xs: Vec<f64> = eps.iter().map(|e: &f64| e.ln()).collect();
    let ys: Vec<f64> = diffs.iter().map(|d| d.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((1.8..=2.2).contains(&slope), "slope {slope}, {diffs:?}");
}

#[test]
fn psi_vanishes_at_the_origin() {
    let p = valid_instance(20, Cone::NonnegativeOrthant(1), Cone::FullSpace(1));
    let (sol, _) = solve(&p);
    let z = Vector::zeros(1);
    assert_eq!(psi_eval(3, 0.0, &z, &z, &sol, &p).unwrap(), 0.0);
}

#[test]
fn psi_is_the_scaled_hamiltonian_gap() {
    // Independent evaluation: X² (H_k(v) − H_k*) with u = v|X|.
    let p = coupled_instance(30, 12, Cone::NonnegativeOrthant(1), Cone::FullSpace(1));
    let (sol, _) = solve(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for step in [0, 11, 30] {
        let snap = Snapshot::deterministic(sol.p1[step], sol.p2[step], 1);
        let terms = HamiltonianTerms::from_step(step, p.coeffs.at_step(step), &p.jumps, &snap).unwrap();
        for x in [-1.7, -0.3, 0.4, 2.0] {
            let v1 = p.cone1.sample(&mut rng, 1.0);
            let v2 = p.cone2.sample(&mut rng, 1.0);
            let branch = if x > 0.0 { Branch::Positive } else { Branch::Negative };
            let expected = x * x * (terms.eval(branch, &v1, &v2).unwrap() - sol.saddles[step][branch.slot()].value);
            let got = psi_eval(step, x, &(&v1 * x.abs()), &(&v2 * x.abs()), &sol, &p).unwrap();
            assert!((got - expected).abs() < 1e-10 * (1.0 + expected.abs()), "{got} vs {expected}");
        }
    }
}

#[test]
fn psi_identity_and_one_sided_signs() {
    for p in [
        valid_instance(100, Cone::NonnegativeOrthant(1), Cone::FullSpace(1)),
        coupled_instance(100, 21, Cone::NonnegativeOrthant(1), Cone::NonnegativeOrthant(1)),
        coupled_instance(100, 22, Cone::FullSpace(1), Cone::finitely_generated(Matrix::from_element(1, 1, -1.0)).unwrap()),
    ] {
        let (sol, _) = solve(&p);
        let r = verify_psi_identity(&sol, &p, &PSI_MESH, 3, 5, 1e-9).unwrap();
        assert!(r.points >= 700);
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn psi_rejects_bad_dimensions() {
    let p = valid_instance(10, Cone::FullSpace(1), Cone::FullSpace(1));
    let (sol, _) = solve(&p);
    let z2 = Vector::zeros(2);
    let z1 = Vector::zeros(1);
    assert!(psi_eval(0, 1.0, &z2, &z1, &sol, &p).is_err());
    assert!(psi_eval(11, 1.0, &z1, &z1, &sol, &p).is_err());
}

fn schedules(p: &Problem, seed: u64, cone: &Cone) -> (Vec<Vector>, Vec<Vector>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.grid.n_steps();
    (random_schedule(&mut rng, cone, n, 5, 1.0), random_schedule(&mut rng, cone, n, 3, 1.0))
}

#[test]
fn convexity_identity_degenerate_cases_are_exact() {
    let p = valid_instance(50, Cone::NonnegativeOrthant(1), Cone::FullSpace(1));
    let (a, b) = schedules(&p, 1, &p.cone1);
    let other = random_schedule(&mut ChaCha8Rng::seed_from_u64(2), &p.cone2, 50, 2, 0.5);
    let opts = SimOptions::new(500, 4);
    for lambda in [0.0, 1.0] {
        let r = verify_convexity_identity(&p, Player::First, &a, &b, &other, lambda, &opts).unwrap();
        assert_eq!(r.residual.mean, 0.0, "lambda {lambda}");
    }
    let r = verify_convexity_identity(&p, Player::First, &a, &a, &other, 0.3, &opts).unwrap();
    assert_eq!(r.difference_cost.mean, 0.0);
    assert!(r.residual.mean.abs() < 1e-14);
    assert!(r.margin.is_none());
}

#[test]
fn convexity_identity_and_uniform_margins() {
    for (k, p) in [
        valid_instance(100, Cone::NonnegativeOrthant(1), Cone::FullSpace(1)),
        coupled_instance(100, 31, Cone::FullSpace(1), Cone::NonnegativeOrthant(1)),
    ]
    .into_iter()
    .enumerate()
    {
        for (player, cone, other_cone) in [(Player::First, &p.cone1, &p.cone2), (Player::Second, &p.cone2, &p.cone1)] {
            let (a, b) = schedules(&p, 10 + k as u64, cone);
            let other = random_schedule(&mut ChaCha8Rng::seed_from_u64(3), other_cone, 100, 4, 0.5);
            let r = verify_convexity_identity(&p, player, &a, &b, &other, 0.5, &SimOptions::new(4_000, 8)).unwrap();
            assert!(r.pass, "{r:?}");
            assert!(r.margin.unwrap() > 0.0, "{r:?}");
        }
    }
}

#[test]
fn stationarity_quotients_have_the_right_sign() {
    let p = coupled_instance(100, 41, Cone::NonnegativeOrthant(1), Cone::FullSpace(1));
    let (_, law) = solve(&p);
    let opts = SimOptions::new(4_000, 2);
    let n = p.grid.n_steps();
    // v = u* gives a zero quotient
    let same = PlayerRule::feedback(&law, Player::First, 1.0);
    let r = directional_stationarity(&p, &law, Player::First, &same, 0.5, &opts).unwrap();
    assert!(r.quotient.mean.abs() < 1e-12);

    let v1 = PlayerRule::schedule(&vec![Vector::from_element(1, 0.8); n]).unwrap();
    let small = directional_stationarity(&p, &law, Player::First, &v1, 0.1, &opts).unwrap();
    let large = directional_stationarity(&p, &law, Player::First, &v1, 0.5, &opts).unwrap();
    assert!(small.pass && large.pass);
    assert!(large.quotient.mean > small.quotient.mean);

    let v2 = PlayerRule::schedule(&vec![Vector::from_element(1, -0.8); n]).unwrap();
    let r = directional_stationarity(&p, &law, Player::Second, &v2, 0.2, &opts).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.quotient.mean < 0.0);

    assert!(directional_stationarity(&p, &law, Player::First, &v1, 0.0, &opts).is_err());
}
