mod common;

use common::{active_set_oracle, random_pd_qp, to_problem};
use contour_opt::linalg::Matrix;
use contour_opt::qpsolver::{solve, solve_sequence, QpProblem, SolveStatus, SolverOptions};
use contour_opt::scalar::norm_inf;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stationarity(p: &QpProblem, r: &contour_opt::qpsolver::SolveResult) -> f64 {
    let mut g = p.q.mul_vec(&r.x);
    for (gi, ci) in g.iter_mut().zip(&p.c) {
        *gi += ci;
    }
    let e = p.a_eq.tr_mul_vec(&r.y_eq);
    let i = p.a_in.tr_mul_vec(&r.y_in);
    for j in 0..g.len() {
        g[j] += e[j] + i[j] + r.y_box[j];
    }
    norm_inf(&g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_active_set_enumeration(seed in any::<u64>(), n in 1usize..=6, m in 0usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, c, g, h) = random_pd_qp(&mut rng, n, m);
        let (xo, obj) = active_set_oracle(&q, &c, &g, &h).expect("feasible by construction");
        let p = to_problem(&q, &c, &g, &h);
        let r = solve(&p, &SolverOptions::default()).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        prop_assert!((r.objective - obj).abs() <= 1e-5, "solver {} oracle {}", r.objective, obj);
        for (a, b) in r.x.iter().zip(&xo) {
            prop_assert!((a - b).abs() <= 1e-5);
        }
        prop_assert!(r.y_in.iter().all(|l| *l >= 0.0));
        prop_assert!(stationarity(&p, &r) <= 1e-6 * (1.0 + norm_inf(&p.c)));
        prop_assert!(r.primal_residual <= 1e-6);
        prop_assert!(r.complementarity <= 1e-6);
    }

    #[test]
    fn adding_rows_never_lowers_the_minimum(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=10, keep in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, c, g, h) = random_pd_qp(&mut rng, n, m);
        let k = keep.min(m);
        let small = solve(to_problem(&q, &c, &g[..k], &h[..k]), &SolverOptions::default()).unwrap();
        let big = solve(to_problem(&q, &c, &g, &h), &SolverOptions::default()).unwrap();
        prop_assert!(small.objective <= big.objective + 1e-7 * (1.0 + big.objective.abs()));
    }

    #[test]
    fn argmin_is_scale_invariant(seed in any::<u64>(), n in 1usize..=5, m in 0usize..=10, s in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, c, g, h) = random_pd_qp(&mut rng, n, m);
        let base = solve(to_problem(&q, &c, &g, &h), &SolverOptions::default()).unwrap();
        let qs: Vec<Vec<f64>> = q.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
        let cs: Vec<f64> = c.iter().map(|v| v * s).collect();
        let scaled = solve(to_problem(&qs, &cs, &g, &h), &SolverOptions::default()).unwrap();
        for (a, b) in base.x.iter().zip(&scaled.x) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn warm_started_sequence_matches_cold(seed in any::<u64>(), n in 1usize..=5, m in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, c, g, h) = random_pd_qp(&mut rng, n, m);
        let family: Vec<QpProblem> = (0..m)
            .map(|drop| {
                let gg: Vec<Vec<f64>> = g.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, r)| r.clone()).collect();
                let hh: Vec<f64> = h.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, v)| *v).collect();
                to_problem(&q, &c, &gg, &hh)
            })
            .collect();
        let warm = solve_sequence(&family, &SolverOptions::default()).unwrap();
        for (p, w) in family.iter().zip(&warm) {
            let cold = solve(p, &SolverOptions::default()).unwrap();
            prop_assert!((cold.objective - w.objective).abs() <= 1e-7 * (1.0 + cold.objective.abs()));
        }
    }
}

#[test]
fn same_input_same_bits() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (q, c, g, h) = random_pd_qp(&mut rng, 5, 12);
    let p = to_problem(&q, &c, &g, &h);
    let a = solve(&p, &SolverOptions::default()).unwrap();
    let b = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn degenerate_lp_with_many_tight_rows() {
    // eight constraints pass through the optimum (1, 1)
    let mut p = QpProblem::new(2);
    p.c = vec![-1.0, -1.0];
    let mut rows = Vec::new();
    let mut h = Vec::new();
    for k in 0..8 {
        let t = 0.1 + 0.15 * k as f64;
        rows.push(vec![t, 1.0 / t]);
        h.push(t + 1.0 / t);
    }
    p.a_in = Matrix::from_rows(&rows);
    p.h_in = h;
    p.lower = vec![0.0, 0.0];
    let r = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.objective + 2.0).abs() < 1e-7, "{}", r.objective);
}

#[test]
fn tall_stacked_program() {
    // 20k rows of which a handful bind
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    use rand::Rng;
    let n = 8;
    let mut p = QpProblem::new(n);
    p.q = Matrix::identity(n);
    p.c = (0..n).map(|_| rng.random_range(-10.0..-5.0)).collect();
    let mut rows = Vec::new();
    let mut h = Vec::new();
    for _ in 0..20_000 {
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        h.push(1.0 + r.iter().sum::<f64>() * rng.random_range(1.0..3.0));
        rows.push(r);
    }
    p.a_in = Matrix::from_rows(&rows);
    p.h_in = h;
    let r = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(stationarity(&p, &r) <= 1e-6 * (1.0 + norm_inf(&p.c)));
}
