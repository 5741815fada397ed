//! Gaussian prior learning against numerical-minimizer and finite-difference
//! oracles, plus convergence and recovery behavior.

mod common;

use common::*;
use nalgebra::DVector;
use priorlearn::bound::{bound_classification, bound_regression};
use priorlearn::plg::{
    plg_objective_grad, solve_plg_classification, solve_plg_regression, CgConfig,
};
use priorlearn::ridge::{fit_ridge_operator, fit_with_prior};
use priorlearn::task::{
    generate_synthetic, BoundConfig, SyntheticMode, SyntheticSpec, TaskDataset, TaskKind,
};

fn regression_tasks(seed: u64, n: usize, d: usize, m: usize) -> Vec<TaskDataset> {
    let mut r = rng(seed);
    (0..n).map(|i| random_task(&mut r, &format!("t{i}"), d, m, TaskKind::Regression)).collect()
}

#[test]
fn closed_form_matches_numerical_minimizer_of_the_bound() {
    for trial in 0..3u64 {
        let tasks = regression_tasks(300 + trial, 3, 3 + trial as usize, 8);
        let cfg = BoundConfig::new(1.0 + trial as f64, 0.05, 2.0).unwrap();
        let got = solve_plg_regression(&tasks, &cfg).unwrap();

        // Oracle: extract every (A_i, b_i) by numerical minimization only,
        // then minimize the reassembled bound numerically as well.
        let maps: Vec<_> = tasks.iter().map(|t| oracle_affine_map(t, cfg.c)).collect();
        let f = |w: &DVector<f64>| brute_regression_bound_objective(&tasks, &maps, cfg.sigma, w);
        let want = minimize_numerically(&f, DVector::zeros(tasks[0].dim()), 50_000, 1e-12);
        let err = relative_error(&got.w_q, &want);
        assert!(err < 1e-5, "trial {trial}: relative error {err}");
    }
}

#[test]
fn closed_form_is_stationary_for_fd_gradient_of_bound_total() {
    let tasks = regression_tasks(310, 4, 5, 10);
    let cfg = BoundConfig::new(2.0, 0.05, 1.5).unwrap();
    let sol = solve_plg_regression(&tasks, &cfg).unwrap();
    let ops: Vec<_> = tasks.iter().map(|t| fit_ridge_operator(t, cfg.c).unwrap()).collect();
    let f = |w: &DVector<f64>| bound_regression(&tasks, &ops, w, &cfg).unwrap().total;
    let g = finite_diff_grad(&f, &sol.w_q, 1e-6);
    assert!(
        g.norm() <= 1e-6 * (1.0 + sol.w_q.norm()),
        "fd gradient at solution has norm {}",
        g.norm()
    );
}

#[test]
fn classification_gradient_matches_finite_differences() {
    let mut r = rng(311);
    for trial in 0..5 {
        let d = 6;
        let tasks: Vec<TaskDataset> = (0..3)
            .map(|i| random_task(&mut r, &format!("t{i}"), d, 9 + i, TaskKind::Classification))
            .collect();
        let cfg = BoundConfig::new(1.0, 0.05, 1.0 + trial as f64).unwrap();
        let ops: Vec<_> = tasks.iter().map(|t| fit_ridge_operator(t, cfg.c).unwrap()).collect();
        let w = normal_vec(&mut r, d);
        let (_, grad) = plg_objective_grad(&w, &tasks, &ops, &cfg).unwrap();
        let f = |v: &DVector<f64>| plg_objective_grad(v, &tasks, &ops, &cfg).unwrap().0;
        let fd = finite_diff_grad(&f, &w, 1e-6);
        let rel = relative_error(&grad, &fd);
        assert!(rel < 1e-4, "trial {trial}: relative error {rel}");
    }
}

#[test]
fn objective_value_matches_relaxed_bound_total() {
    let mut r = rng(312);
    let tasks: Vec<TaskDataset> =
        (0..3).map(|i| random_task(&mut r, &format!("t{i}"), 4, 7, TaskKind::Classification)).collect();
    let cfg = BoundConfig::new(1.0, 0.05, 2.0).unwrap();
    let ops: Vec<_> = tasks.iter().map(|t| fit_ridge_operator(t, cfg.c).unwrap()).collect();
    let w = normal_vec(&mut r, 4);
    let (value, _) = plg_objective_grad(&w, &tasks, &ops, &cfg).unwrap();
    let report = bound_classification(&tasks, &ops, &w, &cfg, true).unwrap();
    assert!(
        (value - report.total).abs() <= 1e-10 * report.total.abs(),
        "objective {value} vs bound total {}",
        report.total
    );
}

#[test]
fn cg_never_exceeds_origin_objective() {
    for seed in 0..20u64 {
        let mut r = rng(400 + seed);
        let tasks: Vec<TaskDataset> = (0..4)
            .map(|i| random_task(&mut r, &format!("t{i}"), 5, 8, TaskKind::Classification))
            .collect();
        let cfg = BoundConfig::new(1.0, 0.05, 1.0).unwrap();
        let ops: Vec<_> = tasks.iter().map(|t| fit_ridge_operator(t, cfg.c).unwrap()).collect();
        let (sol, report) = solve_plg_classification(&tasks, &cfg, &CgConfig::default()).unwrap();
        let (at_zero, _) = plg_objective_grad(&DVector::zeros(5), &tasks, &ops, &cfg).unwrap();
        assert!(
            report.final_value <= at_zero + 1e-12,
            "seed {seed}: final {} > origin {at_zero}",
            report.final_value
        );
        let (at_sol, _) = plg_objective_grad(&sol.w_q, &tasks, &ops, &cfg).unwrap();
        assert!((at_sol - report.final_value).abs() <= 1e-10 * at_sol.abs());
    }
}

#[test]
fn steepest_descent_fallback_reaches_same_objective() {
    let mut r = rng(401);
    let tasks: Vec<TaskDataset> =
        (0..4).map(|i| random_task(&mut r, &format!("t{i}"), 5, 10, TaskKind::Classification)).collect();
    let cfg = BoundConfig::new(1.0, 0.05, 1.0).unwrap();
    let cg = CgConfig::default();
    let sd = CgConfig {
        restart_every: Some(1),
        max_iters: 4000,
        ..CgConfig::default()
    };
    let (_, rep_cg) = solve_plg_classification(&tasks, &cfg, &cg).unwrap();
    let (_, rep_sd) = solve_plg_classification(&tasks, &cfg, &sd).unwrap();
    assert!(
        (rep_cg.final_value - rep_sd.final_value).abs() < 1e-4,
        "cg {} vs steepest descent {}",
        rep_cg.final_value,
        rep_sd.final_value
    );
}

#[test]
fn stationary_at_origin_returns_origin() {
    // A task with no data signal: A = I, b = 0 everywhere, so the objective
    // decomposes into the strictly convex quadratic (minimum 0) plus flat
    // margins; the gradient at 0 comes only from the Φ_cvx slopes, which
    // cancel for symmetric labels.
    let x = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.5, -0.5]);
    let y = nalgebra::DVector::from_row_slice(&[1.0, 1.0]);
    let t = TaskDataset::new("s", x, y, TaskKind::Classification).unwrap();
    let cfg = BoundConfig::new(1.0, 0.05, 1.0).unwrap();
    let ops = vec![fit_ridge_operator(&t, cfg.c).unwrap()];
    let (_, g) = plg_objective_grad(&DVector::zeros(2), std::slice::from_ref(&t), &ops, &cfg).unwrap();
    // mirrored samples with equal labels produce opposite margin gradients
    assert!(g.norm() < 1e-12, "gradient at origin {}", g.norm());
    let (sol, rep) = solve_plg_classification(&[t], &cfg, &CgConfig::default()).unwrap();
    assert_eq!(rep.iterations, 0);
    assert_eq!(sol.w_q, DVector::zeros(2));
}

#[test]
fn convexity_along_random_segments() {
    let mut r = rng(402);
    let tasks: Vec<TaskDataset> =
        (0..3).map(|i| random_task(&mut r, &format!("t{i}"), 4, 8, TaskKind::Classification)).collect();
    let cfg = BoundConfig::new(1.0, 0.05, 1.0).unwrap();
    let ops: Vec<_> = tasks.iter().map(|t| fit_ridge_operator(t, cfg.c).unwrap()).collect();
    for _ in 0..50 {
        let a = normal_vec(&mut r, 4) * 2.0;
        let b = normal_vec(&mut r, 4) * 2.0;
        let mid = (&a + &b) * 0.5;
        let fa = plg_objective_grad(&a, &tasks, &ops, &cfg).unwrap().0;
        let fb = plg_objective_grad(&b, &tasks, &ops, &cfg).unwrap().0;
        let fm = plg_objective_grad(&mid, &tasks, &ops, &cfg).unwrap().0;
        assert!(fm <= 0.5 * (fa + fb) + 1e-12);
    }
}

#[test]
fn larger_sigma_never_hurts_the_optimizable_part() {
    // The w-dependent part of the bound is pointwise nonincreasing in σ, so
    // its minimum is too. The σ-dependent constant is excluded: it reflects
    // hyperprior spread, not fit quality.
    let tasks = regression_tasks(403, 5, 4, 12);
    let optimized = |sigma: f64| {
        let cfg = BoundConfig::new(sigma, 0.05, 2.0).unwrap();
        let sol = solve_plg_regression(&tasks, &cfg).unwrap();
        let ops: Vec<_> = tasks.iter().map(|t| fit_ridge_operator(t, cfg.c).unwrap()).collect();
        let rep = bound_regression(&tasks, &ops, &sol.w_q, &cfg).unwrap();
        rep.total - rep.delta_const
    };
    let narrow = optimized(1.0);
    let wide = optimized(10.0);
    assert!(
        wide <= narrow + 1e-12,
        "minimized objective grew with sigma: {narrow} -> {wide}"
    );
}

#[test]
fn prototype_recovery_beats_origin() {
    let spec = SyntheticSpec {
        d: 10,
        k: 0,
        n_tasks: 50,
        n_heldout: 0,
        m_per_task: 20,
        noise_std: 0.1,
        mode: SyntheticMode::SharedPrototype,
        kind: TaskKind::Regression,
        seed: 404,
        prototype_noise_var: 0.1,
        label_flip_prob: 0.0,
    };
    let (env, truth) = generate_synthetic(&spec).unwrap();
    let w_star = truth.prototype().unwrap();
    let cfg = BoundConfig::new(1.0, 0.05, 10.0).unwrap();
    let sol = solve_plg_regression(env.observed(), &cfg).unwrap();
    assert!(
        (&sol.w_q - w_star).norm() < w_star.norm(),
        "learned prior no closer to prototype than origin"
    );
}

#[test]
fn learned_prior_transfers_better_than_zero_prior() {
    // On prototype data, ridge with the learned prior must beat independent
    // ridge on fresh tasks (both using the same C).
    let spec = SyntheticSpec {
        d: 10,
        k: 0,
        n_tasks: 50,
        n_heldout: 10,
        m_per_task: 20,
        noise_std: 0.1,
        mode: SyntheticMode::SharedPrototype,
        kind: TaskKind::Regression,
        seed: 405,
        prototype_noise_var: 0.1,
        label_flip_prob: 0.0,
    };
    let (env, _) = generate_synthetic(&spec).unwrap();
    let cfg = BoundConfig::new(1.0, 0.05, 10.0).unwrap();
    let sol = solve_plg_regression(env.observed(), &cfg).unwrap();
    let zero = DVector::zeros(10);
    let mut plg_mse = 0.0;
    let mut ind_mse = 0.0;
    for t in env.heldout() {
        let train_idx: Vec<usize> = (0..t.len() / 2).collect();
        let test_idx: Vec<usize> = (t.len() / 2..t.len()).collect();
        let train = t.subset(&train_idx, "tr").unwrap();
        let test = t.subset(&test_idx, "te").unwrap();
        for (prior, acc) in [(&sol.w_q, &mut plg_mse), (&zero, &mut ind_mse)] {
            let w = fit_with_prior(&train, cfg.c, prior).unwrap();
            let mut mse = 0.0;
            for j in 0..test.len() {
                let e = test.y()[j] - test.x().column(j).dot(&w);
                mse += e * e;
            }
            *acc += mse / test.len() as f64;
        }
    }
    assert!(
        plg_mse < ind_mse,
        "learned prior mse {plg_mse} not better than independent {ind_mse}"
    );
}
