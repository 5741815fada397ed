//! Shared verification utilities for the integration suites: an independent
//! numerical minimizer, finite-difference gradients, Monte-Carlo estimators,
//! and random problem instances. Everything here recomputes objectives with
//! plain loops; nothing reuses the library's closed forms.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use priorlearn::task::{TaskDataset, TaskKind};

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha12Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn normal_mat(rng: &mut ChaCha12Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn random_orthonormal(rng: &mut ChaCha12Rng, d: usize, k: usize) -> DMatrix<f64> {
    normal_mat(rng, d, k).qr().q()
}

/// Random task with Gaussian features; classification labels follow a random
/// separator with 10% flips so both classes appear with high probability.
pub fn random_task(rng: &mut ChaCha12Rng, id: &str, d: usize, m: usize, kind: TaskKind) -> TaskDataset {
    let x = normal_mat(rng, d, m);
    let w = normal_vec(rng, d);
    let y = DVector::from_fn(m, |j, _| {
        let margin = w.dot(&x.column(j).clone_owned());
        match kind {
            TaskKind::Regression => {
                let noise: f64 = StandardNormal.sample(rng);
                margin + 0.1 * noise
            }
            TaskKind::Classification => {
                let label = if margin >= 0.0 { 1.0 } else { -1.0 };
                if rng.random::<f64>() < 0.1 {
                    -label
                } else {
                    label
                }
            }
        }
    });
    TaskDataset::new(id, x, y, kind).unwrap()
}

/// Minimize a smooth convex function by steepest descent with a
/// quadratic-fit line search; gradients come from central differences of the
/// objective, so the oracle never touches analytic derivative code.
pub fn minimize_numerically<F>(f: &F, x0: DVector<f64>, max_iters: usize, grad_tol: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut x = x0;
    for _ in 0..max_iters {
        let g = finite_diff_grad(f, &x, 1e-6);
        let gnorm = g.norm();
        if gnorm <= grad_tol {
            break;
        }
        let d = -&g / gnorm;
        // Fit the 1-D restriction with three probes; exact for quadratics.
        let s = 1e-4;
        let f0 = f(&x);
        let fp = f(&(&x + &d * s));
        let fm = f(&(&x - &d * s));
        let slope = (fp - fm) / (2.0 * s);
        let curv = (fp - 2.0 * f0 + fm) / (s * s);
        let mut t = if curv > 0.0 { -slope / curv } else { s };
        // Safeguard: backtrack until the step actually decreases f.
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x + &d * t;
            if f(&cand) < f0 {
                x = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

/// Central finite-difference gradient of a scalar function of a vector.
pub fn finite_diff_grad<F>(f: &F, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

/// Central finite-difference gradient of a scalar function of a matrix.
pub fn finite_diff_grad_mat<F>(f: &F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[(r, c)] += h;
            xm[(r, c)] -= h;
            g[(r, c)] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
    }
    g
}

pub fn relative_error(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    (got - want).norm() / want.norm().max(1e-8)
}

pub fn relative_error_mat(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).norm() / want.norm().max(1e-8)
}

/// Within-task objective ‖w − w_p‖² + (C/m) Σ_j (y_j − ⟨w, x_j⟩)²,
/// recomputed with plain loops.
pub fn brute_ridge_objective(task: &TaskDataset, c: f64, w_p: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let mut fit = 0.0;
    for j in 0..task.len() {
        let pred: f64 = (0..task.dim()).map(|r| w[r] * task.x()[(r, j)]).sum();
        fit += (task.y()[j] - pred) * (task.y()[j] - pred);
    }
    (w - w_p).norm_squared() + c / task.len() as f64 * fit
}

/// Subspace within-task objective: ‖w‖² + (C/m) Σ_j (y_j − ⟨w, Bᵀx_j⟩)².
pub fn brute_subspace_ridge_objective(task: &TaskDataset, c: f64, basis: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let mut fit = 0.0;
    for j in 0..task.len() {
        let mut pred = 0.0;
        for a in 0..basis.ncols() {
            let proj: f64 = (0..task.dim()).map(|r| basis[(r, a)] * task.x()[(r, j)]).sum();
            pred += w[a] * proj;
        }
        fit += (task.y()[j] - pred) * (task.y()[j] - pred);
    }
    w.norm_squared() + c / task.len() as f64 * fit
}

/// Extract the affine map (A, b) of a task purely through the numerical
/// minimizer: b is the argmin for the zero prior, column j of A is the
/// argmin for prior e_j minus b.
pub fn oracle_affine_map(task: &TaskDataset, c: f64) -> (DMatrix<f64>, DVector<f64>) {
    let d = task.dim();
    let solve = |w_p: &DVector<f64>| {
        let f = |w: &DVector<f64>| brute_ridge_objective(task, c, w_p, w);
        minimize_numerically(&f, w_p.clone(), 20_000, 1e-11)
    };
    let b = solve(&DVector::zeros(d));
    let mut a = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        let col = solve(&e) - &b;
        a.set_column(j, &col);
    }
    (a, b)
}

/// The regression-bound right-hand side recomputed from scratch given the
/// affine maps; coefficients derived independently of the library.
pub fn brute_regression_bound_objective(
    tasks: &[TaskDataset],
    maps: &[(DMatrix<f64>, DVector<f64>)],
    sigma: f64,
    w: &DVector<f64>,
) -> f64 {
    let n = tasks.len() as f64;
    let inv_sum: f64 = tasks.iter().map(|t| 1.0 / t.len() as f64).sum();
    let m_bar = n / inv_sum;
    let coef_env = ((n * m_bar).sqrt() + 1.0) / (2.0 * sigma * n * m_bar.sqrt());
    let coef_task = 1.0 / (2.0 * n * m_bar.sqrt());
    let mut total = coef_env * w.norm_squared();
    for (t, (a, b)) in tasks.iter().zip(maps) {
        let u = a * w + b;
        total += coef_task * (&u - w).norm_squared();
        let mut fit = 0.0;
        for j in 0..t.len() {
            let pred = t.x().column(j).dot(&u);
            fit += (t.y()[j] - pred) * (t.y()[j] - pred);
        }
        total += fit / (n * t.len() as f64);
    }
    total
}

/// Monte-Carlo mean and its standard error.
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

pub fn mc_estimate(draws: &[f64]) -> McEstimate {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    McEstimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
