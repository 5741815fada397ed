//! Subspace (representation-transfer) objective and its gradient.
//!
//! For an orthonormal basis M (d×k) the per-task subspace ridge solution is
//!
//! ```text
//! w_i(M) = (C/m_i) (I_k + (C/m_i) Mᵀ X_i X_iᵀ M)⁻¹ Mᵀ X_i Y_i
//! ```
//!
//! and the learning objective is the empirical squared loss of the
//! deterministic predictor plus a norm penalty:
//!
//! ```text
//! J(M) = (1/n) Σᵢ [ (1/m_i) ‖Y_i − X_iᵀ M w_i(M)‖² + ‖w_i(M)‖² / (2σ√m̄) ]
//! ```
//!
//! The Euclidean gradient ∂J/∂M differentiates through the closed form via
//! the adjoint of the inner solve; it is validated against central finite
//! differences in the test suite.

use nalgebra::{DMatrix, DVector};

use super::{coefficients, delta_terms, BoundReport, DeltaBreakdown};
use crate::error::{Error, Result};
use crate::par;
use crate::ridge::require_orthonormal;
use crate::task::{BoundConfig, TaskDataset};

struct TaskEval {
    value: f64,
    grad: Option<DMatrix<f64>>,
    empirical: f64,
    w_norm_sq: f64,
}

fn eval_task(task: &TaskDataset, basis: &DMatrix<f64>, c: f64, kappa: f64, want_grad: bool) -> Result<TaskEval> {
    let m = task.len() as f64;
    let k = basis.ncols();
    let g = basis.transpose() * task.x(); // k × m
    let mut h = &g * g.transpose() * (c / m);
    for i in 0..k {
        h[(i, i)] += 1.0;
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("subspace objective: task {}", task.id())))?;
    let u = &g * task.y();
    let w = chol.solve(&(&u * (c / m)));
    let r = task.y() - g.transpose() * &w;
    let empirical = r.norm_squared() / m;
    let w_norm_sq = w.norm_squared();
    let value = empirical + kappa * w_norm_sq;
    let grad = if want_grad {
        // Sensitivity of the objective to w, then pulled back through the
        // solve: p = ∂J_i/∂w, q = H⁻¹p.
        let p: DVector<f64> = &w * (2.0 * kappa) - &g * &r * (2.0 / m);
        let q = chol.solve(&p);
        let gq = g.transpose() * &q; // m-vector Gᵀq
        // ∂J_i/∂M = X · [ −(2/m) r wᵀ + (C/m) (r qᵀ − (Gᵀq) wᵀ) ]
        let inner = &r * w.transpose() * (-2.0 / m)
            + (&r * q.transpose() - &gq * w.transpose()) * (c / m);
        Some(task.x() * inner)
    } else {
        None
    };
    Ok(TaskEval {
        value,
        grad,
        empirical,
        w_norm_sq,
    })
}

fn eval_all(
    tasks: &[TaskDataset],
    basis: &DMatrix<f64>,
    cfg: &BoundConfig,
    want_grad: bool,
) -> Result<Vec<TaskEval>> {
    if tasks.is_empty() {
        return Err(Error::InvalidData("no tasks".into()));
    }
    if basis.nrows() != tasks[0].dim() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows, tasks have dimension {}",
            basis.nrows(),
            tasks[0].dim()
        )));
    }
    require_orthonormal(basis, 1e-8, "subspace objective")?;
    cfg.validate()?;
    let co = coefficients(tasks)?;
    let kappa = 1.0 / (2.0 * cfg.sigma * co.m_bar.sqrt());
    par::map_slice(tasks, |t| eval_task(t, basis, cfg.c, kappa, want_grad))
        .into_iter()
        .collect()
}

/// J(M); lower is a more promising subspace for future tasks.
pub fn subspace_objective(basis: &DMatrix<f64>, tasks: &[TaskDataset], cfg: &BoundConfig) -> Result<f64> {
    let evals = eval_all(tasks, basis, cfg, false)?;
    let values: Vec<f64> = evals.iter().map(|e| e.value).collect();
    Ok(par::ordered_sum(&values) / tasks.len() as f64)
}

/// The same formula evaluated at an arbitrary d×k matrix, without the
/// orthonormality gate. The bound interpretation needs an orthonormal basis;
/// this extension exists so derivative checks can probe off-manifold points.
pub fn subspace_objective_ambient(
    basis: &DMatrix<f64>,
    tasks: &[TaskDataset],
    cfg: &BoundConfig,
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::InvalidData("no tasks".into()));
    }
    cfg.validate()?;
    let co = coefficients(tasks)?;
    let kappa = 1.0 / (2.0 * cfg.sigma * co.m_bar.sqrt());
    let values = par::map_slice(tasks, |t| eval_task(t, basis, cfg.c, kappa, false).map(|e| e.value))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(par::ordered_sum(&values) / tasks.len() as f64)
}

/// J(M) together with its Euclidean gradient ∂J/∂M (d×k).
pub fn subspace_objective_grad(
    basis: &DMatrix<f64>,
    tasks: &[TaskDataset],
    cfg: &BoundConfig,
) -> Result<(f64, DMatrix<f64>)> {
    let evals = eval_all(tasks, basis, cfg, true)?;
    let n = tasks.len() as f64;
    let values: Vec<f64> = evals.iter().map(|e| e.value).collect();
    let value = par::ordered_sum(&values) / n;
    let mut grad = DMatrix::zeros(basis.nrows(), basis.ncols());
    for e in &evals {
        grad += e.grad.as_ref().unwrap();
    }
    grad /= n;
    Ok((value, grad))
}

/// Itemized bound report for a subspace hyperposterior with mode `basis`.
///
/// The environment-level KL is a constant independent of the basis; it is
/// reported as 0 with `env_kl_unevaluated = true`.
pub fn bound_subspace(tasks: &[TaskDataset], basis: &DMatrix<f64>, cfg: &BoundConfig) -> Result<BoundReport> {
    let evals = eval_all(tasks, basis, cfg, false)?;
    let co = coefficients(tasks)?;
    let n = co.n as f64;

    let empir: Vec<f64> = evals.iter().map(|e| e.empirical).collect();
    let empirical_risk = par::ordered_sum(&empir) / n;

    let norms: Vec<f64> = evals.iter().map(|e| e.w_norm_sq).collect();
    let task_kl_term = co.task * par::ordered_sum(&norms) / (2.0 * cfg.sigma);

    let (env_delta, task_delta, _) = delta_terms(&co, cfg, tasks[0].dim());
    let breakdown = DeltaBreakdown {
        env_delta,
        task_delta,
        env_kl_const: 0.0,
        task_tr_const: 0.0,
    };
    let delta_const = breakdown.total();
    let total = empirical_risk + task_kl_term + delta_const;
    Ok(BoundReport {
        empirical_risk,
        env_kl_term: 0.0,
        task_kl_term,
        delta_const,
        total,
        n: co.n,
        m_bar: co.m_bar,
        breakdown,
        deterministic_risk_bound: 2.0 * total,
        env_kl_unevaluated: true,
    })
}
