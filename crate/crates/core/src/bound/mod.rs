//! The transfer-risk bound engine.
//!
//! For n observed tasks with sample sizes m_i (harmonic mean m̄), a Gaussian
//! hyperposterior N(w_Q, I_d) over prior means, hyperprior N(0, σ I_d), and
//! per-task ridge operators (A_i, b_i), the bound on the transfer risk reads
//!
//! ```text
//! er ≤ êr(w_Q) + coef_env · KL-env(w_Q) + coef_task · Σᵢ KL-task_i(w_Q) + const(δ)
//! ```
//!
//! with coef_env = 1/√n + 1/(n√m̄) applied to ‖w_Q‖²/(2σ), and 1/(n√m̄)
//! applied to the per-task terms ½‖(A_i − I)w_Q + b_i‖². All w_Q-independent
//! pieces are itemized in [`DeltaBreakdown`]. Totals are assembled with a
//! fixed reduction order, so reports are bit-stable across thread counts.

mod measure;
mod phi;
mod subspace;

pub use measure::{verify_change_of_measure, verify_hoeffding_lemma, HoeffdingCheck, MeasureCheck};
pub use phi::{phi, phi_cvx, phi_cvx_deriv};
pub use subspace::{
    bound_subspace, subspace_objective, subspace_objective_ambient, subspace_objective_grad,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::ridge::RidgeOperator;
use crate::task::{BoundConfig, TaskDataset, TaskKind};

/// Harmonic mean n / Σ 1/mᵢ of the sample sizes.
pub fn harmonic_mean(sizes: &[usize]) -> Result<f64> {
    if sizes.is_empty() {
        return Err(Error::InvalidData("harmonic mean of empty list".into()));
    }
    if let Some(&z) = sizes.iter().find(|&&m| m == 0) {
        return Err(Error::InvalidData(format!("sample size must be >= 1, got {z}")));
    }
    let inv_sum: f64 = sizes.iter().map(|&m| 1.0 / m as f64).sum();
    Ok(sizes.len() as f64 / inv_sum)
}

/// Environment-level KL divergence KL(N(w_Q, I) ‖ N(0, σ I)):
/// ‖w_Q‖²/(2σ) + (d/2)(log σ + 1/σ − 1).
pub fn kl_hyper(w_q: &DVector<f64>, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    let d = w_q.len() as f64;
    w_q.norm_squared() / (2.0 * sigma) + 0.5 * d * (sigma.ln() + 1.0 / sigma - 1.0)
}

/// Expected task-level KL under the hyperposterior:
/// ½(‖(A − I)w_Q + b‖² + tr((A − I)²)).
pub fn expected_task_kl(op: &RidgeOperator, w_q: &DVector<f64>) -> Result<f64> {
    let shift = op.posterior_shift(w_q)?;
    Ok(0.5 * (shift.norm_squared() + op.tr_a_minus_i_sq()))
}

fn check_tasks_ops(tasks: &[TaskDataset], ops: &[RidgeOperator], kind: TaskKind) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::InvalidData("no tasks".into()));
    }
    if tasks.len() != ops.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} tasks but {} ridge operators",
            tasks.len(),
            ops.len()
        )));
    }
    for (t, op) in tasks.iter().zip(ops) {
        if t.kind() != kind {
            return Err(Error::InvalidData(format!("task {} has the wrong kind", t.id())));
        }
        if t.dim() != op.dim() {
            return Err(Error::DimensionMismatch(format!(
                "task {} dimension {} vs operator dimension {}",
                t.id(),
                t.dim(),
                op.dim()
            )));
        }
    }
    Ok(())
}

/// Empirical Gibbs classification error:
/// mean over tasks and samples of Φ(y xᵀ(A w_Q + b) / √(xᵀ(I + AAᵀ)x)),
/// with Φ_cvx instead of Φ when `relaxed`.
pub fn gibbs_error_classification(
    tasks: &[TaskDataset],
    ops: &[RidgeOperator],
    w_q: &DVector<f64>,
    relaxed: bool,
) -> Result<f64> {
    check_tasks_ops(tasks, ops, TaskKind::Classification)?;
    let f = if relaxed { phi_cvx } else { phi };
    let per_task: Vec<Result<f64>> = par::map_range(tasks.len(), |i| {
        let (t, op) = (&tasks[i], &ops[i]);
        let u = op.a() * w_q + op.b();
        let mut acc = 0.0;
        for j in 0..t.len() {
            let x = t.x().column(j);
            let ax = op.a() * x;
            let denom_sq = x.norm_squared() + ax.norm_squared();
            if denom_sq <= 0.0 {
                return Err(Error::InvalidData(format!(
                    "task {} sample {j}: zero feature vector has no margin ratio",
                    t.id()
                )));
            }
            let z = t.y()[j] * x.dot(&u) / denom_sq.sqrt();
            acc += f(z);
        }
        Ok(acc / t.len() as f64)
    });
    let per_task = per_task.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(par::ordered_sum(&per_task) / tasks.len() as f64)
}

/// Empirical squared error of the deterministic predictors A_i w_Q + b_i:
/// (1/n) Σᵢ (1/mᵢ) Σⱼ (y_ij − ⟨A_i w_Q + b_i, x_ij⟩)².
pub fn empirical_error_regression(
    tasks: &[TaskDataset],
    ops: &[RidgeOperator],
    w_q: &DVector<f64>,
) -> Result<f64> {
    check_tasks_ops(tasks, ops, TaskKind::Regression)?;
    let per_task: Vec<f64> = par::map_range(tasks.len(), |i| {
        let (t, op) = (&tasks[i], &ops[i]);
        let u = op.a() * w_q + op.b();
        let residual = t.y() - t.x().transpose() * u;
        residual.norm_squared() / t.len() as f64
    });
    Ok(par::ordered_sum(&per_task) / tasks.len() as f64)
}

/// The w_Q-independent pieces of the bound, itemized.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeltaBreakdown {
    /// (1/√n)(1/8 − log(δ/2)) — environment-level confidence term.
    pub env_delta: f64,
    /// (1/√m̄)(1/8 − (1/n) log(δ/2)) — task-level confidence term.
    pub task_delta: f64,
    /// (1/√n + 1/(n√m̄)) · (d/2)(log σ + 1/σ − 1) — hyperprior spread term.
    pub env_kl_const: f64,
    /// (1/(2n√m̄)) Σᵢ tr((A_i − I)²) — posterior-spread term.
    pub task_tr_const: f64,
}

impl DeltaBreakdown {
    pub fn total(&self) -> f64 {
        self.env_delta + self.task_delta + self.env_kl_const + self.task_tr_const
    }
}

/// Itemized transfer-risk bound.
///
/// `total` bounds the Gibbs risk; since the Gibbs risk is at least half the
/// risk of the deterministic predictor, `deterministic_risk_bound = 2·total`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub empirical_risk: f64,
    /// (1/√n + 1/(n√m̄)) · ‖w_Q‖²/(2σ) — the w_Q-dependent environment KL part.
    pub env_kl_term: f64,
    /// (1/(2n√m̄)) Σᵢ ‖(A_i − I)w_Q + b_i‖² — the w_Q-dependent task KL part.
    pub task_kl_term: f64,
    pub delta_const: f64,
    pub total: f64,
    pub n: usize,
    pub m_bar: f64,
    pub breakdown: DeltaBreakdown,
    pub deterministic_risk_bound: f64,
    /// True when the environment-level KL is a parameter-independent constant
    /// of the subspace hyperposterior that is reported as 0 rather than
    /// evaluated.
    pub env_kl_unevaluated: bool,
}

pub(crate) struct Coefficients {
    pub n: usize,
    pub m_bar: f64,
    /// 1/√n + 1/(n√m̄), the weight on the environment KL.
    pub env: f64,
    /// 1/(n√m̄), the weight on the summed task KLs.
    pub task: f64,
}

pub(crate) fn coefficients(tasks: &[TaskDataset]) -> Result<Coefficients> {
    let sizes: Vec<usize> = tasks.iter().map(|t| t.len()).collect();
    let m_bar = harmonic_mean(&sizes)?;
    let n = tasks.len() as f64;
    Ok(Coefficients {
        n: tasks.len(),
        m_bar,
        env: 1.0 / n.sqrt() + 1.0 / (n * m_bar.sqrt()),
        task: 1.0 / (n * m_bar.sqrt()),
    })
}

pub(crate) fn delta_terms(co: &Coefficients, cfg: &BoundConfig, d: usize) -> (f64, f64, f64) {
    let n = co.n as f64;
    let log_half_delta = (cfg.delta / 2.0).ln();
    let env_delta = (0.125 - log_half_delta) / n.sqrt();
    let task_delta = (0.125 - log_half_delta / n) / co.m_bar.sqrt();
    let env_kl_const =
        co.env * 0.5 * d as f64 * (cfg.sigma.ln() + 1.0 / cfg.sigma - 1.0);
    (env_delta, task_delta, env_kl_const)
}

fn assemble_gaussian_report(
    tasks: &[TaskDataset],
    ops: &[RidgeOperator],
    w_q: &DVector<f64>,
    cfg: &BoundConfig,
    empirical_risk: f64,
) -> Result<BoundReport> {
    cfg.validate()?;
    let co = coefficients(tasks)?;
    let d = tasks[0].dim();
    if w_q.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "w_Q has length {}, tasks have dimension {d}",
            w_q.len()
        )));
    }
    let env_kl_term = co.env * w_q.norm_squared() / (2.0 * cfg.sigma);

    let shifts: Vec<f64> = par::map_range(ops.len(), |i| {
        ops[i].posterior_shift(w_q).map(|s| s.norm_squared()).unwrap_or(f64::NAN)
    });
    let task_kl_term = 0.5 * co.task * par::ordered_sum(&shifts);

    let trs: Vec<f64> = par::map_range(ops.len(), |i| ops[i].tr_a_minus_i_sq());
    let task_tr_const = 0.5 * co.task * par::ordered_sum(&trs);

    let (env_delta, task_delta, env_kl_const) = delta_terms(&co, cfg, d);
    let breakdown = DeltaBreakdown {
        env_delta,
        task_delta,
        env_kl_const,
        task_tr_const,
    };
    let delta_const = breakdown.total();
    let total = empirical_risk + env_kl_term + task_kl_term + delta_const;
    Ok(BoundReport {
        empirical_risk,
        env_kl_term,
        task_kl_term,
        delta_const,
        total,
        n: co.n,
        m_bar: co.m_bar,
        breakdown,
        deterministic_risk_bound: 2.0 * total,
        env_kl_unevaluated: false,
    })
}

/// Full bound report for a classification environment.
pub fn bound_classification(
    tasks: &[TaskDataset],
    ops: &[RidgeOperator],
    w_q: &DVector<f64>,
    cfg: &BoundConfig,
    relaxed: bool,
) -> Result<BoundReport> {
    let empirical = gibbs_error_classification(tasks, ops, w_q, relaxed)?;
    assemble_gaussian_report(tasks, ops, w_q, cfg, empirical)
}

/// Full bound report for a regression environment (squared-loss surrogate).
pub fn bound_regression(
    tasks: &[TaskDataset],
    ops: &[RidgeOperator],
    w_q: &DVector<f64>,
    cfg: &BoundConfig,
) -> Result<BoundReport> {
    let empirical = empirical_error_regression(tasks, ops, w_q)?;
    assemble_gaussian_report(tasks, ops, w_q, cfg, empirical)
}
