//! Prior learning with a Gaussian hyperprior (PL-G).
//!
//! Learns the hyperposterior mean w_Q minimizing the transfer-risk bound.
//! For regression the objective is quadratic in w_Q and solved in closed
//! form; for classification the Gaussian-tail empirical term is replaced by
//! its convex relaxation and minimized with Polak–Ribière+ conjugate
//! gradient under a backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bound::{phi_cvx, phi_cvx_deriv};
use crate::bound::{coefficients, delta_terms};
use crate::error::{Error, Result};
use crate::par;
use crate::ridge::{fit_ridge_operator, RidgeOperator};
use crate::task::{BoundConfig, TaskDataset, TaskKind};

/// How a hyperposterior mean was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    ConjugateGradient,
}

/// Mean of the Gaussian hyperposterior N(w_Q, I_d) over prior vectors.
#[derive(Debug, Clone)]
pub struct GaussianHyperposterior {
    pub w_q: DVector<f64>,
    pub sigma: f64,
    pub provenance: Provenance,
}

impl Serialize for GaussianHyperposterior {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("GaussianHyperposterior", 3)?;
        st.serialize_field("w_q", &self.w_q.as_slice())?;
        st.serialize_field("sigma", &self.sigma)?;
        st.serialize_field("provenance", &self.provenance)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for GaussianHyperposterior {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            w_q: Vec<f64>,
            sigma: f64,
            provenance: Provenance,
        }
        let raw = Raw::deserialize(d)?;
        if raw.w_q.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("w_q must be finite"));
        }
        Ok(Self {
            w_q: DVector::from_vec(raw.w_q),
            sigma: raw.sigma,
            provenance: raw.provenance,
        })
    }
}

/// Conjugate-gradient settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CgConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Restart interval; `None` restarts every d iterations.
    pub restart_every: Option<usize>,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            restart_every: None,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
            max_backtracks: 60,
        }
    }
}

impl CgConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.grad_tol > 0.0
            && self.restart_every.is_none_or(|r| r > 0)
            && self.armijo_c1 > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.initial_step > 0.0
            && self.max_backtracks > 0;
        if !ok {
            return Err(Error::InvalidConfig("conjugate gradient settings must be positive".into()));
        }
        Ok(())
    }
}

/// Optimizer diagnostics returned alongside the solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CgReport {
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub final_value: f64,
    pub converged: bool,
    pub line_search_failed: bool,
}

/// Precomputed per-task margin data: the margin of sample j is
/// z_j = ⟨column j of u, w⟩ + v_j, each sample weighted by 1/(n m_i).
/// u and v fold in the ridge operator and the margin denominator, which do
/// not depend on w_Q.
struct TaskMargins {
    weight: f64,
    u: DMatrix<f64>,
    v: DVector<f64>,
}

impl TaskMargins {
    fn value(&self, w: &DVector<f64>) -> f64 {
        let z = self.u.transpose() * w + &self.v;
        self.weight * z.iter().map(|&zj| phi_cvx(zj)).sum::<f64>()
    }

    fn value_grad(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
        let z = self.u.transpose() * w + &self.v;
        let mut value = 0.0;
        let slopes = DVector::from_fn(z.len(), |j, _| {
            value += phi_cvx(z[j]);
            self.weight * phi_cvx_deriv(z[j])
        });
        (self.weight * value, &self.u * slopes)
    }
}

/// Precomputed classification objective: the relaxed bound as a function of
/// w_Q only.
struct RelaxedObjective {
    coef_env: f64,
    coef_task: f64,
    quad: DMatrix<f64>,
    lin: DVector<f64>,
    const_term: f64,
    tasks: Vec<TaskMargins>,
}

impl RelaxedObjective {
    fn build(tasks: &[TaskDataset], ops: &[RidgeOperator], cfg: &BoundConfig) -> Result<Self> {
        cfg.validate()?;
        if tasks.is_empty() || tasks.len() != ops.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} tasks vs {} operators",
                tasks.len(),
                ops.len()
            )));
        }
        let d = tasks[0].dim();
        let co = coefficients(tasks)?;
        let n = co.n as f64;
        let coef_env = co.env / (2.0 * cfg.sigma);
        let coef_task = 0.5 * co.task;

        let mut quad = DMatrix::zeros(d, d);
        let mut lin = DVector::zeros(d);
        let mut b_sq = 0.0;
        let mut tr_sum = 0.0;
        let mut margins = Vec::with_capacity(tasks.len());
        for (t, op) in tasks.iter().zip(ops) {
            if t.kind() != TaskKind::Classification {
                return Err(Error::InvalidData(format!("task {} is not classification", t.id())));
            }
            let mut a_shift = op.a().clone();
            for i in 0..d {
                a_shift[(i, i)] -= 1.0;
            }
            quad += a_shift.transpose() * &a_shift;
            lin += a_shift.transpose() * op.b();
            b_sq += op.b().norm_squared();
            tr_sum += op.tr_a_minus_i_sq();
            let m = t.len();
            let mut u = DMatrix::zeros(d, m);
            let mut v = DVector::zeros(m);
            for j in 0..m {
                let x = t.x().column(j);
                let ax = op.a() * x;
                let denom_sq = x.norm_squared() + ax.norm_squared();
                if denom_sq <= 0.0 {
                    return Err(Error::InvalidData(format!(
                        "task {} sample {j}: zero feature vector has no margin ratio",
                        t.id()
                    )));
                }
                let denom = denom_sq.sqrt();
                let y = t.y()[j];
                u.set_column(j, &(ax * (y / denom)));
                v[j] = y * x.dot(op.b()) / denom;
            }
            margins.push(TaskMargins {
                weight: 1.0 / (n * m as f64),
                u,
                v,
            });
        }
        let (env_delta, task_delta, env_kl_const) = delta_terms(&co, cfg, d);
        let const_term = coef_task * (b_sq + tr_sum) + env_delta + task_delta + env_kl_const;
        Ok(Self {
            coef_env,
            coef_task,
            quad,
            lin,
            const_term,
            tasks: margins,
        })
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let quad_part = self.coef_env * w.norm_squared()
            + self.coef_task * ((&self.quad * w).dot(w) + 2.0 * self.lin.dot(w));
        let per_task: Vec<f64> = par::map_slice(&self.tasks, |t| t.value(w));
        quad_part + par::ordered_sum(&per_task) + self.const_term
    }

    fn value_grad(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
        let quad_w = &self.quad * w;
        let quad_part =
            self.coef_env * w.norm_squared() + self.coef_task * (quad_w.dot(w) + 2.0 * self.lin.dot(w));
        let mut grad = w * (2.0 * self.coef_env) + (quad_w + &self.lin) * (2.0 * self.coef_task);
        let pieces: Vec<(f64, DVector<f64>)> = par::map_slice(&self.tasks, |t| t.value_grad(w));
        let mut emp = 0.0;
        for (val, g) in &pieces {
            emp += val;
            grad += g;
        }
        (quad_part + emp + self.const_term, grad)
    }
}

/// Relaxed classification bound (value, gradient) at `w_q`.
///
/// The value is the full right-hand side of the classification bound with
/// Φ replaced by Φ_cvx, including the w_Q-independent constants, so it is
/// directly comparable with `bound_classification(..., relaxed = true).total`.
pub fn plg_objective_grad(
    w_q: &DVector<f64>,
    tasks: &[TaskDataset],
    ops: &[RidgeOperator],
    cfg: &BoundConfig,
) -> Result<(f64, DVector<f64>)> {
    let obj = RelaxedObjective::build(tasks, ops, cfg)?;
    if w_q.len() != tasks[0].dim() {
        return Err(Error::DimensionMismatch(format!(
            "w_Q has length {}, tasks have dimension {}",
            w_q.len(),
            tasks[0].dim()
        )));
    }
    Ok(obj.value_grad(w_q))
}

/// Closed-form minimizer of the regression bound.
///
/// Stationarity of the quadratic objective gives the linear system
///
/// ```text
/// (D + 2·coef_env·I + 2·coef_task·Σ A'ᵢᵀA'ᵢ) w = −(c + 2·coef_task·Σ A'ᵢᵀbᵢ)
/// ```
///
/// with A'ᵢ = Aᵢ − I, D = (2/n) Σ (1/mᵢ) Aᵢ XᵢXᵢᵀ Aᵢ and
/// c = (2/n) Σ (1/mᵢ) Aᵢ Xᵢ (Xᵢᵀbᵢ − Yᵢ). The residual is checked against
/// the finite-difference gradient of the bound in the test suite.
pub fn solve_plg_regression(tasks: &[TaskDataset], cfg: &BoundConfig) -> Result<GaussianHyperposterior> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::InvalidData("no observed tasks".into()));
    }
    if tasks.iter().any(|t| t.kind() != TaskKind::Regression) {
        return Err(Error::InvalidData("regression solver needs regression tasks".into()));
    }
    let d = tasks[0].dim();
    let co = coefficients(tasks)?;
    let n = co.n as f64;
    let coef_env = co.env / (2.0 * cfg.sigma);
    let coef_task = 0.5 * co.task;

    let ops = par::map_slice(tasks, |t| fit_ridge_operator(t, cfg.c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut lhs = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    for (t, op) in tasks.iter().zip(&ops) {
        let m = t.len() as f64;
        let ax = op.a() * t.x(); // d × m
        lhs += &ax * ax.transpose() * (2.0 / (n * m));
        rhs += &ax * (t.x().transpose() * op.b() - t.y()) * (2.0 / (n * m));

        let mut a_shift = op.a().clone();
        for i in 0..d {
            a_shift[(i, i)] -= 1.0;
        }
        lhs += a_shift.transpose() * &a_shift * (2.0 * coef_task);
        rhs += a_shift.transpose() * op.b() * (2.0 * coef_task);
    }
    for i in 0..d {
        lhs[(i, i)] += 2.0 * coef_env;
    }
    let chol = lhs
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("regression prior system not SPD".into()))?;
    let w_q = chol.solve(&(-&rhs));

    let residual = (&lhs * &w_q + rhs).norm();
    if residual > 1e-8 * (1.0 + w_q.norm()) {
        return Err(Error::Numerical(format!(
            "stationarity residual {residual:.3e} too large"
        )));
    }
    Ok(GaussianHyperposterior {
        w_q,
        sigma: cfg.sigma,
        provenance: Provenance::ClosedForm,
    })
}

/// Minimize the relaxed classification bound with Polak–Ribière+ conjugate
/// gradient. Returns the best iterate seen and optimizer diagnostics.
pub fn solve_plg_classification(
    tasks: &[TaskDataset],
    cfg: &BoundConfig,
    cg: &CgConfig,
) -> Result<(GaussianHyperposterior, CgReport)> {
    cg.validate()?;
    if tasks.is_empty() {
        return Err(Error::InvalidData("no observed tasks".into()));
    }
    let d = tasks[0].dim();
    let ops = par::map_slice(tasks, |t| fit_ridge_operator(t, cfg.c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let obj = RelaxedObjective::build(tasks, &ops, cfg)?;

    let restart_every = cg.restart_every.unwrap_or(d.max(1));
    let mut w = DVector::zeros(d);
    let (mut value, mut grad) = obj.value_grad(&w);
    let mut dir = -&grad;
    let mut best = (value, w.clone());
    let mut since_restart = 0usize;
    let mut line_search_failed = false;
    let mut iterations = 0usize;

    for _ in 0..cg.max_iters {
        if grad.norm() <= cg.grad_tol {
            break;
        }
        let mut slope = grad.dot(&dir);
        if slope >= 0.0 {
            // Non-descent direction; restart with steepest descent.
            dir = -&grad;
            slope = grad.dot(&dir);
            since_restart = 0;
        }
        let mut step = cg.initial_step;
        let mut accepted = None;
        for _ in 0..cg.max_backtracks {
            let cand = &w + &dir * step;
            let cand_value = obj.value(&cand);
            if cand_value <= value + cg.armijo_c1 * step * slope {
                accepted = Some((cand, cand_value));
                break;
            }
            step *= cg.backtrack;
        }
        let Some((w_new, value_new)) = accepted else {
            line_search_failed = true;
            break;
        };
        let (_, grad_new) = obj.value_grad(&w_new);
        iterations += 1;
        since_restart += 1;

        // Polak–Ribière+ with automatic restarts.
        let beta = if since_restart >= restart_every {
            since_restart = 0;
            0.0
        } else {
            let num = grad_new.dot(&(&grad_new - &grad));
            (num / grad.norm_squared()).max(0.0)
        };
        dir = -&grad_new + &dir * beta;
        w = w_new;
        grad = grad_new;
        value = value_new;
        if value < best.0 {
            best = (value, w.clone());
        }
    }

    let report = CgReport {
        iterations,
        final_grad_norm: grad.norm(),
        final_value: best.0,
        converged: grad.norm() <= cg.grad_tol,
        line_search_failed,
    };
    Ok((
        GaussianHyperposterior {
            w_q: best.1,
            sigma: cfg.sigma,
            provenance: Provenance::ConjugateGradient,
        },
        report,
    ))
}
