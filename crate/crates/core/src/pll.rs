//! Prior learning with a Langevin hyperprior (PL-L).
//!
//! The transferable object is the mode M of a hyperposterior over
//! orthonormal d×k bases. The subspace objective from the bound engine is
//! minimized over the Stiefel manifold by gradient descent along Cayley
//! curves: with W = G Mᵀ − M Gᵀ the curve
//!
//! ```text
//! Y(τ) = (I + (τ/2) W)⁻¹ (I − (τ/2) W) M
//! ```
//!
//! stays orthonormal for every τ and leaves M along the projected descent
//! direction. Step sizes follow Barzilai–Borwein estimates safeguarded by a
//! nonmonotone (max-window) Armijo condition.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bound::subspace_objective_grad;
use crate::error::{Error, Result};
use crate::par;
use crate::ridge::{fit_ridge_operator, orthonormality_defect, posterior_mean};
use crate::task::{BoundConfig, TaskDataset};

/// A d×k matrix with orthonormal columns (defect ≤ 1e-8, enforced).
#[derive(Debug, Clone)]
pub struct StiefelPoint {
    m: DMatrix<f64>,
}

impl StiefelPoint {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.ncols() == 0 || m.nrows() < m.ncols() {
            return Err(Error::InvalidData(format!(
                "Stiefel point needs d >= k >= 1, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let defect = orthonormality_defect(&m);
        if !defect.is_finite() || defect > 1e-8 {
            return Err(Error::InvalidData(format!(
                "columns not orthonormal: defect {defect:.3e}"
            )));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m.nrows(), self.m.ncols())
    }

    /// ‖MᵀM − I‖_F.
    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.m)
    }
}

impl Serialize for StiefelPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let (d, k) = self.dims();
        let mut data = Vec::with_capacity(d * k);
        for r in 0..d {
            for c in 0..k {
                data.push(self.m[(r, c)]);
            }
        }
        let mut st = s.serialize_struct("StiefelPoint", 3)?;
        st.serialize_field("d", &d)?;
        st.serialize_field("k", &k)?;
        st.serialize_field("data", &data)?; // row-major
        st.end()
    }
}

impl<'de> Deserialize<'de> for StiefelPoint {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            d: usize,
            k: usize,
            data: Vec<f64>,
        }
        let raw = Raw::deserialize(de)?;
        if raw.data.len() != raw.d * raw.k {
            return Err(serde::de::Error::custom(format!(
                "expected {} entries, got {}",
                raw.d * raw.k,
                raw.data.len()
            )));
        }
        let m = DMatrix::from_row_slice(raw.d, raw.k, &raw.data);
        StiefelPoint::new(m).map_err(serde::de::Error::custom)
    }
}

/// Curvilinear-search settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvilinearConfig {
    pub max_iters: usize,
    /// Stop when the Riemannian gradient norm falls below this.
    pub grad_tol: f64,
    pub tau_init: f64,
    /// Nonmonotone window: accepted values must undercut the max of this
    /// many previous objective values.
    pub window: usize,
    pub armijo_c1: f64,
    pub bb_min: f64,
    pub bb_max: f64,
    /// Re-orthonormalize via QR every this many iterations.
    pub reorth_every: usize,
    pub max_backtracks: usize,
}

impl Default for CurvilinearConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            grad_tol: 1e-5,
            tau_init: 1e-2,
            window: 10,
            armijo_c1: 1e-4,
            bb_min: 1e-10,
            bb_max: 1e10,
            reorth_every: 50,
            max_backtracks: 60,
        }
    }
}

impl CurvilinearConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.grad_tol >= 0.0
            && self.tau_init > 0.0
            && self.window > 0
            && self.armijo_c1 > 0.0
            && self.bb_min > 0.0
            && self.bb_max > self.bb_min
            && self.reorth_every > 0
            && self.max_backtracks > 0;
        if !ok {
            return Err(Error::InvalidConfig("curvilinear search settings must be positive".into()));
        }
        Ok(())
    }
}

/// Optimizer diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PllReport {
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub final_value: f64,
    pub converged: bool,
    pub line_search_failed: bool,
}

fn skew_from_grad(point: &StiefelPoint, grad: &DMatrix<f64>) -> DMatrix<f64> {
    grad * point.matrix().transpose() - point.matrix() * grad.transpose()
}

/// Move along the Cayley curve of the gradient's skew field.
///
/// `I + (τ/2)W` is nonsingular in exact arithmetic; if the solve fails or
/// leaves the manifold numerically, τ is halved and retried.
pub fn cayley_retract(point: &StiefelPoint, grad: &DMatrix<f64>, tau: f64) -> Result<StiefelPoint> {
    if grad.shape() != point.matrix().shape() {
        return Err(Error::DimensionMismatch(format!(
            "gradient shape {:?} vs point shape {:?}",
            grad.shape(),
            point.matrix().shape()
        )));
    }
    if !tau.is_finite() {
        return Err(Error::InvalidData(format!("tau must be finite, got {tau}")));
    }
    let w = skew_from_grad(point, grad);
    let d = w.nrows();
    let mut tau = tau;
    loop {
        let half = 0.5 * tau;
        let mut lhs = &w * half;
        let mut rhs = &w * (-half);
        for i in 0..d {
            lhs[(i, i)] += 1.0;
            rhs[(i, i)] += 1.0;
        }
        let moved = lhs.lu().solve(&(rhs * point.matrix()));
        if let Some(m) = moved {
            if orthonormality_defect(&m) <= 1e-10 {
                return Ok(StiefelPoint { m });
            }
        }
        tau *= 0.5;
        if tau.abs() < 1e-300 {
            return Err(Error::Numerical("Cayley step underflowed".into()));
        }
    }
}

/// Norm of the Riemannian gradient: ‖G − M sym(MᵀG)‖_F; zero exactly at
/// manifold-stationary points.
pub fn riemannian_grad_norm(point: &StiefelPoint, grad: &DMatrix<f64>) -> f64 {
    riemannian_grad(point, grad).norm()
}

/// Projection of a Euclidean gradient onto the tangent space at `point`.
pub fn riemannian_grad(point: &StiefelPoint, grad: &DMatrix<f64>) -> DMatrix<f64> {
    let mtg = point.matrix().transpose() * grad;
    let sym = (&mtg + mtg.transpose()) * 0.5;
    grad - point.matrix() * sym
}

/// Minimize an arbitrary smooth objective over the Stiefel manifold.
///
/// `objective` returns the value and the Euclidean gradient. Returns the
/// best-seen iterate; the manifold constraint is maintained throughout
/// (Cayley steps plus periodic QR re-orthonormalization).
pub fn minimize_on_stiefel<F>(
    init: StiefelPoint,
    objective: F,
    cc: &CurvilinearConfig,
) -> Result<(StiefelPoint, PllReport)>
where
    F: Fn(&StiefelPoint) -> Result<(f64, DMatrix<f64>)>,
{
    cc.validate()?;
    let mut point = init;
    let (mut value, mut grad) = objective(&point)?;
    let mut best = (value, point.clone());
    let mut recent = std::collections::VecDeque::with_capacity(cc.window);
    recent.push_back(value);
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None; // (M, G) of previous iterate
    let mut line_search_failed = false;
    let mut iterations = 0usize;
    let mut rgrad_norm = riemannian_grad_norm(&point, &grad);

    for it in 0..cc.max_iters {
        if rgrad_norm <= cc.grad_tol {
            break;
        }
        let w = skew_from_grad(&point, &grad);
        // dJ/dτ at τ=0 along the Cayley curve is −½‖W‖_F².
        let descent = 0.5 * w.norm_squared();
        if descent <= 0.0 {
            break;
        }

        // Barzilai–Borwein estimate from the previous Euclidean differences,
        // alternating the two formulas; Armijo backtracking safeguards it.
        let mut tau = match &prev {
            None => cc.tau_init,
            Some((m_prev, g_prev)) => {
                let s = point.matrix() - m_prev;
                let y = &grad - g_prev;
                let sy = s.dot(&y).abs();
                let candidate = if it % 2 == 0 {
                    let ss = s.dot(&s);
                    if sy > 0.0 {
                        ss / sy
                    } else {
                        cc.tau_init
                    }
                } else {
                    let yy = y.dot(&y);
                    if yy > 0.0 {
                        sy / yy
                    } else {
                        cc.tau_init
                    }
                };
                if candidate.is_finite() && candidate > 0.0 {
                    candidate.clamp(cc.bb_min, cc.bb_max)
                } else {
                    cc.tau_init
                }
            }
        };

        let reference = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut accepted = None;
        for _ in 0..cc.max_backtracks {
            let cand = cayley_retract(&point, &grad, tau)?;
            let (cand_value, cand_grad) = objective(&cand)?;
            if cand_value <= reference - cc.armijo_c1 * tau * descent {
                accepted = Some((cand, cand_value, cand_grad));
                break;
            }
            tau *= 0.5;
        }
        let Some((mut next, mut next_value, mut next_grad)) = accepted else {
            line_search_failed = true;
            break;
        };
        prev = Some((point.matrix().clone(), grad.clone()));
        iterations += 1;

        // Cayley is orthogonal only in exact arithmetic; cap the drift.
        if iterations.is_multiple_of(cc.reorth_every) {
            let q = next.matrix().clone().qr().q();
            next = StiefelPoint { m: q };
            let refreshed = objective(&next)?;
            next_value = refreshed.0;
            next_grad = refreshed.1;
        }

        point = next;
        value = next_value;
        grad = next_grad;
        rgrad_norm = riemannian_grad_norm(&point, &grad);
        if recent.len() == cc.window {
            recent.pop_front();
        }
        recent.push_back(value);
        if value < best.0 {
            best = (value, point.clone());
        }
    }

    let report = PllReport {
        iterations,
        final_grad_norm: rgrad_norm,
        final_value: best.0,
        converged: rgrad_norm <= cc.grad_tol,
        line_search_failed,
    };
    Ok((best.1, report))
}

/// Subspace initialization strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// QR of a Gaussian d×k matrix.
    RandomQr,
    /// Top-k left singular vectors of the matrix whose columns are the
    /// independent ridge solutions of the tasks.
    SvdOfRidgeSolutions,
}

/// An initial subspace, flagging whether rank-deficient stacking forced
/// random padding.
#[derive(Debug, Clone)]
pub struct SubspaceInit {
    pub point: StiefelPoint,
    pub rank_deficient: bool,
}

fn random_directions(rng: &mut ChaCha12Rng, d: usize, k: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..d * k).map(|_| StandardNormal.sample(rng)).collect();
    DMatrix::from_row_slice(d, k, &data)
}

/// Build an initial orthonormal basis for `solve_pll`.
pub fn init_subspace(
    tasks: &[TaskDataset],
    k: usize,
    strategy: InitStrategy,
    seed: u64,
    cfg: &BoundConfig,
) -> Result<SubspaceInit> {
    if tasks.is_empty() {
        return Err(Error::InvalidData("no tasks".into()));
    }
    let d = tasks[0].dim();
    if k == 0 || k > d {
        return Err(Error::InvalidConfig(format!("k={k} must satisfy 1 <= k <= d={d}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    match strategy {
        InitStrategy::RandomQr => {
            let q = random_directions(&mut rng, d, k).qr().q();
            Ok(SubspaceInit {
                point: StiefelPoint::new(q)?,
                rank_deficient: false,
            })
        }
        InitStrategy::SvdOfRidgeSolutions => {
            let solutions = par::map_slice(tasks, |t| {
                let op = fit_ridge_operator(t, cfg.c)?;
                posterior_mean(&op, &DVector::zeros(d))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let stacked = DMatrix::from_fn(d, solutions.len(), |r, c| solutions[c][r]);
            let svd = stacked.svd(true, false);
            let u = svd.u.as_ref().expect("left singular vectors requested");
            let sv = &svd.singular_values;
            let cutoff = sv.iter().cloned().fold(0.0f64, f64::max) * 1e-10;
            let usable = sv.iter().take(k).filter(|&&s| s > cutoff).count().min(u.ncols());

            let mut basis = DMatrix::zeros(d, k);
            for c in 0..usable {
                basis.set_column(c, &u.column(c));
            }
            let mut filled = usable;
            // Pad with random directions orthogonal to what we have.
            while filled < k {
                let mut v = random_directions(&mut rng, d, 1).column(0).clone_owned();
                for c in 0..filled {
                    let b = basis.column(c);
                    let proj = b.dot(&v);
                    v -= b * proj;
                }
                let norm = v.norm();
                if norm > 1e-8 {
                    basis.set_column(filled, &(v / norm));
                    filled += 1;
                }
            }
            Ok(SubspaceInit {
                point: StiefelPoint::new(basis)?,
                rank_deficient: usable < k,
            })
        }
    }
}

const DEFAULT_INIT_SEED: u64 = 0x5EED_0001;

/// Learn the most promising subspace from the observed tasks.
pub fn solve_pll(
    tasks: &[TaskDataset],
    k: usize,
    cfg: &BoundConfig,
    cc: &CurvilinearConfig,
    init: Option<StiefelPoint>,
) -> Result<(StiefelPoint, PllReport)> {
    let init = match init {
        Some(p) => {
            if p.dims() != (tasks.first().map(|t| t.dim()).unwrap_or(0), k) {
                return Err(Error::DimensionMismatch(format!(
                    "init has dims {:?}, expected ({}, {k})",
                    p.dims(),
                    tasks.first().map(|t| t.dim()).unwrap_or(0)
                )));
            }
            p
        }
        None => init_subspace(tasks, k, InitStrategy::SvdOfRidgeSolutions, DEFAULT_INIT_SEED, cfg)?.point,
    };
    minimize_on_stiefel(
        init,
        |p| subspace_objective_grad(p.matrix(), tasks, cfg),
        cc,
    )
}
