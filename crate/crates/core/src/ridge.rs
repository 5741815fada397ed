//! Prior-centered ridge regression, the fixed within-task learner.
//!
//! Fitting a task once yields an affine operator (A, b): for any prior mean
//! w_P the posterior mean is A·w_P + b, where
//!
//! ```text
//! A = (I_d + (C/m) X Xᵀ)⁻¹,    b = (C/m) A X Y.
//! ```
//!
//! A is symmetric with eigenvalues in (0, 1]. Systems are solved through a
//! Cholesky factorization; A itself is materialized because the bound terms
//! need it as a matrix.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::task::TaskDataset;

/// Affine map from prior mean to posterior mean for one task.
#[derive(Debug, Clone)]
pub struct RidgeOperator {
    a: DMatrix<f64>,
    b: DVector<f64>,
    m: usize,
    c: f64,
}

impl RidgeOperator {
    /// `A`, symmetric `d × d` with eigenvalues in (0, 1].
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `b`, the posterior mean for the zero prior.
    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Sample count of the task this operator was fitted on.
    pub fn sample_count(&self) -> usize {
        self.m
    }

    /// Regularization strength used for the fit.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `tr((A − I)²)`; equals ‖A − I‖_F² since A is symmetric.
    pub fn tr_a_minus_i_sq(&self) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let v = self.a[(i, j)] - if i == j { 1.0 } else { 0.0 };
                s += v * v;
            }
        }
        s
    }

    /// `(A − I) w + b`, the shift the posterior applies to prior mean `w`.
    pub fn posterior_shift(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), w.len())?;
        Ok(&self.a * w - w + &self.b)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch(format!(
            "operator dimension {expected}, vector dimension {got}"
        )));
    }
    Ok(())
}

fn spd_cholesky(k: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    k.cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what}: Cholesky factorization failed")))
}

/// Fit the ridge operator for one task.
pub fn fit_ridge_operator(task: &TaskDataset, c: f64) -> Result<RidgeOperator> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidConfig(format!("C must be > 0, got {c}")));
    }
    let d = task.dim();
    let m = task.len() as f64;
    let mut k = task.xxt() * (c / m);
    for i in 0..d {
        k[(i, i)] += 1.0;
    }
    let chol = spd_cholesky(k, "ridge operator")?;
    let a_raw = chol.inverse();
    // Symmetrize to make the invariant exact; inversion leaves ~1 ulp skew.
    let a = (&a_raw + a_raw.transpose()) * 0.5;
    let b = (&a * task.xy()) * (c / m);
    Ok(RidgeOperator {
        a,
        b,
        m: task.len(),
        c,
    })
}

/// Posterior mean `A w_P + b` for a given prior mean.
pub fn posterior_mean(op: &RidgeOperator, w_p: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(op.dim(), w_p.len())?;
    Ok(&op.a * w_p + &op.b)
}

/// Ridge solution with the regularizer centered at `w_p`; convenience for
/// `posterior_mean(fit_ridge_operator(task, c), w_p)`.
pub fn fit_with_prior(task: &TaskDataset, c: f64, w_p: &DVector<f64>) -> Result<DVector<f64>> {
    posterior_mean(&fit_ridge_operator(task, c)?, w_p)
}

/// Verify `BᵀB = I_k` within `tol` (Frobenius norm of the defect).
pub fn orthonormality_defect(basis: &DMatrix<f64>) -> f64 {
    let k = basis.ncols();
    let mut g = basis.transpose() * basis;
    for i in 0..k {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

pub(crate) fn require_orthonormal(basis: &DMatrix<f64>, tol: f64, what: &str) -> Result<()> {
    let defect = orthonormality_defect(basis);
    if !defect.is_finite() || defect > tol {
        return Err(Error::InvalidData(format!(
            "{what}: columns not orthonormal (defect {defect:.3e} > {tol:.0e})"
        )));
    }
    Ok(())
}

/// Ridge fit inside the subspace spanned by the orthonormal columns of `basis`:
///
/// ```text
/// w = (C/m) (I_k + (C/m) Bᵀ X Xᵀ B)⁻¹ Bᵀ X Y
/// ```
///
/// The predictor scores a sample x as ⟨w, Bᵀx⟩.
pub fn fit_subspace_ridge(task: &TaskDataset, c: f64, basis: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidConfig(format!("C must be > 0, got {c}")));
    }
    if basis.nrows() != task.dim() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows, task dimension is {}",
            basis.nrows(),
            task.dim()
        )));
    }
    require_orthonormal(basis, 1e-8, "subspace ridge")?;
    let m = task.len() as f64;
    let g = basis.transpose() * task.x(); // k × m
    let k_dim = basis.ncols();
    let mut h = &g * g.transpose() * (c / m);
    for i in 0..k_dim {
        h[(i, i)] += 1.0;
    }
    let chol = spd_cholesky(h, "subspace ridge")?;
    let rhs = &g * task.y() * (c / m);
    Ok(chol.solve(&rhs))
}
