//! Core data model: per-task datasets, task environments, and configuration
//! shared by the learners, the bound engine, and the evaluation harness.

mod csv;
mod synth;

pub use csv::{load_environment, load_tasks_csv, save_environment, EnvManifest};
pub use synth::{generate_synthetic, GroundTruth, SyntheticMode, SyntheticSpec};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a task's labels are binary (±1) or real-valued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// One task: a design matrix whose columns are samples, plus labels.
///
/// The Gram matrix `X Xᵀ` and the moment vector `X Y` are computed once at
/// construction; they are reused by the ridge learner, the bound engine, and
/// both optimizers.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    id: String,
    x: DMatrix<f64>,
    y: DVector<f64>,
    kind: TaskKind,
    xxt: DMatrix<f64>,
    xy: DVector<f64>,
}

impl TaskDataset {
    /// Validates dimensions, finiteness, and (for classification) that every
    /// label is exactly ±1. Regression label ranges are enforced at CSV
    /// ingestion, where the score scaling happens, not here.
    pub fn new(id: impl Into<String>, x: DMatrix<f64>, y: DVector<f64>, kind: TaskKind) -> Result<Self> {
        let id = id.into();
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidData(format!("task {id}: empty design matrix")));
        }
        if x.ncols() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "task {id}: {} samples but {} labels",
                x.ncols(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("task {id}: non-finite values")));
        }
        if kind == TaskKind::Classification && y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidData(format!(
                "task {id}: classification labels must be exactly +1 or -1"
            )));
        }
        let xxt = &x * x.transpose();
        let xy = &x * &y;
        Ok(Self { id, x, y, kind, xxt, xy })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Design matrix, `d × m`; columns are samples.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Labels, length `m`.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Sample count `m`.
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    /// Cached `X Xᵀ` (`d × d`).
    pub fn xxt(&self) -> &DMatrix<f64> {
        &self.xxt
    }

    /// Cached `X Y` (length `d`).
    pub fn xy(&self) -> &DVector<f64> {
        &self.xy
    }

    /// New dataset holding the selected sample columns, in the given order.
    pub fn subset(&self, indices: &[usize], id: impl Into<String>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidData(format!(
                "task {}: empty sample subset",
                self.id
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidData(format!(
                "task {}: sample index {bad} out of range",
                self.id
            )));
        }
        let x = DMatrix::from_fn(self.dim(), indices.len(), |r, c| self.x[(r, indices[c])]);
        let y = DVector::from_fn(indices.len(), |r, _| self.y[indices[r]]);
        Self::new(id, x, y, self.kind)
    }
}

/// A set of observed tasks plus (optionally) held-out future tasks.
#[derive(Debug, Clone)]
pub struct TaskEnvironment {
    observed: Vec<TaskDataset>,
    heldout: Vec<TaskDataset>,
    label_scale: f64,
}

impl TaskEnvironment {
    pub fn new(observed: Vec<TaskDataset>, heldout: Vec<TaskDataset>, label_scale: f64) -> Result<Self> {
        if observed.is_empty() && heldout.is_empty() {
            return Err(Error::InvalidData("environment has no tasks".into()));
        }
        if !(label_scale.is_finite() && label_scale > 0.0) {
            return Err(Error::InvalidData(format!(
                "label_scale must be positive, got {label_scale}"
            )));
        }
        let first = observed.first().or_else(|| heldout.first()).unwrap();
        let (d, kind) = (first.dim(), first.kind());
        for t in observed.iter().chain(&heldout) {
            if t.dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "task {} has d={}, expected {d}",
                    t.id(),
                    t.dim()
                )));
            }
            if t.kind() != kind {
                return Err(Error::InvalidData(format!(
                    "task {} has a different task kind",
                    t.id()
                )));
            }
        }
        for o in &observed {
            if heldout.iter().any(|h| h.id() == o.id()) {
                return Err(Error::InvalidData(format!(
                    "task id {} appears in both observed and heldout",
                    o.id()
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for t in observed.iter().chain(&heldout) {
            if !seen.insert(t.id()) {
                return Err(Error::InvalidData(format!("duplicate task id {}", t.id())));
            }
        }
        Ok(Self { observed, heldout, label_scale })
    }

    pub fn observed(&self) -> &[TaskDataset] {
        &self.observed
    }

    pub fn heldout(&self) -> &[TaskDataset] {
        &self.heldout
    }

    /// The constant regression labels were divided by (1.0 for classification).
    pub fn label_scale(&self) -> f64 {
        self.label_scale
    }

    pub fn dim(&self) -> usize {
        self.observed
            .first()
            .or_else(|| self.heldout.first())
            .map(|t| t.dim())
            .unwrap_or(0)
    }

    pub fn kind(&self) -> TaskKind {
        self.observed
            .first()
            .or_else(|| self.heldout.first())
            .map(|t| t.kind())
            .unwrap_or(TaskKind::Regression)
    }

    pub fn all_tasks(&self) -> impl Iterator<Item = &TaskDataset> {
        self.observed.iter().chain(&self.heldout)
    }
}

/// Bound hyperparameters: hyperprior variance scale, confidence, and the
/// within-task regularization strength.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundConfig {
    pub sigma: f64,
    pub delta: f64,
    pub c: f64,
}

impl BoundConfig {
    pub fn new(sigma: f64, delta: f64, c: f64) -> Result<Self> {
        let cfg = Self { sigma, delta, c };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.delta.is_finite() && self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidConfig(format!("C must be > 0, got {}", self.c)));
        }
        Ok(())
    }

    /// Same hyperparameters with a different regularization strength.
    pub fn with_c(&self, c: f64) -> Self {
        Self { c, ..*self }
    }
}
