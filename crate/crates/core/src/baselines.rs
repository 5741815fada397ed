//! Reference methods: independent ridge (no transfer) and adaptive ridge
//! regression (ARR), which regularizes toward the average of the observed
//! tasks' independent solutions. Scores produced by external systems can be
//! ingested from CSV for comparison tables.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::ridge::fit_with_prior;
use crate::task::{TaskDataset, TaskKind};

/// A linear predictor: ⟨w, x⟩ for regression, sign⟨w, x⟩ for classification.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    pub w: DVector<f64>,
    pub kind: TaskKind,
}

impl LinearPredictor {
    /// Raw score ⟨w, x⟩.
    pub fn score(&self, x: nalgebra::DVectorView<'_, f64>) -> f64 {
        self.w.dot(&x)
    }

    /// Prediction: the score for regression, its sign (ties → +1) for
    /// classification.
    pub fn predict(&self, x: nalgebra::DVectorView<'_, f64>) -> f64 {
        let s = self.score(x);
        match self.kind {
            TaskKind::Regression => s,
            TaskKind::Classification => {
                if s >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Serializable summary of a learned predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorRecord {
    pub w: Vec<f64>,
    pub kind: TaskKind,
}

impl From<&LinearPredictor> for PredictorRecord {
    fn from(p: &LinearPredictor) -> Self {
        Self {
            w: p.w.as_slice().to_vec(),
            kind: p.kind,
        }
    }
}

/// Ordinary ridge regression without transfer (zero prior).
pub fn fit_independent(task: &TaskDataset, c: f64) -> Result<LinearPredictor> {
    let w = fit_with_prior(task, c, &DVector::zeros(task.dim()))?;
    Ok(LinearPredictor { w, kind: task.kind() })
}

/// Average of the observed tasks' independent ridge solutions; the ARR prior.
/// Empty input yields the zero prior.
pub fn average_prior(observed: &[TaskDataset], c: f64, dim: usize) -> Result<DVector<f64>> {
    if observed.is_empty() {
        return Ok(DVector::zeros(dim));
    }
    let fits = par::map_slice(observed, |t| fit_independent(t, c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut acc = DVector::zeros(dim);
    for f in &fits {
        acc += &f.w;
    }
    Ok(acc / observed.len() as f64)
}

/// Adaptive ridge regression: ridge on the new task with the regularizer
/// centered at the average of the observed tasks' solutions.
pub fn fit_arr(observed: &[TaskDataset], new_task: &TaskDataset, c: f64) -> Result<LinearPredictor> {
    let prior = average_prior(observed, c, new_task.dim())?;
    let w = fit_with_prior(new_task, c, &prior)?;
    Ok(LinearPredictor {
        w,
        kind: new_task.kind(),
    })
}

/// Per-task scores produced by an external system, keyed by task id and
/// indexed by sample position.
pub type ExternalScores = BTreeMap<String, Vec<(usize, f64)>>;

/// Load externally produced predictions from CSV rows of
/// `task_id,sample_index,score`, for comparison against the methods here.
pub fn load_external_scores(path: &Path) -> Result<ExternalScores> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut scores: ExternalScores = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse(format!("expected 3 fields, got {}", fields.len())));
        }
        let id = fields[0].trim().to_string();
        let index: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse(format!("bad sample index {:?}", fields[1])))?;
        let score: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse(format!("bad score {:?}", fields[2])))?;
        if !score.is_finite() {
            return Err(parse("non-finite score".into()));
        }
        scores.entry(id).or_default().push((index, score));
    }
    if scores.is_empty() {
        return Err(Error::InvalidData(format!("{}: no score rows", path.display())));
    }
    Ok(scores)
}

/// Align external scores for one task with its labels, in score-row order.
/// Indices must address samples of the task; missing samples are allowed
/// (the external system may have scored a subset).
pub fn align_external_scores(task: &TaskDataset, scores: &ExternalScores) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = scores
        .get(task.id())
        .ok_or_else(|| Error::InvalidData(format!("no external scores for task {}", task.id())))?;
    let mut s = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for &(index, score) in rows {
        if index >= task.len() {
            return Err(Error::InvalidData(format!(
                "task {}: sample index {index} out of range (m = {})",
                task.id(),
                task.len()
            )));
        }
        s.push(score);
        y.push(task.y()[index]);
    }
    Ok((s, y))
}
