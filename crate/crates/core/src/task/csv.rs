//! CSV ingestion and serialization.
//!
//! Task format: UTF-8, comma-separated, no header, one sample per row, label
//! in the last column. An environment manifest (JSON) lists the task files,
//! the task kind, the bias flag, and which task ids are held out.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{TaskDataset, TaskEnvironment, TaskKind};
use crate::error::{Error, Result};

/// Manifest describing an on-disk environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvManifest {
    pub kind: TaskKind,
    pub bias: bool,
    /// Task CSV paths, relative to the manifest's directory.
    pub tasks: Vec<PathBuf>,
    /// Ids (file stems) of held-out tasks.
    #[serde(default)]
    pub holdout: Vec<String>,
    /// When present, regression labels are stored already scaled and the
    /// loader adopts this constant instead of rescaling. Written by
    /// [`save_environment`] so saved environments round-trip bit-exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_scale: Option<f64>,
}

struct RawTask {
    id: String,
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

fn parse_task_csv(path: &Path) -> Result<RawTask> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    if id.is_empty() {
        return Err(Error::InvalidData(format!("cannot derive task id from {}", path.display())));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: "need at least one feature and a label".into(),
            });
        }
        let mut row = Vec::with_capacity(fields.len() - 1);
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("cannot parse field {} ({f:?}) as a number", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("non-finite value in field {}", col + 1),
                });
            }
            if col + 1 == fields.len() {
                labels.push(v);
            } else {
                row.push(v);
            }
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("row has {} features, expected {w}", row.len()),
                })
            }
            _ => {}
        }
        features.push(row);
    }
    if features.is_empty() {
        return Err(Error::InvalidData(format!("{}: empty task file", path.display())));
    }
    Ok(RawTask { id, features, labels })
}

fn build_dataset(raw: RawTask, kind: TaskKind, bias: bool, map_01: bool, scale: f64) -> Result<TaskDataset> {
    let m = raw.features.len();
    let d_in = raw.features[0].len();
    let d = if bias { d_in + 1 } else { d_in };
    let x = DMatrix::from_fn(d, m, |r, c| {
        if r < d_in {
            raw.features[c][r]
        } else {
            1.0
        }
    });
    let y = DVector::from_fn(m, |j, _| match kind {
        TaskKind::Classification => {
            if map_01 {
                if raw.labels[j] == 0.0 {
                    -1.0
                } else {
                    1.0
                }
            } else {
                raw.labels[j]
            }
        }
        TaskKind::Regression => raw.labels[j] / scale,
    });
    TaskDataset::new(raw.id, x, y, kind)
}

fn assemble(
    raws: Vec<RawTask>,
    kind: TaskKind,
    bias: bool,
    holdout_ids: &[String],
    stored_scale: Option<f64>,
) -> Result<TaskEnvironment> {
    let d0 = raws[0].features[0].len();
    for r in &raws {
        if r.features[0].len() != d0 {
            return Err(Error::DimensionMismatch(format!(
                "task {} has {} features, expected {d0}",
                r.id,
                r.features[0].len()
            )));
        }
    }
    for id in holdout_ids {
        if !raws.iter().any(|r| &r.id == id) {
            return Err(Error::InvalidData(format!("holdout id {id} not among task files")));
        }
    }
    let is_heldout = |id: &str| holdout_ids.iter().any(|h| h == id);

    let mut map_01 = false;
    let mut scale = 1.0;
    match kind {
        TaskKind::Classification => {
            let all = raws.iter().flat_map(|r| r.labels.iter());
            if all.clone().all(|&y| y == 1.0 || y == -1.0) {
                map_01 = false;
            } else if all.clone().all(|&y| y == 0.0 || y == 1.0) {
                map_01 = true;
            } else {
                return Err(Error::InvalidData(
                    "classification labels must be {-1,+1} or {0,1}".into(),
                ));
            }
        }
        TaskKind::Regression => {
            if let Some(s) = stored_scale {
                scale = 1.0; // labels already scaled on disk
                if !(s.is_finite() && s > 0.0) {
                    return Err(Error::InvalidData(format!("manifest label_scale {s} invalid")));
                }
            } else {
                // Scores must be nonnegative; the scaling constant comes from
                // observed tasks only, so held-out tasks cannot influence it.
                let mut max = 0.0f64;
                for r in &raws {
                    for &y in &r.labels {
                        if y < 0.0 {
                            return Err(Error::InvalidData(format!(
                                "task {}: regression labels must be nonnegative scores",
                                r.id
                            )));
                        }
                        if !is_heldout(&r.id) {
                            max = max.max(y);
                        }
                    }
                }
                scale = if max > 0.0 { max } else { 1.0 };
            }
        }
    }

    let mut observed = Vec::new();
    let mut heldout = Vec::new();
    for raw in raws {
        let held = is_heldout(&raw.id);
        let task = build_dataset(raw, kind, bias, map_01, scale)?;
        if held {
            heldout.push(task);
        } else {
            observed.push(task);
        }
    }
    let label_scale = stored_scale.unwrap_or(scale);
    TaskEnvironment::new(observed, heldout, label_scale)
}

/// Load every `*.csv` in a directory as one task each; no held-out split.
///
/// Regression labels are divided by the maximum over all tasks (all are
/// observed here); classification labels given as {0,1} are mapped to ±1.
/// With `bias`, a constant-1 feature is appended.
pub fn load_tasks_csv(dir: &Path, kind: TaskKind, bias: bool) -> Result<TaskEnvironment> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidData(format!("no .csv task files in {}", dir.display())));
    }
    let raws = paths.iter().map(|p| parse_task_csv(p)).collect::<Result<Vec<_>>>()?;
    assemble(raws, kind, bias, &[], None)
}

/// Load an environment described by a JSON manifest (see [`EnvManifest`]).
pub fn load_environment(manifest_path: &Path) -> Result<TaskEnvironment> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: EnvManifest = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", manifest_path.display())))?;
    if manifest.tasks.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{}: manifest lists no tasks",
            manifest_path.display()
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let raws = manifest
        .tasks
        .iter()
        .map(|rel| parse_task_csv(&base.join(rel)))
        .collect::<Result<Vec<_>>>()?;
    assemble(raws, manifest.kind, manifest.bias, &manifest.holdout, manifest.label_scale)
}

/// Write an environment as one CSV per task plus a manifest.
///
/// Values are printed with shortest round-trip formatting, so loading the
/// result reproduces the same floats in the same order. Stored labels are the
/// in-memory (already scaled) ones; the manifest records `label_scale` so the
/// loader does not rescale.
pub fn save_environment(env: &TaskEnvironment, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tasks = Vec::new();
    for t in env.all_tasks() {
        let rel = PathBuf::from(format!("{}.csv", t.id()));
        let mut out = String::new();
        for j in 0..t.len() {
            for r in 0..t.dim() {
                out.push_str(&format!("{},", t.x()[(r, j)]));
            }
            out.push_str(&format!("{}\n", t.y()[j]));
        }
        fs::write(dir.join(&rel), out).map_err(|e| Error::io(dir.join(&rel), e))?;
        tasks.push(rel);
    }
    let manifest = EnvManifest {
        kind: env.kind(),
        bias: false,
        tasks,
        holdout: env.heldout().iter().map(|t| t.id().to_string()).collect(),
        label_scale: Some(env.label_scale()),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidData(format!("manifest serialization: {e}")))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
