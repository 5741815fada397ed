//! The experimental protocol: repeated random hold-out splits, learning a
//! transfer object on fractions of the observed tasks, cross-validated
//! regularization, and held-out evaluation.
//!
//! Repetitions draw from per-repetition ChaCha streams and reduce in index
//! order, so a report is bit-identical for any thread count.

mod metrics;

pub use metrics::{auc, mse, principal_angles, zero_one, Metric};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::average_prior;
use crate::error::{Error, Result};
use crate::par;
use crate::plg::{solve_plg_classification, solve_plg_regression, CgConfig};
use crate::pll::{solve_pll, CurvilinearConfig, StiefelPoint};
use crate::ridge::{fit_subspace_ridge, fit_with_prior};
use crate::task::{BoundConfig, TaskDataset, TaskEnvironment, TaskKind};

/// Transfer method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Independent,
    Arr,
    Plg,
    Pll { k: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Independent => "independent",
            Method::Arr => "arr",
            Method::Plg => "plg",
            Method::Pll { .. } => "pll",
        }
    }
}

fn default_repetitions() -> usize {
    100
}

fn default_fractions() -> Vec<f64> {
    vec![0.2, 0.4, 0.6, 0.8, 1.0]
}

fn default_c_grid() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]
}

fn default_folds() -> usize {
    3
}

fn default_holdout_train_fraction() -> f64 {
    0.5
}

/// Experimental protocol settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Protocol {
    pub n_holdout: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_fractions")]
    pub observed_fractions: Vec<f64>,
    #[serde(default = "default_c_grid")]
    pub c_grid: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Fraction of each held-out task's samples used for training; the rest
    /// is the test set.
    #[serde(default = "default_holdout_train_fraction")]
    pub holdout_train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Optimizer overrides; defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg: Option<CgConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cc: Option<CurvilinearConfig>,
}

impl Protocol {
    pub fn validate(&self, total_tasks: usize) -> Result<()> {
        if self.n_holdout == 0 || self.n_holdout >= total_tasks {
            return Err(Error::InvalidConfig(format!(
                "n_holdout={} must be in [1, {})",
                self.n_holdout, total_tasks
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
        }
        if self.observed_fractions.is_empty()
            || self
                .observed_fractions
                .iter()
                .any(|&f| !(f > 0.0 && f <= 1.0))
            || self
                .observed_fractions
                .windows(2)
                .any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidConfig(
                "observed_fractions must be strictly ascending within (0, 1]".into(),
            ));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
            return Err(Error::InvalidConfig("c_grid must be nonempty and positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be >= 2".into()));
        }
        if !(self.holdout_train_fraction > 0.0 && self.holdout_train_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "holdout_train_fraction must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Aggregated result for one (method, observed-count, metric) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub n_observed: usize,
    pub metric: Metric,
    pub mean: f64,
    pub std_error: f64,
    pub per_rep: Vec<f64>,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let valid: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if valid.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = valid.len() as f64;
    let mean = valid.iter().sum::<f64>() / n;
    if valid.len() < 2 {
        return (mean, 0.0);
    }
    let var = valid.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// The object learned from observed tasks and handed to future tasks.
enum TransferObject {
    VectorPrior(DVector<f64>),
    Subspace(StiefelPoint),
}

fn learn_transfer(
    observed: &[TaskDataset],
    method: &Method,
    cfg: &BoundConfig,
    cg: &CgConfig,
    cc: &CurvilinearConfig,
) -> Result<TransferObject> {
    let d = observed
        .first()
        .map(|t| t.dim())
        .ok_or_else(|| Error::InvalidData("no observed tasks".into()))?;
    match method {
        Method::Independent => Ok(TransferObject::VectorPrior(DVector::zeros(d))),
        Method::Arr => Ok(TransferObject::VectorPrior(average_prior(observed, cfg.c, d)?)),
        Method::Plg => {
            let h = match observed[0].kind() {
                TaskKind::Regression => solve_plg_regression(observed, cfg)?,
                TaskKind::Classification => solve_plg_classification(observed, cfg, cg)?.0,
            };
            Ok(TransferObject::VectorPrior(h.w_q))
        }
        Method::Pll { k } => {
            let (point, _) = solve_pll(observed, *k, cfg, cc, None)?;
            Ok(TransferObject::Subspace(point))
        }
    }
}

/// Scores of the predictor trained on `train` (with the transfer object) on
/// the columns of `test_x`.
fn score_task(
    transfer: &TransferObject,
    train: &TaskDataset,
    test: &TaskDataset,
    c: f64,
) -> Result<Vec<f64>> {
    match transfer {
        TransferObject::VectorPrior(prior) => {
            let w = fit_with_prior(train, c, prior)?;
            Ok((0..test.len()).map(|j| test.x().column(j).dot(&w)).collect())
        }
        TransferObject::Subspace(point) => {
            let w = fit_subspace_ridge(train, c, point.matrix())?;
            let proj = point.matrix().transpose() * test.x(); // k × m
            Ok((0..test.len()).map(|j| proj.column(j).dot(&w)).collect())
        }
    }
}

fn per_task_metric(metric: Metric, scores: &[f64], labels: &[f64], scale: f64) -> Option<f64> {
    match metric {
        Metric::Auc => {
            let has_pos = labels.contains(&1.0);
            let has_neg = labels.iter().any(|&l| l == -1.0);
            if has_pos && has_neg {
                auc(scores, labels).ok()
            } else {
                None
            }
        }
        Metric::ZeroOne => zero_one(scores, labels).ok(),
        Metric::Mse => mse(scores, labels, scale).ok(),
    }
}

/// Contiguous split of `0..m` into `folds` nearly equal parts.
fn fold_ranges(m: usize, folds: usize) -> Vec<std::ops::Range<usize>> {
    (0..folds)
        .map(|p| (p * m / folds)..((p + 1) * m / folds))
        .collect()
}

/// Ordinary k-fold cross-validation of the within-task regularization for a
/// single task with zero prior; used by the no-transfer baseline so that it
/// never looks at other tasks. Falls back to the smallest grid value when
/// the task is too small to fold.
fn ordinary_cv_ridge(task: &TaskDataset, grid: &[f64], folds: usize) -> Result<f64> {
    let grid = sorted_grid(grid)?;
    if grid.len() == 1 || task.len() < folds.max(2) {
        return Ok(grid[0]);
    }
    let ranges = fold_ranges(task.len(), folds);
    let mut best = (f64::INFINITY, grid[0]);
    for &c in &grid {
        let mut scores = Vec::with_capacity(folds);
        for test_range in &ranges {
            let test_idx: Vec<usize> = test_range.clone().collect();
            let train_idx: Vec<usize> =
                (0..task.len()).filter(|i| !test_range.contains(i)).collect();
            if train_idx.is_empty() || test_idx.is_empty() {
                continue;
            }
            let train = task.subset(&train_idx, "cv-train")?;
            let test = task.subset(&test_idx, "cv-test")?;
            let w = fit_with_prior(&train, c, &DVector::zeros(task.dim()))?;
            let preds: Vec<f64> = (0..test.len()).map(|j| test.x().column(j).dot(&w)).collect();
            let labels: Vec<f64> = test.y().iter().copied().collect();
            let s = match task.kind() {
                TaskKind::Classification => zero_one(&preds, &labels)?,
                TaskKind::Regression => mse(&preds, &labels, 1.0)?,
            };
            scores.push(s);
        }
        if scores.is_empty() {
            continue;
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        if mean < best.0 {
            best = (mean, c);
        }
    }
    Ok(best.1)
}

fn sorted_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty regularization grid".into()));
    }
    if grid.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
        return Err(Error::InvalidConfig("grid values must be positive".into()));
    }
    let mut g = grid.to_vec();
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g.dedup();
    Ok(g)
}

/// Select the regularization strength by rotating thirds: one part of every
/// task learns the prior jointly, the next part trains per-task predictors
/// with that prior, the remaining parts measure their quality. Ties resolve
/// toward the smaller value. Tasks with fewer samples than folds are
/// excluded.
pub fn cv_select_c(
    observed: &[TaskDataset],
    method: &Method,
    grid: &[f64],
    folds: usize,
    cfg: &BoundConfig,
    cg: &CgConfig,
    cc: &CurvilinearConfig,
) -> Result<f64> {
    let grid = sorted_grid(grid)?;
    if observed.is_empty() {
        return Err(Error::InvalidData("no observed tasks".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidConfig("folds must be >= 2".into()));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let usable: Vec<&TaskDataset> = observed.iter().filter(|t| t.len() >= folds).collect();
    if usable.is_empty() {
        return Err(Error::InvalidData(format!(
            "every task has fewer than {folds} samples"
        )));
    }

    let mut best = (f64::INFINITY, grid[0]);
    for &c in &grid {
        let cfg_c = cfg.with_c(c);
        let mut rotation_scores = Vec::with_capacity(folds);
        for r in 0..folds {
            let prior_part = r;
            let train_part = (r + 1) % folds;
            // Prior learned jointly from one part of every task.
            let prior_tasks: Vec<TaskDataset> = usable
                .iter()
                .map(|t| {
                    let ranges = fold_ranges(t.len(), folds);
                    let idx: Vec<usize> = ranges[prior_part].clone().collect();
                    t.subset(&idx, format!("{}-prior", t.id()))
                })
                .collect::<Result<Vec<_>>>()?;
            let transfer = learn_transfer(&prior_tasks, method, &cfg_c, cg, cc)?;

            let mut task_scores = Vec::with_capacity(usable.len());
            for t in &usable {
                let ranges = fold_ranges(t.len(), folds);
                let train_idx: Vec<usize> = ranges[train_part].clone().collect();
                let test_idx: Vec<usize> = (0..folds)
                    .filter(|&p| p != prior_part && p != train_part)
                    .flat_map(|p| ranges[p].clone())
                    .collect();
                if train_idx.is_empty() || test_idx.is_empty() {
                    continue;
                }
                let train = t.subset(&train_idx, format!("{}-train", t.id()))?;
                let test = t.subset(&test_idx, format!("{}-test", t.id()))?;
                let scores = score_task(&transfer, &train, &test, c)?;
                let labels: Vec<f64> = test.y().iter().copied().collect();
                let s = match t.kind() {
                    TaskKind::Classification => zero_one(&scores, &labels)?,
                    TaskKind::Regression => mse(&scores, &labels, 1.0)?,
                };
                task_scores.push(s);
            }
            if !task_scores.is_empty() {
                rotation_scores.push(task_scores.iter().sum::<f64>() / task_scores.len() as f64);
            }
        }
        if rotation_scores.is_empty() {
            continue;
        }
        let mean = rotation_scores.iter().sum::<f64>() / rotation_scores.len() as f64;
        if mean < best.0 {
            best = (mean, c);
        }
    }
    Ok(best.1)
}

/// One held-out task, already split for this repetition.
struct HeldoutSplit {
    train: TaskDataset,
    test: TaskDataset,
}

/// Run the full protocol for one method.
///
/// All tasks in the environment form the pool; each repetition draws its own
/// hold-out set of `n_holdout` tasks and its own train/test split inside
/// each held-out task. Classification environments report AUC and 0/1
/// error; regression environments report MSE (rescaled by the label scale).
pub fn run_experiment(
    env: &TaskEnvironment,
    method: &Method,
    protocol: &Protocol,
    cfg: &BoundConfig,
) -> Result<Vec<MetricReport>> {
    cfg.validate()?;
    // Canonical order by id: reports do not depend on how the environment
    // happened to list its tasks.
    let mut pool: Vec<&TaskDataset> = env.all_tasks().collect();
    pool.sort_by(|a, b| a.id().cmp(b.id()));
    protocol.validate(pool.len())?;
    if let Method::Pll { k } = method {
        if *k == 0 || *k > env.dim() {
            return Err(Error::InvalidConfig(format!(
                "subspace dimension k={k} must be in [1, {}]",
                env.dim()
            )));
        }
    }
    let cg = protocol.cg.clone().unwrap_or_default();
    let cc = protocol.cc.clone().unwrap_or_default();
    let metrics: Vec<Metric> = match env.kind() {
        TaskKind::Classification => vec![Metric::Auc, Metric::ZeroOne],
        TaskKind::Regression => vec![Metric::Mse],
    };
    let trainpool_len = pool.len() - protocol.n_holdout;
    let n_observed_per_fraction: Vec<usize> = protocol
        .observed_fractions
        .iter()
        .map(|f| ((f * trainpool_len as f64).round() as usize).clamp(1, trainpool_len))
        .collect();

    // rep -> fraction -> metric -> value
    let rep_values: Vec<Result<Vec<Vec<f64>>>> = par::map_range(protocol.repetitions, |rep| {
        run_one_rep(
            env, &pool, method, protocol, cfg, &cg, &cc, &metrics, &n_observed_per_fraction, rep,
        )
    });
    let rep_values = rep_values.into_iter().collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    for (fi, &n_obs) in n_observed_per_fraction.iter().enumerate() {
        for (mi, metric) in metrics.iter().enumerate() {
            let per_rep: Vec<f64> = rep_values.iter().map(|r| r[fi][mi]).collect();
            let (mean, std_error) = mean_and_stderr(&per_rep);
            reports.push(MetricReport {
                method: method.name().to_string(),
                n_observed: n_obs,
                metric: *metric,
                mean,
                std_error,
                per_rep,
            });
        }
    }
    Ok(reports)
}

#[allow(clippy::too_many_arguments)]
fn run_one_rep(
    env: &TaskEnvironment,
    pool: &[&TaskDataset],
    method: &Method,
    protocol: &Protocol,
    cfg: &BoundConfig,
    cg: &CgConfig,
    cc: &CurvilinearConfig,
    metrics: &[Metric],
    n_observed_per_fraction: &[usize],
    rep: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha12Rng::seed_from_u64(protocol.seed);
    rng.set_stream(rep as u64 + 1);

    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);
    let (holdout_idx, trainpool_idx) = order.split_at(protocol.n_holdout);

    // Held-out splits are fixed per repetition, before any fraction loop, so
    // methods that ignore observed tasks see identical evaluation data for
    // every fraction.
    let mut holdout = Vec::new();
    for &i in holdout_idx {
        let t = pool[i];
        if t.len() < 2 {
            continue; // cannot split; excluded from evaluation
        }
        let mut sample_order: Vec<usize> = (0..t.len()).collect();
        sample_order.shuffle(&mut rng);
        let train_m = ((t.len() as f64 * protocol.holdout_train_fraction).floor() as usize)
            .clamp(1, t.len() - 1);
        let (train_idx, test_idx) = sample_order.split_at(train_m);
        holdout.push(HeldoutSplit {
            train: t.subset(train_idx, format!("{}-train", t.id()))?,
            test: t.subset(test_idx, format!("{}-test", t.id()))?,
        });
    }
    if holdout.is_empty() {
        return Err(Error::InvalidData(
            "no held-out task has at least 2 samples".into(),
        ));
    }

    // The no-transfer baseline tunes per held-out task only; its C does not
    // depend on the observed tasks at all.
    let independent_cs: Vec<f64> = if matches!(method, Method::Independent) {
        holdout
            .iter()
            .map(|h| ordinary_cv_ridge(&h.train, &protocol.c_grid, protocol.folds))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut out = Vec::with_capacity(n_observed_per_fraction.len());
    for &n_obs in n_observed_per_fraction {
        let observed: Vec<TaskDataset> = trainpool_idx[..n_obs]
            .iter()
            .map(|&i| pool[i].clone())
            .collect();

        let values: Vec<f64> = if matches!(method, Method::Independent) {
            let mut per_metric = vec![Vec::new(); metrics.len()];
            for (h, &c) in holdout.iter().zip(&independent_cs) {
                let transfer = TransferObject::VectorPrior(DVector::zeros(env.dim()));
                let scores = score_task(&transfer, &h.train, &h.test, c)?;
                let labels: Vec<f64> = h.test.y().iter().copied().collect();
                for (mi, metric) in metrics.iter().enumerate() {
                    if let Some(v) = per_task_metric(*metric, &scores, &labels, env.label_scale()) {
                        per_metric[mi].push(v);
                    }
                }
            }
            per_metric
                .iter()
                .map(|vs| {
                    if vs.is_empty() {
                        f64::NAN
                    } else {
                        vs.iter().sum::<f64>() / vs.len() as f64
                    }
                })
                .collect()
        } else {
            let c = if protocol.c_grid.len() == 1 {
                protocol.c_grid[0]
            } else {
                cv_select_c(&observed, method, &protocol.c_grid, protocol.folds, cfg, cg, cc)?
            };
            let cfg_c = cfg.with_c(c);
            let transfer = learn_transfer(&observed, method, &cfg_c, cg, cc)?;
            let mut per_metric = vec![Vec::new(); metrics.len()];
            for h in &holdout {
                let scores = score_task(&transfer, &h.train, &h.test, c)?;
                let labels: Vec<f64> = h.test.y().iter().copied().collect();
                for (mi, metric) in metrics.iter().enumerate() {
                    if let Some(v) = per_task_metric(*metric, &scores, &labels, env.label_scale()) {
                        per_metric[mi].push(v);
                    }
                }
            }
            per_metric
                .iter()
                .map(|vs| {
                    if vs.is_empty() {
                        f64::NAN
                    } else {
                        vs.iter().sum::<f64>() / vs.len() as f64
                    }
                })
                .collect()
        };
        out.push(values);
    }
    Ok(out)
}

/// Plot-ready summary: `method,n_observed,metric,mean,stderr` rows.
pub fn summary_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("method,n_observed,metric,mean,stderr\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method, r.n_observed, r.metric, r.mean, r.std_error
        ));
    }
    out
}
