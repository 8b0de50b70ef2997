//! Metrics, split generation and the repeated-evaluation harness.

use std::fmt::Write as _;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::models::{self, ModelError, PipelineSpec};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("class {label} has {count} members; at least 2 are required")]
    ClassTooSmall { label: u8, count: usize },
    #[error("train ratio {0} must lie strictly between 0 and 1")]
    InvalidRatio(f64),
    #[error("n_runs must be at least 1")]
    NoRuns,
    #[error("grid point {requested} exceeds the {available} available training samples")]
    GridExceedsData { requested: usize, available: usize },
    #[error("analysis columns {expected:?} do not match test columns {found:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    (labels.len() - pos, pos)
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let (n_neg, n_pos) = class_counts(labels);
    if n_neg == 0 || n_pos == 0 {
        return Err(EvalError::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of midranks of positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let (n_pos, n_neg) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// ROC vertices from the highest threshold down, starting at (0, 0) and
/// ending at (1, 1). Tied scores produce a single diagonal step.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let (n_neg, n_pos) = class_counts(labels);
    if n_neg == 0 || n_pos == 0 {
        return Err(EvalError::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut fpr, mut tpr) = (vec![0.0], vec![0.0]);
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = order.get(k + 1).map_or(true, |&n| scores[n] != scores[i]);
        if group_ends {
            fpr.push(fp as f64 / n_neg as f64);
            tpr.push(tp as f64 / n_pos as f64);
        }
    }
    Ok((fpr, tpr))
}

pub fn accuracy(predicted: &[u8], labels: &[u8]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: predicted.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Population mean and standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    /// Ascending row indices.
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub splits: Vec<Split>,
    pub stratified: bool,
    pub ratio: f64,
    pub seed: u64,
}

/// Number of members of a class of size `count` that go to training.
pub fn train_share(count: usize, ratio: f64) -> usize {
    ((ratio * count as f64).round() as usize).clamp(1, count - 1)
}

/// Independent stratified splits. Split `i` shuffles each class with a
/// generator derived from `(seed, i)` and sends the first
/// `round(ratio * class_count)` members (clamped so both sides keep one
/// member) to training.
pub fn stratified_shuffle_splits(
    labels: &[u8],
    n_splits: usize,
    train_ratio: f64,
    seed_value: u64,
) -> Result<SplitPlan> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(EvalError::InvalidRatio(train_ratio));
    }
    let classes: Vec<(u8, Vec<usize>)> = [0u8, 1]
        .into_iter()
        .map(|c| (c, (0..labels.len()).filter(|&i| labels[i] == c).collect()))
        .collect();
    for (label, members) in &classes {
        if members.len() < 2 {
            return Err(EvalError::ClassTooSmall {
                label: *label,
                count: members.len(),
            });
        }
    }
    let splits = (0..n_splits)
        .map(|s| {
            let mut rng = seed::rng(seed::derive_index(seed_value, s as u64));
            let (mut train, mut validation) = (Vec::new(), Vec::new());
            for (_, members) in &classes {
                let mut shuffled = members.clone();
                shuffled.shuffle(&mut rng);
                let cut = train_share(shuffled.len(), train_ratio);
                train.extend_from_slice(&shuffled[..cut]);
                validation.extend_from_slice(&shuffled[cut..]);
            }
            train.sort_unstable();
            validation.sort_unstable();
            Split { train, validation }
        })
        .collect();
    Ok(SplitPlan {
        splits,
        stratified: true,
        ratio: train_ratio,
        seed: seed_value,
    })
}

/// Seeded split of group identifiers (e.g. expositions) into a `ratio` share
/// and the remainder, each side keeping at least one group. Input order does
/// not matter; both outputs are sorted.
pub fn split_groups(
    ids: &[String],
    ratio: f64,
    seed_value: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(EvalError::InvalidRatio(ratio));
    }
    let mut unique = ids.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() < 2 {
        return Err(EvalError::Empty);
    }
    unique.shuffle(&mut seed::rng_for(seed_value, "group-split"));
    let cut = train_share(unique.len(), ratio);
    let mut first = unique[..cut].to_vec();
    let mut second = unique[cut..].to_vec();
    first.sort();
    second.sort();
    Ok((first, second))
}

pub const FPR_GRID_POINTS: usize = 101;

/// `[0, 0.01, ..., 1]`.
pub fn fpr_grid() -> Vec<f64> {
    (0..FPR_GRID_POINTS)
        .map(|i| i as f64 / (FPR_GRID_POINTS - 1) as f64)
        .collect()
}

/// Linear interpolation of a ROC polyline onto `grid`. Where several vertices
/// share an FPR the highest TPR is used.
pub fn interpolate_tpr(fpr: &[f64], tpr: &[f64], grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&g| {
            // first vertex strictly to the right of g
            let right = fpr.partition_point(|&f| f <= g);
            if right == 0 {
                return tpr[0];
            }
            let left = right - 1;
            if fpr[left] == g || right == fpr.len() {
                return tpr[left];
            }
            let w = (g - fpr[left]) / (fpr[right] - fpr[left]);
            tpr[left] + w * (tpr[right] - tpr[left])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_runs: usize,
    pub train_ratio: f64,
    pub seed: u64,
    /// Scores at or above this are labelled 1 for accuracy.
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_runs: 500,
            train_ratio: 0.8,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl EvalConfig {
    fn check(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(EvalError::NoRuns);
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(EvalError::InvalidRatio(self.train_ratio));
        }
        Ok(())
    }
}

/// Seed handed to the pipeline in run `run`.
pub fn run_seed(base: u64, run: usize) -> u64 {
    seed::derive_index(seed::derive(base, "run"), run as u64)
}

#[derive(Debug, Clone, PartialEq)]
struct RunOutcome {
    accuracy: f64,
    roc_auc: f64,
    tpr: Vec<f64>,
}

fn score_run(
    spec: &PipelineSpec,
    x: ArrayView2<f64>,
    y: &[u8],
    train: &[usize],
    xv: ArrayView2<f64>,
    yv: &[u8],
    threshold: f64,
    grid: &[f64],
) -> Result<RunOutcome> {
    let xt = x.select(Axis(0), train);
    let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
    let fitted = models::fit(spec, xt.view(), &yt)?;
    let scores = fitted.predict_scores(xv)?;
    let (fpr, tpr) = roc_curve(&scores, yv)?;
    Ok(RunOutcome {
        accuracy: accuracy(&models::labels_from_scores(&scores, threshold), yv)?,
        roc_auc: roc_auc(&scores, yv)?,
        tpr: interpolate_tpr(&fpr, &tpr, grid),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_roc_auc: f64,
    pub std_roc_auc: f64,
    pub fpr: Vec<f64>,
    pub mean_tpr: Vec<f64>,
    pub std_tpr: Vec<f64>,
    pub n_runs: usize,
    pub config: EvalConfig,
}

impl EvaluationReport {
    fn aggregate(runs: &[RunOutcome], grid: Vec<f64>, config: EvalConfig) -> Self {
        let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        let auc: Vec<f64> = runs.iter().map(|r| r.roc_auc).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&acc);
        let (mean_roc_auc, std_roc_auc) = mean_std(&auc);
        let (mean_tpr, std_tpr) = (0..grid.len())
            .map(|g| {
                let col: Vec<f64> = runs.iter().map(|r| r.tpr[g]).collect();
                mean_std(&col)
            })
            .unzip();
        Self {
            mean_accuracy,
            std_accuracy,
            mean_roc_auc,
            std_roc_auc,
            fpr: grid,
            mean_tpr,
            std_tpr,
            n_runs: runs.len(),
            config,
        }
    }

    /// `metric,mean,std,n_runs`
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,mean,std,n_runs\n");
        let _ = writeln!(
            s,
            "accuracy,{},{},{}",
            self.mean_accuracy, self.std_accuracy, self.n_runs
        );
        let _ = writeln!(
            s,
            "roc_auc,{},{},{}",
            self.mean_roc_auc, self.std_roc_auc, self.n_runs
        );
        s
    }

    /// `fpr,mean_tpr,std_tpr`
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("fpr,mean_tpr,std_tpr\n");
        for i in 0..self.fpr.len() {
            let _ = writeln!(
                s,
                "{},{},{}",
                self.fpr[i], self.mean_tpr[i], self.std_tpr[i]
            );
        }
        s
    }

    /// Both blocks separated by a blank line.
    pub fn to_csv(&self) -> String {
        format!("{}\n{}", self.summary_csv(), self.curve_csv())
    }
}

/// Stratified repeated train/validation evaluation.
pub fn repeated_eval(
    spec: &PipelineSpec,
    x: ArrayView2<f64>,
    y: &[u8],
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    cfg.check()?;
    let plan = stratified_shuffle_splits(y, cfg.n_runs, cfg.train_ratio, cfg.seed)?;
    let grid = fpr_grid();
    let runs = plan
        .splits
        .par_iter()
        .enumerate()
        .map(|(r, split)| {
            let xv = x.select(Axis(0), &split.validation);
            let yv: Vec<u8> = split.validation.iter().map(|&i| y[i]).collect();
            let run_spec = spec.with_seed(run_seed(spec.seed ^ cfg.seed, r));
            score_run(
                &run_spec,
                x,
                y,
                &split.train,
                xv.view(),
                &yv,
                cfg.threshold,
                &grid,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport::aggregate(&runs, grid, *cfg))
}

pub fn repeated_eval_matrix(
    spec: &PipelineSpec,
    m: &FeatureMatrix,
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    repeated_eval(spec, m.data.view(), &m.labels, cfg)
}

/// Fit on the whole analysis matrix `n_runs` times (reseeding stochastic
/// components) and score the fixed test matrix.
pub fn holdout_eval(
    spec: &PipelineSpec,
    analysis: &FeatureMatrix,
    test: &FeatureMatrix,
    n_runs: usize,
    seed_value: u64,
) -> Result<EvaluationReport> {
    if analysis.columns != test.columns {
        return Err(EvalError::ColumnMismatch {
            expected: analysis.columns.clone(),
            found: test.columns.clone(),
        });
    }
    let cfg = EvalConfig {
        n_runs,
        seed: seed_value,
        ..EvalConfig::default()
    };
    if n_runs == 0 {
        return Err(EvalError::NoRuns);
    }
    let grid = fpr_grid();
    let all: Vec<usize> = (0..analysis.n_rows()).collect();
    let runs = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let run_spec = spec.with_seed(run_seed(spec.seed ^ seed_value, r));
            score_run(
                &run_spec,
                analysis.data.view(),
                &analysis.labels,
                &all,
                test.data.view(),
                &test.labels,
                cfg.threshold,
                &grid,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport::aggregate(&runs, grid, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub n_samples: usize,
    pub mean_roc_auc: f64,
    pub std_roc_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<LearningPoint>,
    pub config: EvalConfig,
}

impl LearningCurve {
    /// `n_samples,mean_roc_auc,std_roc_auc`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n_samples,mean_roc_auc,std_roc_auc\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.n_samples, p.mean_roc_auc, p.std_roc_auc);
        }
        s
    }
}

const SUBSET_ATTEMPTS: usize = 100;

/// Stratified draw of `m` rows from `pool`; if stratification leaves one class
/// empty, plain random draws are retried. `None` when every attempt is
/// single-class.
fn draw_subset(pool: &[usize], y: &[u8], m: usize, rng: &mut seed::Rng) -> Option<Vec<usize>> {
    let (neg, pos): (Vec<usize>, Vec<usize>) = pool.iter().partition(|&&i| y[i] == 0);
    let n_pos = ((m as f64 * pos.len() as f64 / pool.len() as f64).round() as usize).min(pos.len());
    let n_neg = m - n_pos;
    if n_pos > 0 && n_neg > 0 && n_neg <= neg.len() {
        let mut subset: Vec<usize> = neg.choose_multiple(rng, n_neg).copied().collect();
        subset.extend(pos.choose_multiple(rng, n_pos).copied());
        subset.sort_unstable();
        return Some(subset);
    }
    for _ in 0..SUBSET_ATTEMPTS {
        let mut subset: Vec<usize> = pool.choose_multiple(rng, m).copied().collect();
        let (a, b) = class_counts(&subset.iter().map(|&i| y[i]).collect::<Vec<_>>());
        if a > 0 && b > 0 {
            subset.sort_unstable();
            return Some(subset);
        }
    }
    None
}

/// Validation ROC AUC as a function of the training-set size. Every grid point
/// reuses the run's split; subsets are drawn from its training side.
pub fn learning_curve(
    spec: &PipelineSpec,
    x: ArrayView2<f64>,
    y: &[u8],
    grid: &[usize],
    cfg: &EvalConfig,
) -> Result<LearningCurve> {
    cfg.check()?;
    let plan = stratified_shuffle_splits(y, cfg.n_runs, cfg.train_ratio, cfg.seed)?;
    let available = plan.splits[0].train.len();
    for &m in grid {
        if m == 0 || m > available {
            return Err(EvalError::GridExceedsData {
                requested: m,
                available,
            });
        }
    }
    let fpr = fpr_grid();
    let points = grid
        .iter()
        .map(|&m| {
            let aucs = plan
                .splits
                .par_iter()
                .enumerate()
                .map(|(r, split)| {
                    let subset_seed =
                        seed::derive_index(seed::derive_index(cfg.seed, m as u64), r as u64);
                    let mut rng = seed::rng_for(subset_seed, "subset");
                    let subset = if m == split.train.len() {
                        Some(split.train.clone())
                    } else {
                        draw_subset(&split.train, y, m, &mut rng)
                    };
                    let Some(subset) = subset else {
                        return Ok(0.5);
                    };
                    let xv = x.select(Axis(0), &split.validation);
                    let yv: Vec<u8> = split.validation.iter().map(|&i| y[i]).collect();
                    let run_spec = spec.with_seed(run_seed(spec.seed ^ cfg.seed, r));
                    score_run(
                        &run_spec,
                        x,
                        y,
                        &subset,
                        xv.view(),
                        &yv,
                        cfg.threshold,
                        &fpr,
                    )
                    .map(|o| o.roc_auc)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean_roc_auc, std_roc_auc) = mean_std(&aucs);
            Ok(LearningPoint {
                n_samples: m,
                mean_roc_auc,
                std_roc_auc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LearningCurve {
        points,
        config: *cfg,
    })
}

/// Single-feature threshold rule `x > t` (or `x <= t` when inverted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub threshold: f64,
    pub inverted: bool,
}

impl ThresholdRule {
    pub fn predict(&self, v: f64) -> u8 {
        u8::from((v > self.threshold) != self.inverted)
    }

    /// Rule with the best training accuracy over `-inf` and every midpoint of
    /// consecutive distinct values, both polarities. Earlier candidates win
    /// ties.
    pub fn fit(values: &[f64], labels: &[u8]) -> Self {
        let mut distinct = values.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let candidates = std::iter::once(f64::NEG_INFINITY)
            .chain(distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        let mut best = ThresholdRule {
            threshold: f64::NEG_INFINITY,
            inverted: false,
        };
        let mut best_hits = 0;
        let mut first = true;
        for t in candidates {
            for inverted in [false, true] {
                let rule = ThresholdRule {
                    threshold: t,
                    inverted,
                };
                let hits = values
                    .iter()
                    .zip(labels)
                    .filter(|(&v, &l)| rule.predict(v) == l)
                    .count();
                if first || hits > best_hits {
                    best = rule;
                    best_hits = hits;
                    first = false;
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub n_runs: usize,
    pub config: EvalConfig,
}

impl BaselineReport {
    pub fn summary_csv(&self) -> String {
        format!(
            "metric,mean,std,n_runs\naccuracy,{},{},{}\n",
            self.mean_accuracy, self.std_accuracy, self.n_runs
        )
    }
}

/// Mean validation accuracy of a one-dimensional threshold rule refit per
/// stratified split.
pub fn threshold_baseline(values: &[f64], y: &[u8], cfg: &EvalConfig) -> Result<BaselineReport> {
    cfg.check()?;
    if values.len() != y.len() {
        return Err(EvalError::LengthMismatch {
            left: values.len(),
            right: y.len(),
        });
    }
    let plan = stratified_shuffle_splits(y, cfg.n_runs, cfg.train_ratio, cfg.seed)?;
    let accs = plan
        .splits
        .iter()
        .map(|split| {
            let pick = |idx: &[usize]| -> (Vec<f64>, Vec<u8>) {
                idx.iter().map(|&i| (values[i], y[i])).unzip()
            };
            let (vt, yt) = pick(&split.train);
            let (vv, yv) = pick(&split.validation);
            let rule = ThresholdRule::fit(&vt, &yt);
            let pred: Vec<u8> = vv.iter().map(|&v| rule.predict(v)).collect();
            accuracy(&pred, &yv)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    Ok(BaselineReport {
        mean_accuracy,
        std_accuracy,
        n_runs: accs.len(),
        config: *cfg,
    })
}
