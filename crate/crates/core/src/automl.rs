//! Two-phase greedy pipeline search.
//!
//! Phase 1 enumerates every registered (preprocessor, classifier) pair with
//! default hyperparameters; phase 2 random-searches the hyperparameters of
//! the phase-1 winner. All candidates share one set of stratified splits.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, EvalError, SplitPlan};
use crate::features::FeatureMatrix;
use crate::models::{
    self, list_components, Classifier, FittedPipeline, KnnWeights, MaxFeatures, ModelError,
    PipelineSpec, Preprocessor,
};
use crate::seed::{self, Rng};

const MAX_SAMPLING_ATTEMPTS: usize = 1000;

#[derive(Debug, Error)]
pub enum AutomlError {
    #[error("class {label} has {count} samples; each training split needs at least 2 per class")]
    TooFewSamples { label: u8, count: usize },
    #[error("labels must contain both classes 0 and 1 and nothing else")]
    DegenerateLabels,
    #[error("no valid hyperparameter configuration for {0}")]
    NoValidConfiguration(String),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("every candidate failed")]
    AllCandidatesFailed,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("refitting the best pipeline failed: {0}")]
    Refit(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, AutomlError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RocAuc,
    Accuracy,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::RocAuc => "roc_auc",
            Metric::Accuracy => "accuracy",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "roc_auc" => Ok(Metric::RocAuc),
            "accuracy" => Ok(Metric::Accuracy),
            other => Err(format!(
                "unknown metric {other:?} (expected roc_auc or accuracy)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub metric: Metric,
    pub n_validation_splits: usize,
    pub split_ratio: f64,
    pub n_hpo_steps: usize,
    pub seed: u64,
    /// Wall-clock budget in seconds; `None` runs to completion.
    pub timeout_secs: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            metric: Metric::RocAuc,
            n_validation_splits: 5,
            split_ratio: 0.8,
            n_hpo_steps: 100,
            seed: 0,
            timeout_secs: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_validation_splits == 0 {
            return Err(AutomlError::InvalidConfig(
                "n_validation_splits must be >= 1".into(),
            ));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(AutomlError::InvalidConfig(
                "split_ratio must lie in (0, 1)".into(),
            ));
        }
        if matches!(self.timeout_secs, Some(t) if !(t >= 0.0)) {
            return Err(AutomlError::InvalidConfig("timeout must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Enumeration,
    Hpo,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Enumeration => "enumeration",
            Phase::Hpo => "hpo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub phase: Phase,
    pub spec: PipelineSpec,
    /// One score per split; empty when the candidate failed.
    pub split_scores: Vec<f64>,
    /// `-inf` for failed candidates.
    pub mean_score: f64,
    pub failed: bool,
    pub error: Option<String>,
}

/// Fit on every training part and score the validation part. Any error
/// marks the whole candidate as failed.
pub fn evaluate_candidate(
    spec: &PipelineSpec,
    x: ArrayView2<f64>,
    y: &[u8],
    splits: &SplitPlan,
    metric: Metric,
) -> CandidateResult {
    let scores: std::result::Result<Vec<f64>, String> = splits
        .splits
        .iter()
        .map(|split| {
            let xt = x.select(Axis(0), &split.train);
            let yt: Vec<u8> = split.train.iter().map(|&i| y[i]).collect();
            let xv = x.select(Axis(0), &split.validation);
            let yv: Vec<u8> = split.validation.iter().map(|&i| y[i]).collect();
            let fitted = models::fit(spec, xt.view(), &yt).map_err(|e| e.to_string())?;
            let s = fitted
                .predict_scores(xv.view())
                .map_err(|e| e.to_string())?;
            let value = match metric {
                Metric::RocAuc => eval::roc_auc(&s, &yv),
                Metric::Accuracy => eval::accuracy(&models::labels_from_scores(&s, 0.5), &yv),
            };
            value.map_err(|e| e.to_string())
        })
        .collect();
    match scores {
        Ok(split_scores) => {
            let mean_score = split_scores.iter().sum::<f64>() / split_scores.len() as f64;
            CandidateResult {
                phase: Phase::Enumeration,
                spec: *spec,
                split_scores,
                mean_score,
                failed: false,
                error: None,
            }
        }
        Err(e) => CandidateResult {
            phase: Phase::Enumeration,
            spec: *spec,
            split_scores: Vec::new(),
            mean_score: f64::NEG_INFINITY,
            failed: true,
            error: Some(e),
        },
    }
}

fn log_uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi)
}

fn sample_preprocessor(p: Preprocessor, rng: &mut Rng) -> Preprocessor {
    match p {
        Preprocessor::VarianceThreshold { .. } => Preprocessor::VarianceThreshold {
            threshold: rng.gen_range(0.0..=0.1),
        },
        Preprocessor::UnivariateSelect { .. } => Preprocessor::UnivariateSelect {
            k: rng.gen_range(10..=200),
        },
        other => other,
    }
}

fn sample_depth(rng: &mut Rng, lo: usize, hi: usize) -> Option<usize> {
    // hi - lo + 1 finite depths plus unlimited
    let draw = rng.gen_range(lo..=hi + 1);
    (draw <= hi).then_some(draw)
}

fn sample_classifier(c: Classifier, rng: &mut Rng) -> Classifier {
    match c {
        Classifier::Knn { .. } => Classifier::Knn {
            k: 2 * rng.gen_range(0..13) + 1,
            weights: *[KnnWeights::Uniform, KnnWeights::Distance]
                .choose(rng)
                .unwrap(),
        },
        Classifier::DecisionTree { .. } => Classifier::DecisionTree {
            max_depth: sample_depth(rng, 2, 20),
            min_leaf: rng.gen_range(1..=10),
        },
        Classifier::RandomForest { .. } | Classifier::ExtraTrees { .. } => {
            let n_trees = rng.gen_range(50..=300);
            let max_features = *[MaxFeatures::Sqrt, MaxFeatures::Log2, MaxFeatures::Half]
                .choose(rng)
                .unwrap();
            let max_depth = sample_depth(rng, 4, 20);
            if matches!(c, Classifier::RandomForest { .. }) {
                Classifier::RandomForest {
                    n_trees,
                    max_features,
                    max_depth,
                }
            } else {
                Classifier::ExtraTrees {
                    n_trees,
                    max_features,
                    max_depth,
                }
            }
        }
        Classifier::GradientBoostedTrees { max_bins, .. } => Classifier::GradientBoostedTrees {
            n_rounds: rng.gen_range(50..=300),
            learning_rate: log_uniform(rng, 0.01, 0.3),
            max_bins,
            max_depth: rng.gen_range(2..=6),
        },
        Classifier::Logistic { .. } => Classifier::Logistic {
            c: log_uniform(rng, 1e-3, 1e3),
        },
    }
}

fn is_valid(spec: &PipelineSpec, n_cols: usize) -> bool {
    match spec.preprocessor {
        Preprocessor::UnivariateSelect { k } => k <= n_cols,
        _ => true,
    }
}

/// Draw every hyperparameter of the combination independently from its
/// search space, redrawing until the configuration is valid for a matrix with
/// `n_cols` columns.
pub fn sample_hyperparameters(
    preprocessor: Preprocessor,
    classifier: Classifier,
    n_cols: usize,
    spec_seed: u64,
    rng: &mut Rng,
) -> Result<PipelineSpec> {
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let p = sample_preprocessor(preprocessor, rng);
        let c = sample_classifier(classifier, rng);
        let spec = PipelineSpec::new(p, c, spec_seed);
        if is_valid(&spec, n_cols) {
            return Ok(spec);
        }
    }
    Err(AutomlError::NoValidConfiguration(format!(
        "{}+{} on {n_cols} columns",
        preprocessor.name(),
        classifier.name()
    )))
}

/// `key=value` pairs of a component, `;`-separated, without the kind tag.
fn component_params<T: Serialize>(component: &T) -> String {
    let value = serde_json::to_value(component).expect("components serialize");
    let mut parts = Vec::new();
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            if k == "kind" {
                continue;
            }
            let text = match v {
                serde_json::Value::Null => "none".to_string(),
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            parts.push(format!("{k}={text}"));
        }
    }
    parts.join(";")
}

/// Hyperparameters of both pipeline members, e.g. `k=50|c=1.0`.
pub fn hyperparameter_string(spec: &PipelineSpec) -> String {
    format!(
        "{}|{}",
        component_params(&spec.preprocessor),
        component_params(&spec.classifier)
    )
}

#[derive(Debug, Clone)]
pub struct SearchReport {
    /// Candidates in evaluation order.
    pub log: Vec<CandidateResult>,
    /// Index into `log` of the best phase-1 candidate.
    pub phase1_winner: usize,
    /// Index into `log` of the overall best candidate.
    pub best_index: usize,
    pub best_spec: PipelineSpec,
    pub best_score: f64,
    pub config: SearchConfig,
    /// True when the timeout cut the search short.
    pub truncated: bool,
    /// Best pipeline refit on all data.
    pub fitted: FittedPipeline,
}

#[derive(Serialize)]
struct Summary<'a> {
    metric: Metric,
    best_spec: &'a PipelineSpec,
    best_pipeline: String,
    best_hyperparameters: String,
    best_score: f64,
    best_index: usize,
    phase1_winner: String,
    n_candidates: usize,
    n_failed: usize,
    truncated: bool,
    columns: &'a [String],
    config: &'a SearchConfig,
}

impl SearchReport {
    /// Candidate table `phase,preprocessor,classifier,hyperparameters,split_1..split_n,mean_score,failed`.
    pub fn to_csv(&self) -> String {
        let n_splits = self.config.n_validation_splits;
        let mut s = String::from("phase,preprocessor,classifier,hyperparameters");
        for i in 1..=n_splits {
            let _ = write!(s, ",split_{i}");
        }
        s.push_str(",mean_score,failed\n");
        for c in &self.log {
            let _ = write!(
                s,
                "{},{},{},{}",
                c.phase.as_str(),
                c.spec.preprocessor.name(),
                c.spec.classifier.name(),
                hyperparameter_string(&c.spec)
            );
            for i in 0..n_splits {
                match c.split_scores.get(i) {
                    Some(v) => {
                        let _ = write!(s, ",{v}");
                    }
                    None => s.push(','),
                }
            }
            let _ = writeln!(s, ",{},{}", c.mean_score, c.failed);
        }
        s
    }

    /// JSON record of the final spec and search outcome.
    pub fn summary_json(&self) -> String {
        let best = &self.log[self.best_index];
        let summary = Summary {
            metric: self.config.metric,
            best_spec: &self.best_spec,
            best_pipeline: self.best_spec.to_string(),
            best_hyperparameters: hyperparameter_string(&best.spec),
            best_score: self.best_score,
            best_index: self.best_index,
            phase1_winner: self.log[self.phase1_winner].spec.to_string(),
            n_candidates: self.log.len(),
            n_failed: self.log.iter().filter(|c| c.failed).count(),
            truncated: self.truncated,
            columns: &self.fitted.columns,
            config: &self.config,
        };
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    }
}

fn check_labels(y: &[u8], cfg: &SearchConfig) -> Result<()> {
    if y.iter().any(|&l| l > 1) {
        return Err(AutomlError::DegenerateLabels);
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(AutomlError::DegenerateLabels);
    }
    for (label, count) in [(0u8, y.len() - pos), (1u8, pos)] {
        if count < 3 || eval::train_share(count, cfg.split_ratio) < 2 {
            return Err(AutomlError::TooFewSamples { label, count });
        }
    }
    Ok(())
}

/// Evaluate candidates in order, in parallel batches, stopping at the
/// deadline. Results keep the input order.
fn evaluate_all(
    specs: &[PipelineSpec],
    phase: Phase,
    x: ArrayView2<f64>,
    y: &[u8],
    plan: &SplitPlan,
    metric: Metric,
    deadline: Option<Instant>,
) -> (Vec<CandidateResult>, bool) {
    let run = |s: &PipelineSpec| CandidateResult {
        phase,
        ..evaluate_candidate(s, x, y, plan, metric)
    };
    let Some(deadline) = deadline else {
        return (specs.par_iter().map(run).collect(), false);
    };
    let batch = rayon::current_num_threads().max(1);
    let mut out = Vec::with_capacity(specs.len());
    for chunk in specs.chunks(batch) {
        if Instant::now() >= deadline {
            return (out, true);
        }
        out.extend(chunk.par_iter().map(run).collect::<Vec<_>>());
    }
    (out, false)
}

fn argmax(log: &[CandidateResult], range: std::ops::Range<usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in range {
        if log[i].failed {
            continue;
        }
        if best.map_or(true, |b| log[i].mean_score > log[b].mean_score) {
            best = Some(i);
        }
    }
    best
}

/// Run the two-phase search on a feature matrix and refit the winner on all
/// of its rows.
pub fn search(m: &FeatureMatrix, cfg: &SearchConfig) -> Result<SearchReport> {
    cfg.validate()?;
    let (x, y) = (m.data.view(), &m.labels[..]);
    check_labels(y, cfg)?;
    let deadline = cfg
        .timeout_secs
        .map(|t| Instant::now() + Duration::from_secs_f64(t));
    let plan = eval::stratified_shuffle_splits(
        y,
        cfg.n_validation_splits,
        cfg.split_ratio,
        seed::derive(cfg.seed, "automl-splits"),
    )?;
    let spec_seed = seed::derive(cfg.seed, "pipeline");

    let registry = list_components();
    let combos: Vec<PipelineSpec> = registry
        .preprocessors
        .iter()
        .flat_map(|p| {
            registry
                .classifiers
                .iter()
                .map(move |c| PipelineSpec::new(*p, *c, spec_seed))
        })
        .collect();
    let (mut log, mut truncated) = evaluate_all(
        &combos,
        Phase::Enumeration,
        x,
        y,
        &plan,
        cfg.metric,
        deadline,
    );
    let phase1_winner = argmax(&log, 0..log.len()).ok_or(AutomlError::AllCandidatesFailed)?;

    if !truncated && cfg.n_hpo_steps > 0 {
        let winner = log[phase1_winner].spec;
        let mut rng = seed::rng_for(cfg.seed, "hpo");
        let trials = (0..cfg.n_hpo_steps)
            .map(|_| {
                sample_hyperparameters(
                    winner.preprocessor,
                    winner.classifier,
                    m.n_cols(),
                    spec_seed,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let (hpo, cut) = evaluate_all(&trials, Phase::Hpo, x, y, &plan, cfg.metric, deadline);
        log.extend(hpo);
        truncated = cut;
    }

    let best_index = argmax(&log, 0..log.len()).expect("phase-1 winner exists");
    let best_spec = log[best_index].spec;
    let fitted = models::fit_matrix(&best_spec, m)?;
    Ok(SearchReport {
        best_score: log[best_index].mean_score,
        phase1_winner,
        best_index,
        best_spec,
        config: *cfg,
        truncated,
        fitted,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyperparameter_strings() {
        let s = PipelineSpec::new(
            Preprocessor::UnivariateSelect { k: 50 },
            Classifier::DecisionTree {
                max_depth: None,
                min_leaf: 1,
            },
            0,
        );
        assert_eq!(hyperparameter_string(&s), "k=50|max_depth=none;min_leaf=1");
        let s = PipelineSpec::new(Preprocessor::None, Classifier::Logistic { c: 1.0 }, 0);
        assert_eq!(hyperparameter_string(&s), "|c=1.0");
    }

    #[test]
    fn metric_round_trip() {
        for m in [Metric::RocAuc, Metric::Accuracy] {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
        }
        assert!("f1".parse::<Metric>().is_err());
    }
}
