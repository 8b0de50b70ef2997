//! Beam forward feature selection with a size-dependent beam width.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, EvalError, SplitPlan};
use crate::features::FeatureMatrix;
use crate::models::{self, PipelineSpec};
use crate::seed;

#[derive(Debug, Error)]
pub enum FeatselError {
    #[error("class {label} has {count} samples; at least 2 are required")]
    TooFewSamples { label: u8, count: usize },
    #[error("invalid beam schedule: {0}")]
    InvalidSchedule(String),
    #[error("feature matrix is empty")]
    EmptyMatrix,
    #[error("selection trace is empty")]
    EmptyTrace,
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, FeatselError>;

/// Beam width by set size: each `(max_set_size, width)` entry applies up to
/// and including `max_set_size`; the last entry is unbounded (`None`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamSchedule {
    steps: Vec<(Option<usize>, usize)>,
}

impl Default for BeamSchedule {
    fn default() -> Self {
        Self {
            steps: vec![(Some(40), 10), (Some(100), 5), (None, 3)],
        }
    }
}

impl BeamSchedule {
    pub fn new(steps: Vec<(Option<usize>, usize)>) -> Result<Self> {
        let bad = |m: &str| Err(FeatselError::InvalidSchedule(m.to_string()));
        if steps.is_empty() {
            return bad("schedule is empty");
        }
        if steps.iter().any(|&(_, w)| w == 0) {
            return bad("beam widths must be >= 1");
        }
        let (last, bounded) = steps.split_last().expect("non-empty");
        if last.0.is_some() {
            return bad("the last entry must be unbounded");
        }
        let limits: Vec<usize> = bounded
            .iter()
            .map(|s| s.0)
            .collect::<Option<_>>()
            .ok_or_else(|| {
                FeatselError::InvalidSchedule("only the last entry may be unbounded".into())
            })?;
        if limits.windows(2).any(|w| w[0] >= w[1]) || limits.first() == Some(&0) {
            return bad("max set sizes must be positive and strictly increasing");
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[(Option<usize>, usize)] {
        &self.steps
    }

    pub fn width_at(&self, size: usize) -> usize {
        self.steps
            .iter()
            .find(|(limit, _)| limit.map_or(true, |l| size <= l))
            .map(|s| s.1)
            .expect("last entry is unbounded")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Splits per candidate set.
    pub n_runs: usize,
    pub split_ratio: f64,
    pub seed: u64,
    /// Largest set size to reach; `None` means `min(columns, 120)`.
    pub max_rounds: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            n_runs: 100,
            split_ratio: 0.8,
            seed: 0,
            max_rounds: None,
        }
    }
}

pub const DEFAULT_ROUND_CAP: usize = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    /// Ascending column indices.
    pub features: Vec<usize>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub size: usize,
    /// Best first.
    pub kept: Vec<ScoredSet>,
    pub n_candidates: usize,
    /// Best score among candidates that were not kept (`-inf` if none).
    pub max_discarded: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub columns: Vec<String>,
    pub rounds: Vec<Round>,
    pub spec: PipelineSpec,
    pub schedule: BeamSchedule,
    pub config: SelectionConfig,
}

/// Splits shared by every candidate of the round producing sets of `size`.
pub fn round_splits(y: &[u8], size: usize, cfg: &SelectionConfig) -> Result<SplitPlan> {
    let round_seed = seed::derive_index(seed::derive(cfg.seed, "featsel"), size as u64);
    Ok(eval::stratified_shuffle_splits(
        y,
        cfg.n_runs,
        cfg.split_ratio,
        round_seed,
    )?)
}

/// Mean and population std of validation ROC AUC over the plan, using only
/// `features`. A failing fit scores `-inf`.
pub fn score_subset(
    spec: &PipelineSpec,
    x: ArrayView2<f64>,
    y: &[u8],
    features: &[usize],
    plan: &SplitPlan,
) -> (f64, f64) {
    let sub = x.select(Axis(1), features);
    let aucs: std::result::Result<Vec<f64>, ()> = plan
        .splits
        .iter()
        .enumerate()
        .map(|(r, split)| {
            let xt = sub.select(Axis(0), &split.train);
            let yt: Vec<u8> = split.train.iter().map(|&i| y[i]).collect();
            let xv = sub.select(Axis(0), &split.validation);
            let yv: Vec<u8> = split.validation.iter().map(|&i| y[i]).collect();
            let run_spec = spec.with_seed(eval::run_seed(spec.seed, r));
            let fitted = models::fit(&run_spec, xt.view(), &yt).map_err(|_| ())?;
            let scores = fitted.predict_scores(xv.view()).map_err(|_| ())?;
            eval::roc_auc(&scores, &yv).map_err(|_| ())
        })
        .collect();
    match aucs {
        Ok(a) => eval::mean_std(&a),
        Err(()) => (f64::NEG_INFINITY, 0.0),
    }
}

/// Higher mean first, then the lexicographically smaller index vector.
fn rank(a: &ScoredSet, b: &ScoredSet) -> std::cmp::Ordering {
    b.mean
        .total_cmp(&a.mean)
        .then_with(|| a.features.cmp(&b.features))
}

pub fn forward_select(
    m: &FeatureMatrix,
    spec: &PipelineSpec,
    schedule: &BeamSchedule,
    cfg: &SelectionConfig,
) -> Result<SelectionTrace> {
    let d = m.n_cols();
    if d == 0 || m.n_rows() == 0 {
        return Err(FeatselError::EmptyMatrix);
    }
    if cfg.n_runs == 0 {
        return Err(FeatselError::InvalidConfig("n_runs must be >= 1".into()));
    }
    let y = &m.labels[..];
    let pos = y.iter().filter(|&&l| l == 1).count();
    for (label, count) in [(0u8, y.len() - pos), (1u8, pos)] {
        if count < 2 {
            return Err(FeatselError::TooFewSamples { label, count });
        }
    }
    let n_rounds = cfg.max_rounds.unwrap_or(DEFAULT_ROUND_CAP).min(d);
    let x = m.data.view();

    let mut rounds: Vec<Round> = Vec::with_capacity(n_rounds);
    let mut beam: Vec<Vec<usize>> = vec![Vec::new()];
    for size in 1..=n_rounds {
        let candidates: BTreeSet<Vec<usize>> = beam
            .iter()
            .flat_map(|set| {
                (0..d).filter(|f| !set.contains(f)).map(move |f| {
                    let mut next = set.clone();
                    let pos = next.partition_point(|&g| g < f);
                    next.insert(pos, f);
                    next
                })
            })
            .collect();
        let candidates: Vec<Vec<usize>> = candidates.into_iter().collect();
        let plan = round_splits(y, size, cfg)?;
        let mut scored: Vec<ScoredSet> = candidates
            .par_iter()
            .map(|features| {
                let (mean, std) = score_subset(spec, x, y, features, &plan);
                ScoredSet {
                    features: features.clone(),
                    mean,
                    std,
                }
            })
            .collect();
        scored.sort_by(rank);
        let n_candidates = scored.len();
        let width = schedule.width_at(size).min(n_candidates);
        let max_discarded = scored.get(width).map_or(f64::NEG_INFINITY, |s| s.mean);
        scored.truncate(width);
        beam = scored.iter().map(|s| s.features.clone()).collect();
        rounds.push(Round {
            size,
            kept: scored,
            n_candidates,
            max_discarded,
        });
    }
    Ok(SelectionTrace {
        columns: m.columns.clone(),
        rounds,
        spec: *spec,
        schedule: schedule.clone(),
        config: *cfg,
    })
}

impl SelectionTrace {
    pub fn names(&self, set: &ScoredSet) -> Vec<String> {
        set.features
            .iter()
            .map(|&i| self.columns[i].clone())
            .collect()
    }

    /// `size,rank,feature_names,mean_roc_auc,std_roc_auc` with `;`-joined
    /// names, followed by a `# best,...` summary line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("size,rank,feature_names,mean_roc_auc,std_roc_auc\n");
        for round in &self.rounds {
            for (rank, set) in round.kept.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    round.size,
                    rank + 1,
                    self.names(set).join(";"),
                    set.mean,
                    set.std
                );
            }
        }
        if let Ok((names, size, score)) = best_subset(self) {
            let _ = writeln!(
                s,
                "# best,size={size},mean_roc_auc={score},features={}",
                names.join(";")
            );
        }
        s
    }
}

/// Highest mean over every kept set; ties go to the smaller set, then to the
/// lexicographically smaller name list.
pub fn best_subset(trace: &SelectionTrace) -> Result<(Vec<String>, usize, f64)> {
    let mut best: Option<(&ScoredSet, Vec<String>)> = None;
    for set in trace.rounds.iter().flat_map(|r| &r.kept) {
        let names = trace.names(set);
        let better = match &best {
            None => true,
            Some((b, b_names)) => {
                set.mean > b.mean
                    || (set.mean == b.mean
                        && (set.features.len() < b.features.len()
                            || (set.features.len() == b.features.len() && names < *b_names)))
            }
        };
        if better {
            best = Some((set, names));
        }
    }
    let (set, names) = best.ok_or(FeatselError::EmptyTrace)?;
    Ok((names, set.features.len(), set.mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub mean: f64,
    pub std: f64,
    pub running_max: f64,
}

/// Best kept set per size and the running maximum of its mean.
pub fn running_best_curve(trace: &SelectionTrace) -> Result<Vec<CurvePoint>> {
    if trace.rounds.is_empty() {
        return Err(FeatselError::EmptyTrace);
    }
    let mut running = f64::NEG_INFINITY;
    Ok(trace
        .rounds
        .iter()
        .filter_map(|r| r.kept.first().map(|b| (r.size, b)))
        .map(|(size, b)| {
            running = running.max(b.mean);
            CurvePoint {
                size,
                mean: b.mean,
                std: b.std,
                running_max: running,
            }
        })
        .collect())
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("size,mean_roc_auc,std_roc_auc,running_max\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", p.size, p.mean, p.std, p.running_max);
    }
    s
}
