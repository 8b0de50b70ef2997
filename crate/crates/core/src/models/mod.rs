//! Classifier and preprocessor zoo behind a uniform fit/score interface.
//!
//! A [`PipelineSpec`] is a declarative (preprocessor, classifier, seed)
//! triple; [`fit`] turns it into an immutable [`FittedPipeline`].

mod gbt;
mod knn;
mod logistic;
mod preprocess;
mod tree;

use std::fmt;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::seed;

pub use gbt::GradientBoostedTrees;
pub use knn::KnnModel;
pub use logistic::LogisticModel;
pub use preprocess::{anova_f_scores, FittedPreprocessor};
pub use tree::{Tree, TreeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    SingleClassTraining,
    #[error("features contain non-finite values")]
    NonFiniteFeatures,
    #[error("preprocessing removed every column")]
    EmptyAfterPreprocessing,
    #[error("expected columns {expected:?}, got {found:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("expected {expected} columns, got {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelLength { rows: usize, labels: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preprocessor {
    None,
    /// Keep columns whose training variance exceeds `threshold`.
    VarianceThreshold {
        threshold: f64,
    },
    MinmaxScaler,
    L2Normalizer,
    /// Keep the `k` columns with the largest ANOVA F statistic.
    UnivariateSelect {
        k: usize,
    },
}

impl Preprocessor {
    pub fn name(&self) -> &'static str {
        match self {
            Preprocessor::None => "none",
            Preprocessor::VarianceThreshold { .. } => "variance_threshold",
            Preprocessor::MinmaxScaler => "minmax_scaler",
            Preprocessor::L2Normalizer => "l2_normalizer",
            Preprocessor::UnivariateSelect { .. } => "univariate_select",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeights {
    Uniform,
    Distance,
}

/// Number of candidate features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    Half,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let d_f = d as f64;
        let m = match self {
            MaxFeatures::Sqrt => d_f.sqrt() as usize,
            MaxFeatures::Log2 => d_f.log2() as usize,
            MaxFeatures::Half => (0.5 * d_f) as usize,
            MaxFeatures::All => d,
        };
        m.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Knn {
        k: usize,
        weights: KnnWeights,
    },
    /// CART with Gini impurity; `max_depth: None` grows until pure.
    DecisionTree {
        max_depth: Option<usize>,
        min_leaf: usize,
    },
    /// Bootstrap-aggregated CART trees.
    RandomForest {
        n_trees: usize,
        max_features: MaxFeatures,
        max_depth: Option<usize>,
    },
    /// Trees with random split thresholds, each grown on the full sample.
    ExtraTrees {
        n_trees: usize,
        max_features: MaxFeatures,
        max_depth: Option<usize>,
    },
    /// Histogram-binned boosting with logistic loss.
    GradientBoostedTrees {
        n_rounds: usize,
        learning_rate: f64,
        max_bins: usize,
        max_depth: usize,
    },
    /// L2-regularized logistic regression; `c` is the inverse penalty
    /// strength on standardized inputs.
    Logistic {
        c: f64,
    },
}

impl Classifier {
    pub fn name(&self) -> &'static str {
        match self {
            Classifier::Knn { .. } => "knn",
            Classifier::DecisionTree { .. } => "decision_tree",
            Classifier::RandomForest { .. } => "random_forest",
            Classifier::ExtraTrees { .. } => "extra_trees",
            Classifier::GradientBoostedTrees { .. } => "gradient_boosted_trees",
            Classifier::Logistic { .. } => "logistic",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(ModelError::InvalidHyperparameter(msg.to_string()));
        match *self {
            Classifier::Knn { k, .. } if k == 0 => bad("knn k must be >= 1"),
            Classifier::DecisionTree { min_leaf, .. } if min_leaf == 0 => {
                bad("min_leaf must be >= 1")
            }
            Classifier::RandomForest { n_trees, .. } | Classifier::ExtraTrees { n_trees, .. }
                if n_trees == 0 =>
            {
                bad("n_trees must be >= 1")
            }
            Classifier::GradientBoostedTrees {
                learning_rate,
                max_bins,
                ..
            } if !(learning_rate > 0.0) || !(2..=255).contains(&max_bins) => {
                bad("learning_rate must be > 0 and max_bins in 2..=255")
            }
            Classifier::Logistic { c } if !(c > 0.0 && c.is_finite()) => bad("c must be > 0"),
            _ => Ok(()),
        }
    }
}

/// Declarative pipeline: one preprocessor, one classifier and a seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub preprocessor: Preprocessor,
    pub classifier: Classifier,
    pub seed: u64,
}

impl PipelineSpec {
    pub fn new(preprocessor: Preprocessor, classifier: Classifier, seed: u64) -> Self {
        Self {
            preprocessor,
            classifier,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pipeline spec serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.preprocessor.name(), self.classifier.name())
    }
}

/// Component registry with default hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    pub preprocessors: Vec<Preprocessor>,
    pub classifiers: Vec<Classifier>,
}

pub fn list_components() -> Registry {
    Registry {
        preprocessors: vec![
            Preprocessor::None,
            Preprocessor::VarianceThreshold { threshold: 0.0 },
            Preprocessor::MinmaxScaler,
            Preprocessor::L2Normalizer,
            Preprocessor::UnivariateSelect { k: 50 },
        ],
        classifiers: vec![
            Classifier::Knn {
                k: 5,
                weights: KnnWeights::Uniform,
            },
            Classifier::DecisionTree {
                max_depth: None,
                min_leaf: 1,
            },
            Classifier::RandomForest {
                n_trees: 100,
                max_features: MaxFeatures::Sqrt,
                max_depth: None,
            },
            Classifier::ExtraTrees {
                n_trees: 100,
                max_features: MaxFeatures::Sqrt,
                max_depth: None,
            },
            Classifier::GradientBoostedTrees {
                n_rounds: 100,
                learning_rate: 0.1,
                max_bins: 255,
                max_depth: 3,
            },
            Classifier::Logistic { c: 1.0 },
        ],
    }
}

#[derive(Debug, Clone)]
enum FittedModel {
    Knn(KnnModel),
    Tree(Tree),
    Forest(Vec<Tree>),
    Boosted(GradientBoostedTrees),
    Logistic(LogisticModel),
}

impl FittedModel {
    fn score(&self, x: ArrayView2<f64>) -> Vec<f64> {
        match self {
            FittedModel::Knn(m) => m.predict(x),
            FittedModel::Tree(t) => x.rows().into_iter().map(|r| t.predict_row(r)).collect(),
            FittedModel::Forest(trees) => x
                .rows()
                .into_iter()
                .map(|r| trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / trees.len() as f64)
                .collect(),
            FittedModel::Boosted(m) => m.predict(x),
            FittedModel::Logistic(m) => m.predict(x),
        }
    }
}

/// A trained pipeline. Immutable; prediction is read-only.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub spec: PipelineSpec,
    pub columns: Vec<String>,
    preprocessor: FittedPreprocessor,
    model: FittedModel,
}

fn fit_classifier(
    classifier: &Classifier,
    x: ArrayView2<f64>,
    y: &[u8],
    fit_seed: u64,
) -> FittedModel {
    let component_seed = seed::derive(fit_seed, classifier.name());
    match *classifier {
        Classifier::Knn { k, weights } => FittedModel::Knn(KnnModel::fit(x, y, k, weights)),
        Classifier::DecisionTree {
            max_depth,
            min_leaf,
        } => {
            let params = TreeParams {
                max_depth,
                min_leaf,
                max_features: None,
                random_thresholds: false,
            };
            let idx: Vec<usize> = (0..y.len()).collect();
            FittedModel::Tree(Tree::fit(x, y, &idx, &params, component_seed))
        }
        Classifier::RandomForest {
            n_trees,
            max_features,
            max_depth,
        }
        | Classifier::ExtraTrees {
            n_trees,
            max_features,
            max_depth,
        } => {
            let extra = matches!(classifier, Classifier::ExtraTrees { .. });
            let params = TreeParams {
                max_depth,
                min_leaf: 1,
                max_features: Some(max_features.resolve(x.ncols())),
                random_thresholds: extra,
            };
            let n = y.len();
            let trees = (0..n_trees)
                .into_par_iter()
                .map(|t| {
                    let tree_seed = seed::derive_index(component_seed, t as u64);
                    let idx: Vec<usize> = if extra {
                        (0..n).collect()
                    } else {
                        let mut rng = seed::rng(seed::derive(tree_seed, "bootstrap"));
                        let mut idx: Vec<usize> = (0..n)
                            .map(|_| rand::Rng::gen_range(&mut rng, 0..n))
                            .collect();
                        idx.sort_unstable();
                        idx
                    };
                    Tree::fit(x, y, &idx, &params, tree_seed)
                })
                .collect();
            FittedModel::Forest(trees)
        }
        Classifier::GradientBoostedTrees {
            n_rounds,
            learning_rate,
            max_bins,
            max_depth,
        } => FittedModel::Boosted(GradientBoostedTrees::fit(
            x,
            y,
            n_rounds,
            learning_rate,
            max_bins,
            max_depth,
        )),
        Classifier::Logistic { c } => FittedModel::Logistic(LogisticModel::fit(x, y, c)),
    }
}

/// Fit `spec` on a raw design matrix. Column names default to `x0, x1, ...`.
pub fn fit(spec: &PipelineSpec, x: ArrayView2<f64>, y: &[u8]) -> Result<FittedPipeline> {
    let columns = (0..x.ncols()).map(|c| format!("x{c}")).collect();
    fit_named(spec, x, y, columns)
}

/// Fit on a feature matrix, using its labels and column names.
pub fn fit_matrix(spec: &PipelineSpec, m: &FeatureMatrix) -> Result<FittedPipeline> {
    fit_named(spec, m.data.view(), &m.labels, m.columns.clone())
}

fn fit_named(
    spec: &PipelineSpec,
    x: ArrayView2<f64>,
    y: &[u8],
    columns: Vec<String>,
) -> Result<FittedPipeline> {
    if x.nrows() != y.len() {
        return Err(ModelError::LabelLength {
            rows: x.nrows(),
            labels: y.len(),
        });
    }
    let positives = y.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(ModelError::SingleClassTraining);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteFeatures);
    }
    spec.classifier.validate()?;
    let preprocessor = FittedPreprocessor::fit(&spec.preprocessor, x, y)?;
    let xt = preprocessor.transform(x);
    let model = fit_classifier(&spec.classifier, xt.view(), y, spec.seed);
    Ok(FittedPipeline {
        spec: *spec,
        columns,
        preprocessor,
        model,
    })
}

impl FittedPipeline {
    /// Positive-class scores for a raw design matrix of the training width.
    pub fn predict_scores(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.columns.len() {
            return Err(ModelError::WidthMismatch {
                expected: self.columns.len(),
                found: x.ncols(),
            });
        }
        let xt: Array2<f64> = self.preprocessor.transform(x);
        Ok(self.model.score(xt.view()))
    }

    pub fn n_inputs(&self) -> usize {
        self.columns.len()
    }
}

/// Estimated positive-class probability per row; columns must match training.
pub fn predict_score(p: &FittedPipeline, m: &FeatureMatrix) -> Result<Vec<f64>> {
    if m.columns != p.columns {
        return Err(ModelError::ColumnMismatch {
            expected: p.columns.clone(),
            found: m.columns.clone(),
        });
    }
    p.predict_scores(m.data.view())
}

/// Label 1 iff score >= threshold.
pub fn labels_from_scores(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

pub fn predict_label(p: &FittedPipeline, m: &FeatureMatrix, threshold: f64) -> Result<Vec<u8>> {
    Ok(labels_from_scores(&predict_score(p, m)?, threshold))
}
