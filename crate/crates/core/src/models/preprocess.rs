use ndarray::{Array2, ArrayView2, Axis};

use super::{ModelError, Preprocessor, Result};

/// Preprocessor state learned from training data.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedPreprocessor {
    Identity,
    /// Column subset, in ascending index order.
    Select(Vec<usize>),
    MinMax {
        min: Vec<f64>,
        range: Vec<f64>,
    },
    L2Normalizer,
}

/// One-way ANOVA F statistic of every column between the two label groups.
/// Columns without within-group spread score `+inf` when the group means
/// differ and `0` otherwise.
pub fn anova_f_scores(x: ArrayView2<f64>, y: &[u8]) -> Vec<f64> {
    let n = y.len();
    let n1 = y.iter().filter(|&&l| l == 1).count();
    let n0 = n - n1;
    x.axis_iter(Axis(1))
        .map(|col| {
            let (mut s0, mut s1) = (0.0, 0.0);
            for (v, &l) in col.iter().zip(y) {
                if l == 1 {
                    s1 += v;
                } else {
                    s0 += v;
                }
            }
            let (m0, m1) = (s0 / n0 as f64, s1 / n1 as f64);
            let m = (s0 + s1) / n as f64;
            let ssb = n0 as f64 * (m0 - m).powi(2) + n1 as f64 * (m1 - m).powi(2);
            let ssw: f64 = col
                .iter()
                .zip(y)
                .map(|(v, &l)| (v - if l == 1 { m1 } else { m0 }).powi(2))
                .sum();
            if ssw > 0.0 && n > 2 {
                ssb / (ssw / (n - 2) as f64)
            } else if ssb > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect()
}

fn population_variance(col: ndarray::ArrayView1<f64>) -> f64 {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

impl FittedPreprocessor {
    pub fn fit(p: &Preprocessor, x: ArrayView2<f64>, y: &[u8]) -> Result<Self> {
        let fitted = match *p {
            Preprocessor::None => FittedPreprocessor::Identity,
            Preprocessor::VarianceThreshold { threshold } => FittedPreprocessor::Select(
                (0..x.ncols())
                    .filter(|&c| population_variance(x.column(c)) > threshold)
                    .collect(),
            ),
            Preprocessor::MinmaxScaler => {
                let (min, range) = x
                    .axis_iter(Axis(1))
                    .map(|col| {
                        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        (lo, hi - lo)
                    })
                    .unzip();
                FittedPreprocessor::MinMax { min, range }
            }
            Preprocessor::L2Normalizer => FittedPreprocessor::L2Normalizer,
            Preprocessor::UnivariateSelect { k } => {
                if k == 0 {
                    return Err(ModelError::InvalidHyperparameter(
                        "univariate_select k must be >= 1".into(),
                    ));
                }
                let scores = anova_f_scores(x, y);
                let mut order: Vec<usize> = (0..x.ncols()).collect();
                // descending score, ties to the lower column index
                order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                order.truncate(k.min(x.ncols()));
                order.sort_unstable();
                FittedPreprocessor::Select(order)
            }
        };
        if let FittedPreprocessor::Select(cols) = &fitted {
            if cols.is_empty() {
                return Err(ModelError::EmptyAfterPreprocessing);
            }
        }
        Ok(fitted)
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            FittedPreprocessor::Identity => x.to_owned(),
            FittedPreprocessor::Select(cols) => x.select(Axis(1), cols),
            FittedPreprocessor::MinMax { min, range } => {
                let mut out = x.to_owned();
                for (c, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
                    if range[c] > 0.0 {
                        col.mapv_inplace(|v| (v - min[c]) / range[c]);
                    } else {
                        col.fill(0.0);
                    }
                }
                out
            }
            FittedPreprocessor::L2Normalizer => {
                let mut out = x.to_owned();
                for mut row in out.rows_mut() {
                    let norm = row.dot(&row).sqrt();
                    if norm > 0.0 {
                        row.mapv_inplace(|v| v / norm);
                    }
                }
                out
            }
        }
    }
}
