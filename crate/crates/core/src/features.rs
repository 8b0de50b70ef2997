//! Fixed catalog of generic time-series features, background subtraction and
//! feature-matrix assembly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::sync::OnceLock;

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ChannelId, SliceTriple};

/// Shortest slice accepted by [`extract`].
pub const MIN_SLICE_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("slice has {len} samples, at least {min} required")]
    SliceTooShort { len: usize, min: usize },
    #[error("slice contains non-finite values")]
    NonFiniteInput,
    #[error("feature `{0}` evaluated to a non-finite value")]
    NonFiniteFeature(&'static str),
    #[error("no exposition is present in both matrices")]
    NoCommonExpositions,
    #[error("labels of exposition `{0}` differ between channels")]
    LabelMismatch(String),
    #[error("every column is constant")]
    AllColumnsConstant,
    #[error("matrix has no rows")]
    EmptyMatrix,
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("malformed feature CSV: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Moments,
    EnergyChange,
    CountsRuns,
    Autocorrelation,
    Spectral,
    Distributional,
    Trend,
}

/// What a catalog entry computes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind {
    Mean,
    Median,
    StandardDeviation,
    Variance,
    Skewness,
    Kurtosis,
    Minimum,
    Maximum,
    Quantile(f64),
    RootMeanSquare,
    MeanSecondDerivativeCentral,
    AbsEnergy,
    AbsoluteSumOfChanges,
    MeanAbsChange,
    MeanChange,
    CidCe,
    VarianceLargerThanStd,
    SumValues,
    CountAboveMean,
    CountBelowMean,
    LongestStrikeAboveMean,
    LongestStrikeBelowMean,
    ZeroCrossings,
    FirstLocationOfMaximum,
    LastLocationOfMaximum,
    FirstLocationOfMinimum,
    LastLocationOfMinimum,
    NumberOfPeaks(usize),
    Autocorrelation(usize),
    C3(usize),
    FftReal(usize),
    FftAbs(usize),
    SpectralCentroid,
    SpectralVariance,
    BinnedEntropy(usize),
    RatioBeyondRSigma(f64),
    Range,
    MeanNAbsoluteMax(usize),
    TrendSlope,
    TrendIntercept,
    TrendStderr,
}

impl FeatureKind {
    pub fn family(self) -> Family {
        use FeatureKind::*;
        match self {
            Mean
            | Median
            | StandardDeviation
            | Variance
            | Skewness
            | Kurtosis
            | Minimum
            | Maximum
            | Quantile(_)
            | RootMeanSquare
            | MeanSecondDerivativeCentral => Family::Moments,
            AbsEnergy
            | AbsoluteSumOfChanges
            | MeanAbsChange
            | MeanChange
            | CidCe
            | VarianceLargerThanStd
            | SumValues => Family::EnergyChange,
            CountAboveMean
            | CountBelowMean
            | LongestStrikeAboveMean
            | LongestStrikeBelowMean
            | ZeroCrossings
            | FirstLocationOfMaximum
            | LastLocationOfMaximum
            | FirstLocationOfMinimum
            | LastLocationOfMinimum
            | NumberOfPeaks(_) => Family::CountsRuns,
            Autocorrelation(_) | C3(_) => Family::Autocorrelation,
            FftReal(_) | FftAbs(_) | SpectralCentroid | SpectralVariance => Family::Spectral,
            BinnedEntropy(_) | RatioBeyondRSigma(_) | Range | MeanNAbsoluteMax(_) => {
                Family::Distributional
            }
            TrendSlope | TrendIntercept | TrendStderr => Family::Trend,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    pub parameters: BTreeMap<String, f64>,
}

impl FeatureDescriptor {
    pub fn family(&self) -> Family {
        self.kind.family()
    }
}

fn build_catalog() -> Vec<FeatureDescriptor> {
    use FeatureKind::*;
    let mut out = Vec::with_capacity(71);
    let mut push = |name: String, kind: FeatureKind, params: &[(&str, f64)]| {
        out.push(FeatureDescriptor {
            name,
            kind,
            parameters: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        })
    };

    for (name, kind) in [
        ("mean", Mean),
        ("median", Median),
        ("standard_deviation", StandardDeviation),
        ("variance", Variance),
        ("skewness", Skewness),
        ("kurtosis", Kurtosis),
        ("minimum", Minimum),
        ("maximum", Maximum),
    ] {
        push(name.into(), kind, &[]);
    }
    for q in [0.1, 0.25, 0.75, 0.9] {
        push(format!("quantile_{q}"), Quantile(q), &[("q", q)]);
    }
    push("root_mean_square".into(), RootMeanSquare, &[]);
    push(
        "mean_second_derivative_central".into(),
        MeanSecondDerivativeCentral,
        &[],
    );

    for (name, kind) in [
        ("abs_energy", AbsEnergy),
        ("absolute_sum_of_changes", AbsoluteSumOfChanges),
        ("mean_abs_change", MeanAbsChange),
        ("mean_change", MeanChange),
        ("cid_ce", CidCe),
        (
            "variance_larger_than_standard_deviation",
            VarianceLargerThanStd,
        ),
        ("sum_values", SumValues),
        ("count_above_mean", CountAboveMean),
        ("count_below_mean", CountBelowMean),
        ("longest_strike_above_mean", LongestStrikeAboveMean),
        ("longest_strike_below_mean", LongestStrikeBelowMean),
        ("number_of_zero_crossings", ZeroCrossings),
        ("first_location_of_maximum", FirstLocationOfMaximum),
        ("last_location_of_maximum", LastLocationOfMaximum),
        ("first_location_of_minimum", FirstLocationOfMinimum),
        ("last_location_of_minimum", LastLocationOfMinimum),
    ] {
        push(name.into(), kind, &[]);
    }
    push("number_peaks_n_3".into(), NumberOfPeaks(3), &[("n", 3.0)]);

    for lag in 1..=10 {
        push(
            format!("autocorrelation_lag_{lag}"),
            Autocorrelation(lag),
            &[("lag", lag as f64)],
        );
    }
    for lag in 1..=3 {
        push(format!("c3_lag_{lag}"), C3(lag), &[("lag", lag as f64)]);
    }

    for k in 1..=8 {
        push(
            format!("fft_coefficient_real_{k}"),
            FftReal(k),
            &[("coeff", k as f64)],
        );
    }
    for k in 1..=8 {
        push(
            format!("fft_coefficient_abs_{k}"),
            FftAbs(k),
            &[("coeff", k as f64)],
        );
    }
    push("spectral_centroid".into(), SpectralCentroid, &[]);
    push("spectral_variance".into(), SpectralVariance, &[]);

    push(
        "binned_entropy_10".into(),
        BinnedEntropy(10),
        &[("bins", 10.0)],
    );
    for r in [1.0, 2.0, 3.0] {
        push(
            format!("ratio_beyond_{r}_sigma"),
            RatioBeyondRSigma(r),
            &[("r", r)],
        );
    }
    push("range".into(), Range, &[]);
    push(
        "mean_n_absolute_max_7".into(),
        MeanNAbsoluteMax(7),
        &[("n", 7.0)],
    );

    push("linear_trend_slope".into(), TrendSlope, &[]);
    push("linear_trend_intercept".into(), TrendIntercept, &[]);
    push("linear_trend_stderr".into(), TrendStderr, &[]);
    out
}

/// The fixed, ordered feature catalog.
pub fn catalog() -> &'static [FeatureDescriptor] {
    static CATALOG: OnceLock<Vec<FeatureDescriptor>> = OnceLock::new();
    CATALOG.get_or_init(build_catalog)
}

pub fn feature_names() -> Vec<String> {
    catalog().iter().map(|d| d.name.clone()).collect()
}

/// Quantities shared by many features of one slice.
struct SliceStats<'a> {
    x: &'a [f64],
    n: f64,
    mean: f64,
    var: f64,
    std: f64,
    m3: f64,
    m4: f64,
    sorted: Vec<f64>,
    constant: bool,
    spectrum: Vec<Complex<f64>>,
}

impl<'a> SliceStats<'a> {
    fn new(x: &'a [f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in x {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let constant = sorted.first() == sorted.last();
        let var = if constant { 0.0 } else { m2 / n };

        let mut spectrum: Vec<Complex<f64>> =
            x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
        FftPlanner::new()
            .plan_fft_forward(spectrum.len())
            .process(&mut spectrum);

        Self {
            x,
            n,
            mean,
            var,
            std: var.sqrt(),
            m3: m3 / n,
            m4: m4 / n,
            sorted,
            constant,
            spectrum,
        }
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    fn quantile(&self, q: f64) -> f64 {
        let pos = q * (self.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(self.len() - 1);
        let frac = pos - lo as f64;
        self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo])
    }

    fn diffs(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.windows(2).map(|w| w[1] - w[0])
    }

    fn longest_strike(&self, pred: impl Fn(f64) -> bool) -> f64 {
        let (mut best, mut run) = (0usize, 0usize);
        for &v in self.x {
            if pred(v) {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        best as f64
    }

    fn power(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = self.len() / 2;
        self.spectrum[..=half]
            .iter()
            .enumerate()
            .map(|(k, c)| (k as f64, c.norm_sqr()))
    }

    fn spectral_moments(&self) -> (f64, f64) {
        let total: f64 = self.power().map(|(_, p)| p).sum();
        if total <= 0.0 {
            return (0.0, 0.0);
        }
        let centroid = self.power().map(|(k, p)| k * p).sum::<f64>() / total;
        let spread = self
            .power()
            .map(|(k, p)| (k - centroid).powi(2) * p)
            .sum::<f64>()
            / total;
        (centroid, spread)
    }

    fn trend(&self) -> (f64, f64, f64) {
        let n = self.len();
        if n < 2 {
            return (0.0, self.mean, 0.0);
        }
        let t_mean = (n - 1) as f64 / 2.0;
        let (mut stt, mut stx) = (0.0, 0.0);
        for (i, v) in self.x.iter().enumerate() {
            let dt = i as f64 - t_mean;
            stt += dt * dt;
            stx += dt * (v - self.mean);
        }
        let slope = stx / stt;
        let intercept = self.mean - slope * t_mean;
        let stderr = if n > 2 {
            let ssr: f64 = self
                .x
                .iter()
                .enumerate()
                .map(|(i, v)| (v - intercept - slope * i as f64).powi(2))
                .sum();
            (ssr / (n - 2) as f64).sqrt()
        } else {
            0.0
        };
        (slope, intercept, stderr)
    }

    fn compute(&self, kind: FeatureKind) -> f64 {
        use FeatureKind::*;
        let n = self.len();
        let x = self.x;
        match kind {
            Mean => self.mean,
            Median => self.quantile(0.5),
            StandardDeviation => self.std,
            Variance => self.var,
            Skewness => {
                if self.constant || n < 3 {
                    0.0
                } else {
                    let g1 = self.m3 / self.var.powf(1.5);
                    g1 * (self.n * (self.n - 1.0)).sqrt() / (self.n - 2.0)
                }
            }
            Kurtosis => {
                if self.constant || n < 4 {
                    0.0
                } else {
                    let g2 = self.m4 / (self.var * self.var) - 3.0;
                    (self.n - 1.0) / ((self.n - 2.0) * (self.n - 3.0)) * ((self.n + 1.0) * g2 + 6.0)
                }
            }
            Minimum => self.sorted[0],
            Maximum => self.sorted[n - 1],
            Quantile(q) => self.quantile(q),
            RootMeanSquare => (x.iter().map(|v| v * v).sum::<f64>() / self.n).sqrt(),
            MeanSecondDerivativeCentral => {
                if n < 3 {
                    0.0
                } else {
                    x.windows(3)
                        .map(|w| 0.5 * (w[2] - 2.0 * w[1] + w[0]))
                        .sum::<f64>()
                        / (n - 2) as f64
                }
            }
            AbsEnergy => x.iter().map(|v| v * v).sum(),
            AbsoluteSumOfChanges => self.diffs().map(f64::abs).sum(),
            MeanAbsChange => {
                if n < 2 {
                    0.0
                } else {
                    self.diffs().map(f64::abs).sum::<f64>() / (n - 1) as f64
                }
            }
            MeanChange => {
                if n < 2 {
                    0.0
                } else {
                    (x[n - 1] - x[0]) / (n - 1) as f64
                }
            }
            CidCe => self.diffs().map(|d| d * d).sum::<f64>().sqrt(),
            VarianceLargerThanStd => f64::from(u8::from(self.var > self.std)),
            SumValues => x.iter().sum(),
            CountAboveMean => x.iter().filter(|&&v| v > self.mean).count() as f64,
            CountBelowMean => x.iter().filter(|&&v| v < self.mean).count() as f64,
            LongestStrikeAboveMean => self.longest_strike(|v| v > self.mean),
            LongestStrikeBelowMean => self.longest_strike(|v| v < self.mean),
            ZeroCrossings => x
                .windows(2)
                .filter(|w| (w[0] - self.mean > 0.0) != (w[1] - self.mean > 0.0))
                .count() as f64,
            FirstLocationOfMaximum => {
                let max = self.sorted[n - 1];
                x.iter().position(|&v| v == max).unwrap_or(0) as f64 / self.n
            }
            LastLocationOfMaximum => {
                let max = self.sorted[n - 1];
                (x.iter().rposition(|&v| v == max).unwrap_or(0) + 1) as f64 / self.n
            }
            FirstLocationOfMinimum => {
                let min = self.sorted[0];
                x.iter().position(|&v| v == min).unwrap_or(0) as f64 / self.n
            }
            LastLocationOfMinimum => {
                let min = self.sorted[0];
                (x.iter().rposition(|&v| v == min).unwrap_or(0) + 1) as f64 / self.n
            }
            NumberOfPeaks(support) => {
                if n < 2 * support + 1 {
                    0.0
                } else {
                    (support..n - support)
                        .filter(|&i| (1..=support).all(|j| x[i] > x[i - j] && x[i] > x[i + j]))
                        .count() as f64
                }
            }
            Autocorrelation(lag) => {
                if self.constant || n <= lag {
                    0.0
                } else {
                    let s: f64 = (0..n - lag)
                        .map(|i| (x[i] - self.mean) * (x[i + lag] - self.mean))
                        .sum();
                    s / ((n - lag) as f64 * self.var)
                }
            }
            C3(lag) => {
                if n <= 2 * lag {
                    0.0
                } else {
                    let m = n - 2 * lag;
                    (0..m)
                        .map(|i| x[i] * x[i + lag] * x[i + 2 * lag])
                        .sum::<f64>()
                        / m as f64
                }
            }
            FftReal(k) => self.spectrum.get(k).map_or(0.0, |c| c.re),
            FftAbs(k) => self.spectrum.get(k).map_or(0.0, |c| c.norm()),
            SpectralCentroid => self.spectral_moments().0,
            SpectralVariance => self.spectral_moments().1,
            BinnedEntropy(bins) => {
                if self.constant {
                    0.0
                } else {
                    let (lo, hi) = (self.sorted[0], self.sorted[n - 1]);
                    let mut counts = vec![0usize; bins];
                    for v in x {
                        let b = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
                        counts[b.min(bins - 1)] += 1;
                    }
                    -counts
                        .iter()
                        .filter(|&&c| c > 0)
                        .map(|&c| {
                            let p = c as f64 / self.n;
                            p * p.ln()
                        })
                        .sum::<f64>()
                }
            }
            RatioBeyondRSigma(r) => {
                x.iter()
                    .filter(|&&v| (v - self.mean).abs() > r * self.std)
                    .count() as f64
                    / self.n
            }
            Range => self.sorted[n - 1] - self.sorted[0],
            MeanNAbsoluteMax(k) => {
                let mut abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
                abs.sort_by(|a, b| b.total_cmp(a));
                let m = k.min(n);
                abs[..m].iter().sum::<f64>() / m as f64
            }
            TrendSlope => self.trend().0,
            TrendIntercept => self.trend().1,
            TrendStderr => self.trend().2,
        }
    }
}

/// Compute every catalog feature of `slice`, enforcing a minimum length.
pub fn extract_values_min_len(slice: &[f64], min_len: usize) -> Result<Vec<f64>> {
    let min = min_len.max(1);
    if slice.len() < min {
        return Err(FeatureError::SliceTooShort {
            len: slice.len(),
            min,
        });
    }
    if slice.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFiniteInput);
    }
    let stats = SliceStats::new(slice);
    catalog()
        .iter()
        .map(|d| {
            let v = stats.compute(d.kind);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(FeatureError::NonFiniteFeature(d.name.as_str()))
            }
        })
        .collect()
}

/// Catalog features of a slice of at least [`MIN_SLICE_LEN`] samples.
pub fn extract_values(slice: &[f64]) -> Result<Vec<f64>> {
    extract_values_min_len(slice, MIN_SLICE_LEN)
}

/// One row of features, aligned to catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub exposition_id: String,
    pub channel: ChannelId,
    pub subtracted: bool,
}

pub fn extract(slice: &[f64], exposition_id: &str, channel: ChannelId) -> Result<FeatureVector> {
    Ok(FeatureVector {
        values: extract_values(slice)?,
        exposition_id: exposition_id.to_string(),
        channel,
        subtracted: false,
    })
}

/// Features of the stimulus (or pre-stimulus) slice minus those of the
/// background slice.
pub fn extract_with_background(triple: &SliceTriple, use_stimulus: bool) -> Result<FeatureVector> {
    let target = if use_stimulus {
        &triple.stimulus
    } else {
        &triple.prestimulus
    };
    let fg = extract_values(target)?;
    let bg = extract_values(&triple.background)?;
    Ok(FeatureVector {
        values: fg.iter().zip(&bg).map(|(a, b)| a - b).collect(),
        exposition_id: triple.exposition_id.clone(),
        channel: triple.channel.clone(),
        subtracted: true,
    })
}

/// The two labelled samples of one exposition: stimulus (1) and
/// pre-stimulus (0), each background-subtracted.
pub fn exposition_samples(triple: &SliceTriple) -> Result<[(FeatureVector, u8); 2]> {
    Ok([
        (extract_with_background(triple, true)?, 1),
        (extract_with_background(triple, false)?, 0),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Leaf,
    Stem,
    Combined,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Leaf => "leaf",
            Provenance::Stem => "stem",
            Provenance::Combined => "combined",
        })
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "leaf" => Ok(Provenance::Leaf),
            "stem" => Ok(Provenance::Stem),
            "combined" => Ok(Provenance::Combined),
            other => Err(format!("unknown dataset `{other}`")),
        }
    }
}

/// Rows are samples (one per exposition and class), columns are named features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub columns: Vec<String>,
    pub data: Array2<f64>,
    pub provenance: Provenance,
}

impl FeatureMatrix {
    pub fn new(
        ids: Vec<String>,
        labels: Vec<u8>,
        columns: Vec<String>,
        data: Array2<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if ids.len() != data.nrows() || labels.len() != data.nrows() {
            return Err(FeatureError::Shape(format!(
                "{} ids, {} labels, {} rows",
                ids.len(),
                labels.len(),
                data.nrows()
            )));
        }
        if columns.len() != data.ncols() {
            return Err(FeatureError::Shape(format!(
                "{} names for {} columns",
                columns.len(),
                data.ncols()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(FeatureError::Shape("labels must be 0 or 1".into()));
        }
        Ok(Self {
            ids,
            labels,
            columns,
            data,
            provenance,
        })
    }

    /// Stack labelled feature vectors; column names come from the catalog.
    pub fn from_vectors(rows: &[(FeatureVector, u8)], provenance: Provenance) -> Result<Self> {
        let columns = feature_names();
        let mut data = Array2::zeros((rows.len(), columns.len()));
        for (mut row, (v, _)) in data.rows_mut().into_iter().zip(rows) {
            if v.values.len() != columns.len() {
                return Err(FeatureError::Shape(format!(
                    "vector of length {} for catalog of {}",
                    v.values.len(),
                    columns.len()
                )));
            }
            row.assign(&ndarray::ArrayView1::from(&v.values));
        }
        Self::new(
            rows.iter().map(|(v, _)| v.exposition_id.clone()).collect(),
            rows.iter().map(|(_, l)| *l).collect(),
            columns,
            data,
            provenance,
        )
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: self.ids.clone(),
            labels: self.labels.clone(),
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            data: self.data.select(Axis(1), cols),
            provenance: self.provenance,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            columns: self.columns.clone(),
            data: self.data.select(Axis(0), rows),
            provenance: self.provenance,
        }
    }

    /// Header `exposition_id,label,<features...>`; values in shortest
    /// round-trip decimal form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| FeatureError::Csv(e.to_string());
        let mut header = vec!["exposition_id".to_string(), "label".to_string()];
        header.extend(self.columns.iter().cloned());
        out.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.data.rows().into_iter().enumerate() {
            let mut rec = vec![self.ids[i].clone(), self.labels[i].to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(|e| FeatureError::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R, provenance: Provenance) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let csv_err = |e: csv::Error| FeatureError::Csv(e.to_string());
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("exposition_id") || header.get(1) != Some("label") {
            return Err(FeatureError::Csv(
                "header must start with `exposition_id,label`".into(),
            ));
        }
        let columns: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let (mut ids, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != columns.len() + 2 {
                return Err(FeatureError::Csv(format!(
                    "row {} has {} fields",
                    line + 1,
                    rec.len()
                )));
            }
            ids.push(rec[0].to_string());
            labels.push(match &rec[1] {
                "0" => 0,
                "1" => 1,
                other => return Err(FeatureError::Csv(format!("bad label `{other}`"))),
            });
            for field in rec.iter().skip(2) {
                values.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| FeatureError::Csv(format!("bad number `{field}`")))?,
                );
            }
        }
        let data = Array2::from_shape_vec((ids.len(), columns.len()), values)
            .map_err(|e| FeatureError::Shape(e.to_string()))?;
        Self::new(ids, labels, columns, data, provenance)
    }
}

/// Drop columns whose values are identical in every row. Returns the reduced
/// matrix and the names of the dropped columns.
pub fn remove_constant(m: &FeatureMatrix) -> Result<(FeatureMatrix, Vec<String>)> {
    if m.n_rows() == 0 {
        return Err(FeatureError::EmptyMatrix);
    }
    let (keep, drop): (Vec<usize>, Vec<usize>) = (0..m.n_cols()).partition(|&c| {
        let col = m.data.column(c);
        let first = col[0];
        col.iter().any(|&v| v != first)
    });
    if keep.is_empty() {
        return Err(FeatureError::AllColumnsConstant);
    }
    let dropped = drop.iter().map(|&c| m.columns[c].clone()).collect();
    Ok((m.select_columns(&keep), dropped))
}

/// Join leaf and stem matrices on (exposition, label), prefix the column
/// names by channel and drop constant columns.
pub fn combine_channels(leaf: &FeatureMatrix, stem: &FeatureMatrix) -> Result<FeatureMatrix> {
    fn labels_of(m: &FeatureMatrix) -> HashMap<&str, BTreeSet<u8>> {
        let mut map: HashMap<&str, BTreeSet<u8>> = HashMap::new();
        for (id, &l) in m.ids.iter().zip(&m.labels) {
            map.entry(id.as_str()).or_default().insert(l);
        }
        map
    }
    let (leaf_labels, stem_labels) = (labels_of(leaf), labels_of(stem));
    for (id, labels) in &leaf_labels {
        if let Some(other) = stem_labels.get(id) {
            if labels != other {
                return Err(FeatureError::LabelMismatch(id.to_string()));
            }
        }
    }
    let stem_rows: HashMap<(&str, u8), usize> = stem
        .ids
        .iter()
        .zip(&stem.labels)
        .enumerate()
        .map(|(i, (id, &l))| ((id.as_str(), l), i))
        .collect();
    let pairs: Vec<(usize, usize)> = leaf
        .ids
        .iter()
        .zip(&leaf.labels)
        .enumerate()
        .filter_map(|(i, (id, &l))| stem_rows.get(&(id.as_str(), l)).map(|&j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(FeatureError::NoCommonExpositions);
    }

    let width = leaf.n_cols() + stem.n_cols();
    let mut data = Array2::zeros((pairs.len(), width));
    for (mut row, &(i, j)) in data.rows_mut().into_iter().zip(&pairs) {
        row.slice_mut(ndarray::s![..leaf.n_cols()])
            .assign(&leaf.data.row(i));
        row.slice_mut(ndarray::s![leaf.n_cols()..])
            .assign(&stem.data.row(j));
    }
    let columns = leaf
        .columns
        .iter()
        .map(|c| format!("leaf__{c}"))
        .chain(stem.columns.iter().map(|c| format!("stem__{c}")))
        .collect();
    let joined = FeatureMatrix::new(
        pairs.iter().map(|&(i, _)| leaf.ids[i].clone()).collect(),
        pairs.iter().map(|&(i, _)| leaf.labels[i]).collect(),
        columns,
        data,
        Provenance::Combined,
    )?;
    Ok(remove_constant(&joined)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(values: &[f64], name: &str) -> f64 {
        let i = catalog().iter().position(|d| d.name == name).unwrap();
        values[i]
    }

    #[test]
    fn catalog_shape() {
        let cat = catalog();
        assert_eq!(cat[0].name, "mean");
        assert_eq!(cat.len(), 71);
        let names: BTreeSet<&str> = cat.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names.len(), cat.len());
        let count = |f: Family| cat.iter().filter(|d| d.family() == f).count();
        assert_eq!(count(Family::Moments), 14);
        assert_eq!(count(Family::EnergyChange), 7);
        assert_eq!(count(Family::CountsRuns), 10);
        assert_eq!(count(Family::Autocorrelation), 13);
        assert_eq!(count(Family::Spectral), 18);
        assert_eq!(count(Family::Distributional), 6);
        assert_eq!(count(Family::Trend), 3);
        assert_eq!(catalog().as_ptr(), cat.as_ptr());
    }

    #[test]
    fn constant_slice_identities() {
        let v = extract_values(&[5.0; 1200]).unwrap();
        assert_eq!(value(&v, "mean"), 5.0);
        assert_eq!(value(&v, "variance"), 0.0);
        assert_eq!(value(&v, "abs_energy"), 1200.0 * 25.0);
        assert_eq!(value(&v, "mean_abs_change"), 0.0);
        assert_eq!(value(&v, "skewness"), 0.0);
        assert_eq!(value(&v, "kurtosis"), 0.0);
        assert_eq!(value(&v, "autocorrelation_lag_1"), 0.0);
        assert_eq!(value(&v, "binned_entropy_10"), 0.0);
        assert_eq!(value(&v, "spectral_centroid"), 0.0);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn four_point_ramp() {
        let v = extract_values_min_len(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        assert_eq!(value(&v, "mean"), 2.5);
        assert_eq!(value(&v, "abs_energy"), 30.0);
        assert_eq!(value(&v, "mean_abs_change"), 1.0);
        assert!((value(&v, "linear_trend_slope") - 1.0).abs() < 1e-15);
        assert!((value(&v, "linear_trend_intercept") - 1.0).abs() < 1e-15);
        assert!(value(&v, "linear_trend_stderr").abs() < 1e-15);
        assert_eq!(value(&v, "median"), 2.5);
        // numpy linear quantile: 1 + 0.25 * 3 = 1.75
        assert_eq!(value(&v, "quantile_0.25"), 1.75);
        assert_eq!(value(&v, "cid_ce"), 3f64.sqrt());
        assert!(matches!(
            extract_values(&[1.0, 2.0, 3.0, 4.0]),
            Err(FeatureError::SliceTooShort { .. })
        ));
    }

    #[test]
    fn alternating_series() {
        let x: Vec<f64> = (0..64)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let v = extract_values(&x).unwrap();
        assert!((value(&v, "autocorrelation_lag_1") + 1.0).abs() < 1e-15);
        assert!((value(&v, "autocorrelation_lag_2") - 1.0).abs() < 1e-15);
        assert_eq!(value(&v, "number_of_zero_crossings"), 63.0);
        // all energy sits at the Nyquist bin
        assert!((value(&v, "spectral_centroid") - 32.0).abs() < 1e-9);
    }

    #[test]
    fn hand_checked_moments() {
        // x = [0, 0, 0, 1]: mean 1/4, m2 = 3/16, m3 = 3/32 (hand computed)
        let v = extract_values_min_len(&[0.0, 0.0, 0.0, 1.0], 1).unwrap();
        let g1 = (3.0 / 32.0) / (3.0f64 / 16.0).powf(1.5);
        let expected = g1 * (12.0f64).sqrt() / 2.0;
        assert!((value(&v, "skewness") - expected).abs() < 1e-12);
        assert_eq!(value(&v, "count_above_mean"), 1.0);
        assert_eq!(value(&v, "count_below_mean"), 3.0);
        assert_eq!(value(&v, "longest_strike_below_mean"), 3.0);
        assert_eq!(value(&v, "first_location_of_maximum"), 0.75);
        assert_eq!(value(&v, "last_location_of_maximum"), 1.0);
        assert_eq!(value(&v, "first_location_of_minimum"), 0.0);
        assert_eq!(value(&v, "last_location_of_minimum"), 0.75);
        assert_eq!(value(&v, "range"), 1.0);
        assert_eq!(value(&v, "mean_n_absolute_max_7"), 0.25);
    }

    #[test]
    fn peaks_and_c3() {
        let x = [0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];
        let v = extract_values_min_len(&x, 1).unwrap();
        assert_eq!(value(&v, "number_peaks_n_3"), 1.0);
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let v = extract_values_min_len(&y, 1).unwrap();
        // lag 1: (1*2*3 + 2*3*4 + 3*4*5) / 3
        assert_eq!(value(&v, "c3_lag_1"), (6.0 + 24.0 + 60.0) / 3.0);
        assert_eq!(value(&v, "c3_lag_2"), 15.0);
        assert_eq!(value(&v, "c3_lag_3"), 0.0);
    }

    #[test]
    fn dft_matches_direct_sum() {
        let x: Vec<f64> = (0..40)
            .map(|i| ((i * 7) % 11) as f64 - 0.3 * i as f64)
            .collect();
        let v = extract_values(&x).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        for k in 1..=8 {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, xt) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / x.len() as f64;
                re += (xt - mean) * ang.cos();
                im += (xt - mean) * ang.sin();
            }
            assert!((value(&v, &format!("fft_coefficient_real_{k}")) - re).abs() < 1e-9);
            assert!((value(&v, &format!("fft_coefficient_abs_{k}")) - re.hypot(im)).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = vec![1.0; 40];
        x[3] = f64::NAN;
        assert!(matches!(
            extract_values(&x),
            Err(FeatureError::NonFiniteInput)
        ));
    }

    fn triple(stim: Vec<f64>, bg: Vec<f64>) -> SliceTriple {
        SliceTriple {
            exposition_id: "e1".into(),
            channel: ChannelId::Leaf,
            prestimulus: bg.clone(),
            stimulus: stim,
            background: bg,
            rate: 2.0,
            coverage: crate::ingest::CoverageReport::FULL,
        }
    }

    #[test]
    fn background_subtraction() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let v = extract_with_background(&triple(x.clone(), x), true).unwrap();
        assert!(v.subtracted);
        assert_eq!(v.values.len(), catalog().len());
        assert!(v.values.iter().all(|&z| z == 0.0));

        let v = extract_with_background(&triple(vec![3.0; 64], vec![2.0; 64]), true).unwrap();
        assert_eq!(value(&v.values, "mean"), 1.0);
        assert_eq!(value(&v.values, "variance"), 0.0);
    }

    fn matrix(
        ids: &[&str],
        labels: &[u8],
        cols: &[&str],
        rows: Vec<f64>,
        p: Provenance,
    ) -> FeatureMatrix {
        FeatureMatrix::new(
            ids.iter().map(|s| s.to_string()).collect(),
            labels.to_vec(),
            cols.iter().map(|s| s.to_string()).collect(),
            Array2::from_shape_vec((ids.len(), cols.len()), rows).unwrap(),
            p,
        )
        .unwrap()
    }

    #[test]
    fn constant_columns_are_removed() {
        let m = matrix(
            &["a", "b", "c"],
            &[0, 1, 0],
            &["k", "v"],
            vec![1.0, 1.0, 1.0, 2.0, 1.0, 3.0],
            Provenance::Leaf,
        );
        let (out, dropped) = remove_constant(&m).unwrap();
        assert_eq!(out.columns, vec!["v"]);
        assert_eq!(dropped, vec!["k"]);
        let (same, none) = remove_constant(&out).unwrap();
        assert_eq!(same, out);
        assert!(none.is_empty());
        let all = matrix(
            &["a", "b"],
            &[0, 1],
            &["k"],
            vec![1.0, 1.0],
            Provenance::Leaf,
        );
        assert!(matches!(
            remove_constant(&all),
            Err(FeatureError::AllColumnsConstant)
        ));
    }

    #[test]
    fn channel_combination() {
        let leaf = matrix(
            &["e1", "e1", "e2"],
            &[1, 0, 1],
            &["a", "b"],
            vec![1., 7., 2., 7., 3., 7.],
            Provenance::Leaf,
        );
        let stem = matrix(
            &["e2", "e1", "e1"],
            &[1, 0, 1],
            &["a", "b"],
            vec![30., 5., 20., 6., 10., 7.],
            Provenance::Stem,
        );
        let c = combine_channels(&leaf, &stem).unwrap();
        assert_eq!(c.n_rows(), 3);
        assert_eq!(c.columns, vec!["leaf__a", "stem__a", "stem__b"]);
        assert_eq!(c.ids, vec!["e1", "e1", "e2"]);
        assert_eq!(c.data.row(0).to_vec(), vec![1.0, 10.0, 7.0]);
        assert_eq!(c.data.row(2).to_vec(), vec![3.0, 30.0, 5.0]);
        assert_eq!(c.provenance, Provenance::Combined);

        let other = matrix(
            &["x", "y"],
            &[0, 1],
            &["a", "b"],
            vec![1., 2., 3., 4.],
            Provenance::Stem,
        );
        assert!(matches!(
            combine_channels(&leaf, &other),
            Err(FeatureError::NoCommonExpositions)
        ));
        let bad = matrix(
            &["e2", "e2"],
            &[0, 1],
            &["a", "b"],
            vec![1., 2., 3., 4.],
            Provenance::Stem,
        );
        assert!(matches!(
            combine_channels(&leaf, &bad),
            Err(FeatureError::LabelMismatch(_))
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let m = matrix(
            &["a", "b"],
            &[0, 1],
            &["x", "y"],
            vec![0.1, -2.5e-17, 3.0, 1e300],
            Provenance::Stem,
        );
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("exposition_id,label,x,y\n"));
        assert_eq!(
            FeatureMatrix::read_csv(buf.as_slice(), Provenance::Stem).unwrap(),
            m
        );
    }
}
