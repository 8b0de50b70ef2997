//! Recording ingestion and preprocessing.
//!
//! The chain applied to every channel of an exposition is:
//! raw CSV -> millivolts -> removal of out-of-range samples -> trailing
//! rolling median -> bucket-mean downsampling -> three aligned windows
//! (background, pre-stimulus, stimulus).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default stimulus duration in seconds.
pub const DEFAULT_STIMULUS_DURATION: f64 = 600.0;
/// Samples with a magnitude above this many millivolts are physically implausible.
pub const DEFAULT_CLIP_LIMIT_MV: f64 = 200.0;
pub const DEFAULT_MEDIAN_WINDOW: usize = 10;
pub const DEFAULT_TARGET_RATE: f64 = 2.0;
/// Minimum fraction of expected raw samples a window must contain.
pub const DEFAULT_MIN_COVERAGE: f64 = 0.5;

// Tolerance in bucket units for floating-point timestamps sitting on a bucket edge.
const GRID_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("recording file not found: {0}")]
    FileMissing(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed header: expected `timestamp,value`, found `{0}`")]
    MalformedHeader(String),
    #[error("recording contains no valid rows")]
    EmptyRecording,
    #[error("timestamps not strictly increasing at data row {row}")]
    NonMonotoneTimestamps { row: usize },
    #[error("recording is already in millivolts")]
    AlreadyConverted,
    #[error("operation requires a millivolt recording")]
    NotMillivolt,
    #[error("conversion gain must be finite and non-zero, got {0}")]
    InvalidGain(f64),
    #[error("conversion produced a non-finite value")]
    NonFiniteValue,
    #[error("every sample exceeded the clipping limit")]
    EmptyAfterClipping,
    #[error("median window must be at least 1")]
    InvalidWindow,
    #[error("median window {window} exceeds series length {len}")]
    WindowLargerThanSeries { window: usize, len: usize },
    #[error("target rate {target} Hz exceeds nominal rate {nominal} Hz")]
    UpsamplingRequested { target: f64, nominal: f64 },
    #[error("recording shorter than one output bucket")]
    RecordingTooShort,
    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(CoverageReport),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("manifest has no file for channel `{0}`")]
    UnknownChannel(ChannelId),
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelId {
    Leaf,
    Stem,
    Other(String),
}

impl ChannelId {
    pub fn as_str(&self) -> &str {
        match self {
            ChannelId::Leaf => "leaf",
            ChannelId::Stem => "stem",
            ChannelId::Other(s) => s,
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelId {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "leaf" => ChannelId::Leaf,
            "stem" => ChannelId::Stem,
            other => ChannelId::Other(other.to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Raw,
    Millivolt,
}

/// Per-bucket count of raw samples that fed a downsampled value.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSupport {
    pub counts: Vec<u32>,
    pub source_rate: f64,
}

/// One channel of timestamped potential samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecording {
    pub channel: ChannelId,
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub nominal_rate: f64,
    pub unit: Unit,
    /// Rows dropped at load time because they did not parse.
    pub dropped_rows: usize,
    /// Present once the recording has been downsampled.
    pub support: Option<BucketSupport>,
}

impl TimeSeriesRecording {
    /// Build a recording from parallel timestamp/value vectors, checking the
    /// ordering and rate invariants.
    pub fn new(
        channel: ChannelId,
        timestamps: Vec<f64>,
        values: Vec<f64>,
        nominal_rate: f64,
        unit: Unit,
    ) -> Result<Self> {
        if timestamps.is_empty() || timestamps.len() != values.len() {
            return Err(IngestError::EmptyRecording);
        }
        if let Some(row) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(IngestError::NonMonotoneTimestamps { row: row + 1 });
        }
        if !(nominal_rate > 0.0 && nominal_rate.is_finite()) {
            return Err(IngestError::InvalidManifest(format!(
                "nominal rate must be positive, got {nominal_rate}"
            )));
        }
        Ok(Self {
            channel,
            timestamps,
            values,
            nominal_rate,
            unit,
            dropped_rows: 0,
            support: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Span covered by the samples, counting one sample period for the last sample.
    pub fn duration(&self) -> f64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => b - a + 1.0 / self.nominal_rate,
            _ => 0.0,
        }
    }
}

/// Timing and calibration of one stimulus exposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpositionManifest {
    pub plant_id: String,
    pub exposition_id: String,
    pub stimulus_onset: f64,
    #[serde(default = "default_duration")]
    pub stimulus_duration: f64,
    /// Channel name (`leaf`, `stem`, ...) to recording CSV path. Relative
    /// paths are resolved against the manifest's directory.
    pub channels: BTreeMap<String, PathBuf>,
    /// Millivolts per raw count.
    pub gain: f64,
    /// Millivolt offset added after scaling.
    pub offset: f64,
    /// Sampling rate of the raw recordings; estimated from timestamps when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_rate: Option<f64>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_duration() -> f64 {
    DEFAULT_STIMULUS_DURATION
}

impl ExpositionManifest {
    pub fn validate(&self) -> Result<()> {
        if !(self.stimulus_duration > 0.0 && self.stimulus_duration.is_finite()) {
            return Err(IngestError::InvalidManifest(format!(
                "stimulus_duration must be positive, got {}",
                self.stimulus_duration
            )));
        }
        if self.gain == 0.0 || !self.gain.is_finite() {
            return Err(IngestError::InvalidGain(self.gain));
        }
        if !self.offset.is_finite() || !self.stimulus_onset.is_finite() {
            return Err(IngestError::InvalidManifest(
                "offset and stimulus_onset must be finite".into(),
            ));
        }
        if let Some(rate) = self.nominal_rate {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(IngestError::InvalidManifest(format!(
                    "nominal_rate must be positive, got {rate}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| io_error(path, source))?;
        let mut manifest: Self = serde_json::from_str(&text)
            .map_err(|e| IngestError::InvalidManifest(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf);
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| IngestError::InvalidManifest(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|source| io_error(path, source))
    }

    pub fn channel_path(&self, channel: &ChannelId) -> Result<PathBuf> {
        let rel = self
            .channels
            .get(channel.as_str())
            .ok_or_else(|| IngestError::UnknownChannel(channel.clone()))?;
        Ok(match &self.base_dir {
            Some(dir) if rel.is_relative() => dir.join(rel),
            _ => rel.clone(),
        })
    }

    pub fn background_window(&self) -> (f64, f64) {
        let d = self.stimulus_duration;
        (self.stimulus_onset - 2.0 * d, self.stimulus_onset - d)
    }

    pub fn prestimulus_window(&self) -> (f64, f64) {
        let d = self.stimulus_duration;
        (self.stimulus_onset - d, self.stimulus_onset)
    }

    pub fn stimulus_window(&self) -> (f64, f64) {
        (
            self.stimulus_onset,
            self.stimulus_onset + self.stimulus_duration,
        )
    }
}

fn io_error(path: &Path, source: io::Error) -> IngestError {
    if source.kind() == io::ErrorKind::NotFound {
        IngestError::FileMissing(path.to_path_buf())
    } else {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Parse a `timestamp,value` CSV stream. Rows that fail to parse are dropped
/// and counted; blank lines are ignored.
pub fn parse_recording<R: BufRead>(
    mut reader: R,
    channel: ChannelId,
    nominal_rate: Option<f64>,
) -> Result<TimeSeriesRecording> {
    let mut line = String::new();
    let header_io = |e| IngestError::Io {
        path: PathBuf::from("<stream>"),
        source: e,
    };
    reader.read_line(&mut line).map_err(header_io)?;
    let header = line
        .trim_start_matches('\u{feff}')
        .trim_end_matches(['\r', '\n']);
    let mut cols = header.split(',').map(str::trim);
    if cols.next() != Some("timestamp") || cols.next() != Some("value") || cols.next().is_some() {
        return Err(IngestError::MalformedHeader(header.to_string()));
    }

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut dropped = 0usize;
    let mut row = 0usize;
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(header_io)? == 0 {
            break;
        }
        let text = line.trim_end_matches(['\r', '\n']);
        if text.trim().is_empty() {
            continue;
        }
        row += 1;
        let mut fields = text.split(',');
        let parsed = match (fields.next(), fields.next(), fields.next()) {
            (Some(t), Some(v), None) => t
                .trim()
                .parse::<f64>()
                .ok()
                .zip(v.trim().parse::<f64>().ok())
                .filter(|(t, v)| t.is_finite() && v.is_finite()),
            _ => None,
        };
        match parsed {
            Some((t, v)) => {
                if timestamps.last().is_some_and(|&prev| t <= prev) {
                    return Err(IngestError::NonMonotoneTimestamps { row });
                }
                timestamps.push(t);
                values.push(v);
            }
            None => dropped += 1,
        }
    }
    if timestamps.is_empty() {
        return Err(IngestError::EmptyRecording);
    }
    let rate = match nominal_rate {
        Some(r) => r,
        None => estimate_rate(&timestamps).ok_or(IngestError::EmptyRecording)?,
    };
    let mut rec = TimeSeriesRecording::new(channel, timestamps, values, rate, Unit::Raw)?;
    rec.dropped_rows = dropped;
    Ok(rec)
}

/// Reciprocal of the median positive sample spacing.
pub fn estimate_rate(timestamps: &[f64]) -> Option<f64> {
    let mut diffs: Vec<f64> = timestamps
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .collect();
    if diffs.is_empty() {
        // A single sample carries no rate information; treat it as 1 Hz.
        return (timestamps.len() == 1).then_some(1.0);
    }
    let mid = diffs.len() / 2;
    let (_, median, _) = diffs.select_nth_unstable_by(mid, f64::total_cmp);
    Some(1.0 / *median)
}

/// Load the recording of `channel` from `path`, using the manifest's rate if set.
pub fn load_recording(
    path: &Path,
    channel: ChannelId,
    manifest: &ExpositionManifest,
) -> Result<TimeSeriesRecording> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    parse_recording(
        BufReader::with_capacity(1 << 20, file),
        channel,
        manifest.nominal_rate,
    )
    .map_err(|e| match e {
        IngestError::Io { source, .. } => io_error(path, source),
        other => other,
    })
}

pub fn write_recording<W: Write>(mut w: W, rec: &TimeSeriesRecording) -> io::Result<()> {
    writeln!(w, "timestamp,value")?;
    for (t, v) in rec.timestamps.iter().zip(&rec.values) {
        writeln!(w, "{t},{v}")?;
    }
    w.flush()
}

/// Affine raw-to-millivolt conversion: `value * gain + offset`.
pub fn to_millivolts(
    rec: &TimeSeriesRecording,
    gain: f64,
    offset: f64,
) -> Result<TimeSeriesRecording> {
    if rec.unit == Unit::Millivolt {
        return Err(IngestError::AlreadyConverted);
    }
    if gain == 0.0 || !gain.is_finite() {
        return Err(IngestError::InvalidGain(gain));
    }
    let values: Vec<f64> = rec.values.iter().map(|v| gain * v + offset).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(IngestError::NonFiniteValue);
    }
    Ok(TimeSeriesRecording {
        values,
        unit: Unit::Millivolt,
        ..rec.clone()
    })
}

/// Remove (not clamp) every sample whose magnitude exceeds `limit_mv`.
/// Returns the filtered recording and the number of removed samples.
pub fn clip_invalid(
    rec: &TimeSeriesRecording,
    limit_mv: f64,
) -> Result<(TimeSeriesRecording, usize)> {
    if rec.unit != Unit::Millivolt {
        return Err(IngestError::NotMillivolt);
    }
    let (timestamps, values): (Vec<f64>, Vec<f64>) = rec
        .timestamps
        .iter()
        .zip(&rec.values)
        .filter(|(_, v)| v.abs() <= limit_mv)
        .map(|(t, v)| (*t, *v))
        .unzip();
    if values.is_empty() {
        return Err(IngestError::EmptyAfterClipping);
    }
    let removed = rec.len() - values.len();
    Ok((
        TimeSeriesRecording {
            timestamps,
            values,
            ..rec.clone()
        },
        removed,
    ))
}

/// Trailing rolling median. Positions before `window - 1` use the shorter
/// prefix; even-sized windows average the two middle order statistics.
pub fn rolling_median_values(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(IngestError::InvalidWindow);
    }
    if values.len() < window {
        return Err(IngestError::WindowLargerThanSeries {
            window,
            len: values.len(),
        });
    }
    let mut buf = Vec::with_capacity(window);
    Ok((0..values.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            buf.clear();
            buf.extend_from_slice(&values[start..=i]);
            median_in_place(&mut buf)
        })
        .collect())
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    let (lower, upper_mid, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let upper_mid = *upper_mid;
    if n % 2 == 1 {
        upper_mid
    } else {
        let lower_mid = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_mid + upper_mid)
    }
}

pub fn rolling_median(rec: &TimeSeriesRecording, window: usize) -> Result<TimeSeriesRecording> {
    Ok(TimeSeriesRecording {
        values: rolling_median_values(&rec.values, window)?,
        ..rec.clone()
    })
}

/// Bucket-mean downsampling onto a uniform grid anchored at the first sample.
///
/// Empty buckets are filled by linear interpolation between the nearest
/// non-empty buckets; leading and trailing empty buckets copy their nearest
/// neighbour. Output timestamps are bucket midpoints.
pub fn downsample(rec: &TimeSeriesRecording, target_rate: f64) -> Result<TimeSeriesRecording> {
    if !(target_rate > 0.0) || target_rate > rec.nominal_rate * (1.0 + 1e-9) {
        return Err(IngestError::UpsamplingRequested {
            target: target_rate,
            nominal: rec.nominal_rate,
        });
    }
    let t0 = *rec.timestamps.first().ok_or(IngestError::EmptyRecording)?;
    let n_buckets = (rec.duration() * target_rate + GRID_EPS).floor() as usize;
    if n_buckets == 0 {
        return Err(IngestError::RecordingTooShort);
    }

    let mut sums = vec![0.0; n_buckets];
    let mut counts = vec![0u32; n_buckets];
    for (t, v) in rec.timestamps.iter().zip(&rec.values) {
        let b = ((t - t0) * target_rate + GRID_EPS).floor();
        if b >= 0.0 && (b as usize) < n_buckets {
            sums[b as usize] += v;
            counts[b as usize] += 1;
        }
    }

    let filled: Vec<usize> = (0..n_buckets).filter(|&j| counts[j] > 0).collect();
    let mut values: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / f64::from(c) } else { f64::NAN })
        .collect();
    let (&first, &last) = filled
        .first()
        .zip(filled.last())
        .ok_or(IngestError::EmptyRecording)?;
    for v in &mut values[..first] {
        *v = values_at(&sums, &counts, first);
    }
    for v in &mut values[last + 1..] {
        *v = values_at(&sums, &counts, last);
    }
    for pair in filled.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a > 1 {
            let (va, vb) = (values[a], values[b]);
            for j in a + 1..b {
                let w = (j - a) as f64 / (b - a) as f64;
                values[j] = va + w * (vb - va);
            }
        }
    }

    let timestamps = (0..n_buckets)
        .map(|j| t0 + (j as f64 + 0.5) / target_rate)
        .collect();
    Ok(TimeSeriesRecording {
        channel: rec.channel.clone(),
        timestamps,
        values,
        nominal_rate: target_rate,
        unit: rec.unit,
        dropped_rows: rec.dropped_rows,
        support: Some(BucketSupport {
            counts,
            source_rate: rec.nominal_rate,
        }),
    })
}

fn values_at(sums: &[f64], counts: &[u32], j: usize) -> f64 {
    sums[j] / f64::from(counts[j])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Background,
    Prestimulus,
    Stimulus,
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Background => "background",
            Window::Prestimulus => "prestimulus",
            Window::Stimulus => "stimulus",
        })
    }
}

/// Raw-sample coverage of one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCoverage {
    /// Fraction of the expected raw samples that were present (capped at 1).
    pub fraction: f64,
    /// Whether the downsampled grid spans the whole window.
    pub grid_complete: bool,
}

impl WindowCoverage {
    pub const FULL: WindowCoverage = WindowCoverage {
        fraction: 1.0,
        grid_complete: true,
    };

    fn ok(&self, min_coverage: f64) -> bool {
        self.grid_complete && self.fraction >= min_coverage
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub background: WindowCoverage,
    pub prestimulus: WindowCoverage,
    pub stimulus: WindowCoverage,
}

impl CoverageReport {
    pub const FULL: CoverageReport = CoverageReport {
        background: WindowCoverage::FULL,
        prestimulus: WindowCoverage::FULL,
        stimulus: WindowCoverage::FULL,
    };

    pub fn windows(&self) -> [(Window, WindowCoverage); 3] {
        [
            (Window::Background, self.background),
            (Window::Prestimulus, self.prestimulus),
            (Window::Stimulus, self.stimulus),
        ]
    }

    /// Windows whose coverage falls below `min_coverage` (boundary inclusive
    /// on the accepting side).
    pub fn failing(&self, min_coverage: f64) -> Vec<Window> {
        self.windows()
            .into_iter()
            .filter(|(_, c)| !c.ok(min_coverage))
            .map(|(w, _)| w)
            .collect()
    }
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .windows()
            .iter()
            .map(|(w, c)| {
                format!(
                    "{w}={:.1}%{}",
                    100.0 * c.fraction,
                    if c.grid_complete {
                        ""
                    } else {
                        " (outside recording)"
                    }
                )
            })
            .collect();
        f.write_str(&parts.join(", "))
    }
}

/// The three aligned windows of one exposition on one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceTriple {
    pub exposition_id: String,
    pub channel: ChannelId,
    pub stimulus: Vec<f64>,
    pub prestimulus: Vec<f64>,
    pub background: Vec<f64>,
    pub rate: f64,
    pub coverage: CoverageReport,
}

fn cut_window(
    rec: &TimeSeriesRecording,
    (start, _end): (f64, f64),
    len: usize,
) -> (Option<Vec<f64>>, WindowCoverage) {
    let rate = rec.nominal_rate;
    let t0 = rec.timestamps[0];
    // First grid point whose midpoint lies at or after `start`.
    let first = ((start - t0) * rate - GRID_EPS).ceil();
    let n = rec.len() as isize;
    let lo = first as isize;
    let hi = lo + len as isize;
    let grid_complete = lo >= 0 && hi <= n;

    let (support, source_rate) = match &rec.support {
        Some(s) => (Some(&s.counts), s.source_rate),
        None => (None, rate),
    };
    let clamp = |i: isize| i.clamp(0, n) as usize;
    let present: u64 = match support {
        Some(counts) => counts[clamp(lo)..clamp(hi)]
            .iter()
            .map(|&c| u64::from(c))
            .sum(),
        None => (clamp(hi) - clamp(lo)) as u64,
    };
    let expected = len as f64 / rate * source_rate;
    let fraction = (present as f64 / expected).min(1.0);
    let slice = grid_complete.then(|| rec.values[lo as usize..hi as usize].to_vec());
    (
        slice,
        WindowCoverage {
            fraction,
            grid_complete,
        },
    )
}

/// Cut the background, pre-stimulus and stimulus windows from a downsampled
/// recording. Fails when any window leaves the recording or holds less than
/// half of its expected raw samples.
pub fn slice_exposition(
    rec: &TimeSeriesRecording,
    manifest: &ExpositionManifest,
) -> Result<SliceTriple> {
    slice_exposition_with(rec, manifest, DEFAULT_MIN_COVERAGE)
}

pub fn slice_exposition_with(
    rec: &TimeSeriesRecording,
    manifest: &ExpositionManifest,
    min_coverage: f64,
) -> Result<SliceTriple> {
    manifest.validate()?;
    if rec.is_empty() {
        return Err(IngestError::EmptyRecording);
    }
    let len = (manifest.stimulus_duration * rec.nominal_rate).round() as usize;
    let (bg, bg_cov) = cut_window(rec, manifest.background_window(), len);
    let (pre, pre_cov) = cut_window(rec, manifest.prestimulus_window(), len);
    let (stim, stim_cov) = cut_window(rec, manifest.stimulus_window(), len);
    let coverage = CoverageReport {
        background: bg_cov,
        prestimulus: pre_cov,
        stimulus: stim_cov,
    };
    match (bg, pre, stim) {
        (Some(background), Some(prestimulus), Some(stimulus))
            if coverage.failing(min_coverage).is_empty() =>
        {
            Ok(SliceTriple {
                exposition_id: manifest.exposition_id.clone(),
                channel: rec.channel.clone(),
                stimulus,
                prestimulus,
                background,
                rate: rec.nominal_rate,
                coverage,
            })
        }
        _ => Err(IngestError::InsufficientCoverage(coverage)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validation {
    Accept,
    Reject(Vec<Window>),
}

impl Validation {
    pub fn is_accept(&self) -> bool {
        matches!(self, Validation::Accept)
    }
}

/// Reject iff any window had less than `min_coverage` of its expected raw samples.
pub fn validate_exposition(triple: &SliceTriple, min_coverage: f64) -> Validation {
    let failing = triple.coverage.failing(min_coverage);
    if failing.is_empty() {
        Validation::Accept
    } else {
        Validation::Reject(failing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub clip_limit_mv: f64,
    pub median_window: usize,
    pub target_rate: f64,
    pub min_coverage: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            clip_limit_mv: DEFAULT_CLIP_LIMIT_MV,
            median_window: DEFAULT_MEDIAN_WINDOW,
            target_rate: DEFAULT_TARGET_RATE,
            min_coverage: DEFAULT_MIN_COVERAGE,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessStats {
    pub dropped_rows: usize,
    pub clipped: usize,
}

/// Full chain from a raw recording to a validated slice triple.
pub fn prepare_triple(
    raw: &TimeSeriesRecording,
    manifest: &ExpositionManifest,
    cfg: &PreprocessConfig,
) -> Result<(SliceTriple, PreprocessStats)> {
    let mv = to_millivolts(raw, manifest.gain, manifest.offset)?;
    let (clipped, removed) = clip_invalid(&mv, cfg.clip_limit_mv)?;
    let smoothed = rolling_median(&clipped, cfg.median_window)?;
    let down = downsample(&smoothed, cfg.target_rate)?;
    let triple = slice_exposition_with(&down, manifest, cfg.min_coverage)?;
    Ok((
        triple,
        PreprocessStats {
            dropped_rows: raw.dropped_rows,
            clipped: removed,
        },
    ))
}

/// Load one channel of an exposition from disk and run the full chain.
pub fn load_triple(
    manifest: &ExpositionManifest,
    channel: &ChannelId,
    cfg: &PreprocessConfig,
) -> Result<(SliceTriple, PreprocessStats)> {
    let path = manifest.channel_path(channel)?;
    let raw = load_recording(&path, channel.clone(), manifest)?;
    prepare_triple(&raw, manifest, cfg)
}
