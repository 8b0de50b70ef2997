//! Command implementations behind the `phytosense` binary.
//!
//! Each subcommand reads its inputs from disk, writes its artifacts plus a
//! `config.json` echo of the effective arguments into `--out`, and returns a
//! short human-readable summary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use phytosense::automl::{self, Metric, SearchConfig};
use phytosense::datagen::{self, SynthConfig};
use phytosense::eval::{self, EvalConfig};
use phytosense::featsel::{self, BeamSchedule, SelectionConfig};
use phytosense::features::{self, FeatureMatrix, FeatureVector, Provenance};
use phytosense::ingest::{self, ChannelId, ExpositionManifest, IngestError, PreprocessConfig};
use phytosense::models::PipelineSpec;

/// Bad arguments, unreadable configuration or missing inputs (exit code 2).
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        2
    } else {
        1
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "phytosense",
    version,
    about = "Plant electrophysiology stimulus classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic recording corpus.
    Synth(SynthArgs),
    /// Preprocess recordings and build feature matrices.
    Extract(ExtractArgs),
    /// Search preprocessor/classifier pipelines.
    Automl(AutomlArgs),
    /// Beam forward feature selection.
    Select(SelectArgs),
    /// Evaluate a fixed pipeline.
    Eval(EvalArgs),
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Extract(a) => extract(&a),
        Command::Automl(a) => run_automl(&a),
        Command::Select(a) => select(&a),
        Command::Eval(a) => run_eval(&a),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Leaf,
    Stem,
    Combined,
}

impl Dataset {
    fn provenance(self) -> Provenance {
        match self {
            Dataset::Leaf => Provenance::Leaf,
            Dataset::Stem => Provenance::Stem,
            Dataset::Combined => Provenance::Combined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    #[value(name = "roc_auc")]
    RocAuc,
    Accuracy,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::RocAuc => Metric::RocAuc,
            MetricArg::Accuracy => Metric::Accuracy,
        }
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_config<T: Serialize>(out: &Path, command: &str, args: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Echo<'a, T> {
        command: &'a str,
        version: &'a str,
        args: &'a T,
    }
    let echo = Echo {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    let text = serde_json::to_string_pretty(&echo).context("serializing config")?;
    write_file(&out.join("config.json"), text)
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return usage(format!("input file not found: {}", path.display()));
    }
    Ok(())
}

fn require_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        return usage(format!("input directory not found: {}", path.display()));
    }
    Ok(())
}

fn read_matrix(path: &Path, provenance: Provenance) -> Result<FeatureMatrix> {
    require_file(path)?;
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FeatureMatrix::read_csv(std::io::BufReader::new(file), provenance)
        .with_context(|| format!("reading {}", path.display()))
}

fn read_spec(path: &Path) -> Result<PipelineSpec> {
    require_file(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match PipelineSpec::from_json(&text) {
        Ok(spec) => Ok(spec),
        Err(e) => usage(format!("invalid pipeline spec {}: {e}", path.display())),
    }
}

fn write_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    m.write_csv(std::io::BufWriter::new(file))
        .with_context(|| format!("writing {}", path.display()))
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of the nominal response injected after onset, in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub response_strength: f64,
    /// JSON generator configuration; the flags above override its seed and strength.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub plants: Option<usize>,
    #[arg(long)]
    pub expositions: Option<usize>,
    /// Sampling rate in Hz.
    #[arg(long)]
    pub rate: Option<f64>,
}

pub fn synth(args: &SynthArgs) -> Result<String> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_file(path)?;
            let text = fs::read_to_string(path)?;
            match serde_json::from_str::<SynthConfig>(&text) {
                Ok(c) => c,
                Err(e) => {
                    return usage(format!("invalid generator config {}: {e}", path.display()))
                }
            }
        }
        None => SynthConfig::default(),
    };
    cfg.seed = args.seed;
    cfg.response_strength = args.response_strength;
    if let Some(p) = args.plants {
        cfg.n_plants = p;
    }
    if let Some(e) = args.expositions {
        cfg.expositions_per_plant = e;
    }
    if let Some(r) = args.rate {
        cfg.sampling_rate = r;
    }
    if let Err(e) = cfg.validate() {
        return usage(e.to_string());
    }
    create_out(&args.out)?;
    write_config(&args.out, "synth", args)?;
    let manifests = datagen::write_dataset(&cfg, &args.out)?;
    Ok(format!(
        "wrote {} expositions ({} plants) to {}",
        manifests.len(),
        cfg.n_plants,
        args.out.display()
    ))
}

// ---------------------------------------------------------------- extract

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    /// Directory searched recursively for `manifest.json` files.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of expositions assigned to the analysis set.
    #[arg(long, default_value_t = 0.8)]
    pub split_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    pub min_coverage: f64,
}

#[derive(Debug, Serialize)]
struct ExtractSummary {
    n_manifests: usize,
    n_rejections: usize,
    analysis_expositions: Vec<String>,
    test_expositions: Vec<String>,
    dropped_constant: Vec<(Provenance, Vec<String>)>,
    shapes: Vec<(Provenance, usize, usize)>,
}

/// Data-quality problems that reject one channel of one exposition instead
/// of aborting the run.
fn is_rejection(e: &IngestError) -> bool {
    matches!(
        e,
        IngestError::InsufficientCoverage(_)
            | IngestError::RecordingTooShort
            | IngestError::EmptyAfterClipping
            | IngestError::EmptyRecording
    )
}

fn find_manifests(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.with_context(|| format!("scanning {}", root.display()))?;
        if entry.file_type().is_file() && entry.file_name() == "manifest.json" {
            found.push(entry.into_path());
        }
    }
    found.sort();
    Ok(found)
}

fn split_matrix(m: &FeatureMatrix, analysis: &[String]) -> (FeatureMatrix, FeatureMatrix) {
    let (a, t): (Vec<usize>, Vec<usize>) =
        (0..m.n_rows()).partition(|&i| analysis.binary_search(&m.ids[i]).is_ok());
    (m.select_rows(&a), m.select_rows(&t))
}

pub fn extract(args: &ExtractArgs) -> Result<String> {
    require_dir(&args.input)?;
    if !(args.split_fraction > 0.0 && args.split_fraction < 1.0) {
        return usage("--split-fraction must lie strictly between 0 and 1");
    }
    if !(0.0..=1.0).contains(&args.min_coverage) {
        return usage("--min-coverage must lie in [0, 1]");
    }
    let manifests = find_manifests(&args.input)?;
    if manifests.is_empty() {
        return usage(format!(
            "no manifest.json found under {}",
            args.input.display()
        ));
    }
    create_out(&args.out)?;
    write_config(&args.out, "extract", args)?;

    let pc = PreprocessConfig {
        min_coverage: args.min_coverage,
        ..PreprocessConfig::default()
    };
    let mut leaf_rows: Vec<(FeatureVector, u8)> = Vec::new();
    let mut stem_rows: Vec<(FeatureVector, u8)> = Vec::new();
    let mut rejections = String::from("exposition_id,channel,reason\n");
    let mut n_rejections = 0;
    for path in &manifests {
        let manifest = ExpositionManifest::from_path(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        for (channel, rows) in [
            (ChannelId::Leaf, &mut leaf_rows),
            (ChannelId::Stem, &mut stem_rows),
        ] {
            match ingest::load_triple(&manifest, &channel, &pc) {
                Ok((triple, _)) => {
                    let samples = features::exposition_samples(&triple).with_context(|| {
                        format!(
                            "features for {} {}",
                            manifest.exposition_id,
                            channel.as_str()
                        )
                    })?;
                    rows.extend(samples);
                }
                Err(e) if is_rejection(&e) => {
                    n_rejections += 1;
                    let reason = e.to_string().replace([',', '\n'], ";");
                    rejections.push_str(&format!(
                        "{},{},{reason}\n",
                        manifest.exposition_id,
                        channel.as_str()
                    ));
                }
                Err(e) => {
                    return Err(anyhow::Error::new(e).context(format!(
                        "preprocessing {} channel {}",
                        path.display(),
                        channel.as_str()
                    )))
                }
            }
        }
    }
    write_file(&args.out.join("rejections.csv"), &rejections)?;
    if leaf_rows.is_empty() || stem_rows.is_empty() {
        anyhow::bail!("every exposition was rejected for at least one channel");
    }

    let leaf = FeatureMatrix::from_vectors(&leaf_rows, Provenance::Leaf)?;
    let stem = FeatureMatrix::from_vectors(&stem_rows, Provenance::Stem)?;
    let combined = features::combine_channels(&leaf, &stem)?;
    let (leaf, leaf_dropped) = features::remove_constant(&leaf)?;
    let (stem, stem_dropped) = features::remove_constant(&stem)?;

    let mut ids: Vec<String> = leaf.ids.iter().chain(&stem.ids).cloned().collect();
    ids.sort();
    ids.dedup();
    let (analysis, test) = eval::split_groups(&ids, args.split_fraction, args.seed)
        .context("splitting expositions into analysis and test sets")?;

    let mut split_csv = String::from("exposition_id,set\n");
    for id in &ids {
        let set = if analysis.binary_search(id).is_ok() {
            "analysis"
        } else {
            "test"
        };
        split_csv.push_str(&format!("{id},{set}\n"));
    }
    write_file(&args.out.join("split.csv"), split_csv)?;

    let mut shapes = Vec::new();
    for m in [&leaf, &stem, &combined] {
        let (a, t) = split_matrix(m, &analysis);
        write_matrix(&args.out.join(format!("{}_analysis.csv", m.provenance)), &a)?;
        write_matrix(&args.out.join(format!("{}_test.csv", m.provenance)), &t)?;
        shapes.push((m.provenance, m.n_rows(), m.n_cols()));
    }
    let summary = ExtractSummary {
        n_manifests: manifests.len(),
        n_rejections,
        analysis_expositions: analysis.clone(),
        test_expositions: test.clone(),
        dropped_constant: vec![
            (Provenance::Leaf, leaf_dropped),
            (Provenance::Stem, stem_dropped),
        ],
        shapes,
    };
    write_file(
        &args.out.join("extract_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(format!(
        "{} manifests, {} rejected channels; combined matrix {}x{}; {} analysis / {} test expositions",
        manifests.len(),
        n_rejections,
        combined.n_rows(),
        combined.n_cols(),
        analysis.len(),
        test.len()
    ))
}

// ---------------------------------------------------------------- automl

#[derive(Debug, Args, Serialize)]
pub struct AutomlArgs {
    /// Output directory of `extract`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Dataset::Combined)]
    pub dataset: Dataset,
    #[arg(long, value_enum, default_value_t = MetricArg::RocAuc)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub hpo_steps: usize,
    #[arg(long, default_value_t = 5)]
    pub splits: usize,
    #[arg(long, default_value_t = 0.8)]
    pub split_ratio: f64,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
}

fn analysis_path(input: &Path, dataset: Dataset) -> PathBuf {
    input.join(format!("{}_analysis.csv", dataset.provenance()))
}

pub fn run_automl(args: &AutomlArgs) -> Result<String> {
    let cfg = SearchConfig {
        metric: args.metric.into(),
        n_validation_splits: args.splits,
        split_ratio: args.split_ratio,
        n_hpo_steps: args.hpo_steps,
        seed: args.seed,
        timeout_secs: args.timeout,
    };
    if let Err(e) = cfg.validate() {
        return usage(e.to_string());
    }
    let m = read_matrix(
        &analysis_path(&args.input, args.dataset),
        args.dataset.provenance(),
    )?;
    create_out(&args.out)?;
    write_config(&args.out, "automl", args)?;
    let report = automl::search(&m, &cfg).context("pipeline search")?;
    write_file(&args.out.join("search_log.csv"), report.to_csv())?;
    write_file(&args.out.join("search_summary.json"), report.summary_json())?;
    write_file(&args.out.join("best_spec.json"), report.best_spec.to_json())?;
    Ok(format!(
        "best {} {} = {:.4} over {} candidates{}",
        report.best_spec,
        cfg.metric,
        report.best_score,
        report.log.len(),
        if report.truncated { " (timeout)" } else { "" }
    ))
}

// ---------------------------------------------------------------- select

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline spec JSON, e.g. `best_spec.json` from `automl`.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_enum, default_value_t = Dataset::Combined)]
    pub dataset: Dataset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_runs: usize,
    #[arg(long, default_value_t = 0.8)]
    pub split_ratio: f64,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Beam widths as `max_size:width` pairs, the last one `inf:width`.
    #[arg(long, default_value = "40:10,100:5,inf:3")]
    pub schedule: String,
}

pub fn parse_schedule(text: &str) -> Result<BeamSchedule> {
    let mut steps = Vec::new();
    for part in text.split(',') {
        let Some((limit, width)) = part.trim().split_once(':') else {
            return usage(format!("schedule entry `{part}` is not `max_size:width`"));
        };
        let limit = match limit.trim() {
            "inf" => None,
            l => match l.parse() {
                Ok(v) => Some(v),
                Err(_) => return usage(format!("bad schedule size `{l}`")),
            },
        };
        let Ok(width) = width.trim().parse() else {
            return usage(format!("bad schedule width `{width}`"));
        };
        steps.push((limit, width));
    }
    BeamSchedule::new(steps).or_else(|e| usage(e.to_string()))
}

#[derive(Debug, Serialize)]
struct BestSubset {
    features: Vec<String>,
    size: usize,
    mean_roc_auc: f64,
}

pub fn select(args: &SelectArgs) -> Result<String> {
    let schedule = parse_schedule(&args.schedule)?;
    if args.n_runs == 0 {
        return usage("--n-runs must be >= 1");
    }
    if !(args.split_ratio > 0.0 && args.split_ratio < 1.0) {
        return usage("--split-ratio must lie strictly between 0 and 1");
    }
    let spec = read_spec(&args.spec)?;
    let m = read_matrix(
        &analysis_path(&args.input, args.dataset),
        args.dataset.provenance(),
    )?;
    create_out(&args.out)?;
    write_config(&args.out, "select", args)?;
    let cfg = SelectionConfig {
        n_runs: args.n_runs,
        split_ratio: args.split_ratio,
        seed: args.seed,
        max_rounds: args.max_rounds,
    };
    let trace = featsel::forward_select(&m, &spec, &schedule, &cfg).context("feature selection")?;
    let curve = featsel::running_best_curve(&trace)?;
    let (names, size, score) = featsel::best_subset(&trace)?;
    write_file(&args.out.join("selection_trace.csv"), trace.to_csv())?;
    write_file(
        &args.out.join("selection_curve.csv"),
        featsel::curve_csv(&curve),
    )?;
    let best = BestSubset {
        features: names,
        size,
        mean_roc_auc: score,
    };
    write_file(
        &args.out.join("best_subset.json"),
        serde_json::to_string_pretty(&best)?,
    )?;
    Ok(format!(
        "best subset of {size} features, mean ROC AUC {score:.4}"
    ))
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    Repeated,
    Holdout,
    LearningCurve,
    Baseline,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline spec JSON; not used by `baseline`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Dataset::Combined)]
    pub dataset: Dataset,
    /// Restrict to a feature subset (`best_subset.json` from `select`).
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub n_runs: usize,
    #[arg(long, default_value_t = 0.8)]
    pub split_ratio: f64,
    /// Comma-separated training sizes for `learning-curve`.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Deserialize)]
struct SubsetFile {
    features: Vec<String>,
}

fn restrict(m: &FeatureMatrix, names: &[String]) -> Result<FeatureMatrix> {
    let mut idx = Vec::with_capacity(names.len());
    for n in names {
        match m.column_index(n) {
            Some(i) => idx.push(i),
            None => return usage(format!("feature `{n}` is not a column of the matrix")),
        }
    }
    Ok(m.select_columns(&idx))
}

/// The scalar fed to the threshold baseline: the background-subtracted mean
/// potential, averaged over both channels for the combined matrix.
pub fn baseline_scalar(m: &FeatureMatrix) -> Result<Vec<f64>> {
    let names: &[&str] = match m.provenance {
        Provenance::Combined => &["leaf__mean", "stem__mean"],
        _ => &["mean"],
    };
    let mut cols = Vec::new();
    for n in names {
        match m.column_index(n) {
            Some(c) => cols.push(c),
            None => anyhow::bail!("baseline needs column `{n}`, which is missing"),
        }
    }
    Ok((0..m.n_rows())
        .map(|r| cols.iter().map(|&c| m.data[[r, c]]).sum::<f64>() / cols.len() as f64)
        .collect())
}

fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let grid: std::result::Result<Vec<usize>, _> =
        text.split(',').map(|p| p.trim().parse::<usize>()).collect();
    match grid {
        Ok(g) if !g.is_empty() && g.iter().all(|&v| v >= 2) => Ok(g),
        _ => usage(format!(
            "--grid `{text}` must be comma-separated sizes >= 2"
        )),
    }
}

pub fn run_eval(args: &EvalArgs) -> Result<String> {
    if args.n_runs == 0 {
        return usage("--n-runs must be >= 1");
    }
    if !(args.split_ratio > 0.0 && args.split_ratio < 1.0) {
        return usage("--split-ratio must lie strictly between 0 and 1");
    }
    let spec = match (&args.spec, args.mode) {
        (Some(path), _) => Some(read_spec(path)?),
        (None, EvalMode::Baseline) => None,
        (None, _) => return usage("--spec is required for this mode"),
    };
    let grid = match (&args.grid, args.mode) {
        (Some(g), EvalMode::LearningCurve) => Some(parse_grid(g)?),
        (None, EvalMode::LearningCurve) => return usage("--grid is required for learning-curve"),
        _ => None,
    };
    let subset = match &args.features {
        Some(path) => {
            require_file(path)?;
            let text = fs::read_to_string(path)?;
            match serde_json::from_str::<SubsetFile>(&text) {
                Ok(s) => Some(s.features),
                Err(e) => return usage(format!("invalid feature subset {}: {e}", path.display())),
            }
        }
        None => None,
    };
    let prov = args.dataset.provenance();
    let mut analysis = read_matrix(&analysis_path(&args.input, args.dataset), prov)?;
    let test_path = args.input.join(format!("{prov}_test.csv"));
    let mut test = if args.mode == EvalMode::Holdout {
        Some(read_matrix(&test_path, prov)?)
    } else {
        None
    };
    if let Some(names) = &subset {
        if args.mode == EvalMode::Baseline {
            return usage("--features cannot be combined with the baseline mode");
        }
        analysis = restrict(&analysis, names)?;
        test = test.map(|t| restrict(&t, names)).transpose()?;
    }
    create_out(&args.out)?;
    write_config(&args.out, "eval", args)?;
    let cfg = EvalConfig {
        n_runs: args.n_runs,
        train_ratio: args.split_ratio,
        seed: args.seed,
        ..EvalConfig::default()
    };
    match args.mode {
        EvalMode::Repeated | EvalMode::Holdout => {
            let spec = spec.expect("checked above");
            let report = match test {
                Some(t) => eval::holdout_eval(&spec, &analysis, &t, args.n_runs, args.seed),
                None => eval::repeated_eval_matrix(&spec, &analysis, &cfg),
            }
            .context("evaluation")?;
            write_file(&args.out.join("summary.csv"), report.summary_csv())?;
            write_file(&args.out.join("roc_curve.csv"), report.curve_csv())?;
            Ok(format!(
                "ROC AUC {:.4} ± {:.4}, accuracy {:.4} ± {:.4} over {} runs",
                report.mean_roc_auc,
                report.std_roc_auc,
                report.mean_accuracy,
                report.std_accuracy,
                report.n_runs
            ))
        }
        EvalMode::LearningCurve => {
            let spec = spec.expect("checked above");
            let grid = grid.expect("checked above");
            let curve =
                eval::learning_curve(&spec, analysis.data.view(), &analysis.labels, &grid, &cfg)
                    .context("learning curve")?;
            write_file(&args.out.join("learning_curve.csv"), curve.to_csv())?;
            Ok(format!("learning curve with {} points", curve.points.len()))
        }
        EvalMode::Baseline => {
            let values = baseline_scalar(&analysis)?;
            let report =
                eval::threshold_baseline(&values, &analysis.labels, &cfg).context("baseline")?;
            write_file(&args.out.join("baseline.csv"), report.summary_csv())?;
            Ok(format!(
                "threshold baseline accuracy {:.4} ± {:.4}",
                report.mean_accuracy, report.std_accuracy
            ))
        }
    }
}
