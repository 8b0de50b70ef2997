//! Seeded synthetic stimulus experiments in the on-disk ingest format.
//!
//! Each exposition is a two-channel recording made of a mean-reverting
//! random walk, a slow sinusoidal drift, a per-plant offset, white noise and
//! rare out-of-range spikes. During the stimulus window a double-exponential
//! bump is added whose size scales with `response_strength`.

use std::f64::consts::TAU;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ChannelId, ExpositionManifest, TimeSeriesRecording, Unit};
use crate::seed::{self, Rng};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

pub type Result<T> = std::result::Result<T, DatagenError>;

fn io_error(path: &Path, source: io::Error) -> DatagenError {
    DatagenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_plants: usize,
    pub expositions_per_plant: usize,
    pub sampling_rate: f64,
    pub drift_amplitude_mv: f64,
    pub drift_period_s: f64,
    /// Stationary standard deviation of the mean-reverting walk.
    pub walk_std_mv: f64,
    /// Reversion time constant of the walk.
    pub walk_tau_s: f64,
    /// Standard deviation of the constant per-plant, per-channel offset.
    pub offset_spread_mv: f64,
    /// Stem response amplitude before the bump shape is applied.
    pub response_amplitude_mv: f64,
    /// Per-plant amplitude factor is drawn from `1 ± amplitude_jitter`.
    pub amplitude_jitter: f64,
    /// Flip the response sign on every other plant.
    pub alternate_polarity: bool,
    pub rise_time_s: f64,
    pub decay_time_s: f64,
    /// Leaf response relative to stem response.
    pub leaf_factor: f64,
    pub noise_std_mv: f64,
    /// Expected spikes per second.
    pub artifact_rate_hz: f64,
    pub artifact_amplitude_mv: f64,
    pub response_strength: f64,
    /// Recording start relative to stimulus onset.
    pub pre_onset_s: f64,
    /// Recording end relative to stimulus onset.
    pub post_onset_s: f64,
    pub stimulus_duration_s: f64,
    pub gain_mv_per_count: f64,
    pub epoch_start_s: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_plants: 4,
            expositions_per_plant: 20,
            sampling_rate: 300.0,
            drift_amplitude_mv: 1.0,
            drift_period_s: 600.0,
            walk_std_mv: 1.0,
            walk_tau_s: 20.0,
            offset_spread_mv: 20.0,
            response_amplitude_mv: 4.0,
            amplitude_jitter: 0.3,
            alternate_polarity: true,
            rise_time_s: 60.0,
            decay_time_s: 300.0,
            leaf_factor: 1.5,
            noise_std_mv: 0.5,
            artifact_rate_hz: 1.0 / 300.0,
            artifact_amplitude_mv: 500.0,
            response_strength: 1.0,
            pre_onset_s: 1260.0,
            post_onset_s: 660.0,
            stimulus_duration_s: 600.0,
            gain_mv_per_count: 0.001,
            epoch_start_s: 1_700_000_000.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DatagenError::InvalidConfig(m));
        if self.n_plants == 0 || self.expositions_per_plant == 0 {
            return bad("n_plants and expositions_per_plant must be >= 1".into());
        }
        let magnitudes = [
            ("drift_amplitude_mv", self.drift_amplitude_mv),
            ("walk_std_mv", self.walk_std_mv),
            ("walk_tau_s", self.walk_tau_s),
            ("offset_spread_mv", self.offset_spread_mv),
            ("response_amplitude_mv", self.response_amplitude_mv),
            ("amplitude_jitter", self.amplitude_jitter),
            ("leaf_factor", self.leaf_factor),
            ("noise_std_mv", self.noise_std_mv),
            ("artifact_rate_hz", self.artifact_rate_hz),
            ("artifact_amplitude_mv", self.artifact_amplitude_mv),
        ];
        for (name, v) in magnitudes {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        let positive = [
            ("sampling_rate", self.sampling_rate),
            ("drift_period_s", self.drift_period_s),
            ("rise_time_s", self.rise_time_s),
            ("decay_time_s", self.decay_time_s),
            ("stimulus_duration_s", self.stimulus_duration_s),
            ("gain_mv_per_count", self.gain_mv_per_count),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.response_strength) {
            return bad(format!(
                "response_strength must lie in [0, 1], got {}",
                self.response_strength
            ));
        }
        if self.amplitude_jitter > 1.0 {
            return bad("amplitude_jitter must be <= 1".into());
        }
        if !(self.pre_onset_s >= 2.0 * self.stimulus_duration_s) {
            return bad("pre_onset_s must cover the background and pre-stimulus windows".into());
        }
        if !(self.post_onset_s >= self.stimulus_duration_s) {
            return bad("post_onset_s must cover the stimulus window".into());
        }
        if self.pre_onset_s + self.post_onset_s < 1800.0 {
            return bad("recordings must span at least 30 minutes".into());
        }
        if !self.epoch_start_s.is_finite() || self.epoch_start_s < 0.0 {
            return bad("epoch_start_s must be finite and >= 0".into());
        }
        Ok(())
    }

    fn n_samples(&self) -> usize {
        ((self.pre_onset_s + self.post_onset_s) * self.sampling_rate).round() as usize
    }

    /// Time between the starts of consecutive recordings.
    fn spacing_s(&self) -> f64 {
        (self.pre_onset_s + self.post_onset_s).ceil() + 3600.0
    }
}

/// One generated exposition with raw integer counts per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthExposition {
    pub manifest: ExpositionManifest,
    pub start_us: i64,
    pub rate: f64,
    pub leaf: Vec<i64>,
    pub stem: Vec<i64>,
}

impl SynthExposition {
    pub fn timestamp_us(&self, i: usize) -> i64 {
        self.start_us + (i as f64 * 1e6 / self.rate).round() as i64
    }

    fn counts(&self, channel: &ChannelId) -> &[i64] {
        match channel {
            ChannelId::Stem => &self.stem,
            _ => &self.leaf,
        }
    }

    /// Raw recording as ingest would parse it from the written CSV.
    pub fn recording(&self, channel: &ChannelId) -> TimeSeriesRecording {
        let counts = self.counts(channel);
        let timestamps = (0..counts.len())
            .map(|i| self.timestamp_us(i) as f64 / 1e6)
            .collect();
        let values = counts.iter().map(|&c| c as f64).collect();
        TimeSeriesRecording::new(channel.clone(), timestamps, values, self.rate, Unit::Raw)
            .expect("generated timestamps increase")
    }

    /// `timestamp,value` CSV with six-decimal timestamps.
    pub fn write_csv<W: Write>(&self, channel: &ChannelId, mut w: W) -> io::Result<()> {
        let counts = self.counts(channel);
        let mut buf = Vec::with_capacity(counts.len() * 28 + 16);
        let mut fmt = itoa::Buffer::new();
        buf.extend_from_slice(b"timestamp,value\n");
        for (i, &c) in counts.iter().enumerate() {
            let t = self.timestamp_us(i);
            buf.extend_from_slice(fmt.format(t.div_euclid(1_000_000)).as_bytes());
            buf.push(b'.');
            let frac = t.rem_euclid(1_000_000);
            let digits = fmt.format(frac).as_bytes();
            buf.extend(std::iter::repeat(b'0').take(6 - digits.len()));
            buf.extend_from_slice(digits);
            buf.push(b',');
            buf.extend_from_slice(fmt.format(c).as_bytes());
            buf.push(b'\n');
        }
        w.write_all(&buf)?;
        w.flush()
    }
}

pub fn plant_id(plant: usize) -> String {
    format!("plant{}", plant + 1)
}

pub fn exposition_id(plant: usize, exposition: usize) -> String {
    format!("plant{}_exp{:03}", plant + 1, exposition + 1)
}

struct PlantTraits {
    offset_leaf: f64,
    offset_stem: f64,
    /// Signed amplitude factor including polarity.
    amplitude: f64,
}

fn plant_traits(cfg: &SynthConfig, plant: usize) -> PlantTraits {
    let mut rng = seed::rng(seed::derive_index(
        seed::derive(cfg.seed, "plant"),
        plant as u64,
    ));
    let offset_leaf = cfg.offset_spread_mv * rng.sample::<f64, _>(StandardNormal);
    let offset_stem = cfg.offset_spread_mv * rng.sample::<f64, _>(StandardNormal);
    let jitter = 1.0 + cfg.amplitude_jitter * rng.gen_range(-1.0..=1.0);
    let sign = if cfg.alternate_polarity && plant % 2 == 1 {
        -1.0
    } else {
        1.0
    };
    PlantTraits {
        offset_leaf,
        offset_stem,
        amplitude: sign * jitter,
    }
}

/// Response bump at `t` seconds after onset, before amplitude scaling.
fn bump(cfg: &SynthConfig, t: f64) -> f64 {
    if t < 0.0 || t > cfg.stimulus_duration_s {
        return 0.0;
    }
    (1.0 - (-t / cfg.rise_time_s).exp()) * (-t / cfg.decay_time_s).exp()
}

fn channel_counts(cfg: &SynthConfig, offset: f64, response: f64, mut rng: Rng) -> Vec<i64> {
    let n = cfg.n_samples();
    let dt = 1.0 / cfg.sampling_rate;
    let phase = rng.gen_range(0.0..TAU);
    let a = if cfg.walk_tau_s > 0.0 {
        (-dt / cfg.walk_tau_s).exp()
    } else {
        0.0
    };
    let innovation = cfg.walk_std_mv * (1.0 - a * a).sqrt();
    let mut walk = cfg.walk_std_mv * rng.sample::<f64, _>(StandardNormal);
    let spike_p = cfg.artifact_rate_hz * dt;
    (0..n)
        .map(|i| {
            let t = i as f64 * dt - cfg.pre_onset_s;
            let drift = cfg.drift_amplitude_mv * (TAU * t / cfg.drift_period_s + phase).sin();
            let noise = cfg.noise_std_mv * rng.sample::<f64, _>(StandardNormal);
            let spike_draw: f64 = rng.gen();
            let spike = if spike_draw < spike_p {
                if rng.gen::<bool>() {
                    cfg.artifact_amplitude_mv
                } else {
                    -cfg.artifact_amplitude_mv
                }
            } else {
                0.0
            };
            let mv = offset + drift + walk + noise + spike + response * bump(cfg, t);
            walk = a * walk + innovation * rng.sample::<f64, _>(StandardNormal);
            (mv / cfg.gain_mv_per_count).round() as i64
        })
        .collect()
}

/// Generate exposition `exposition` of plant `plant`.
pub fn generate_exposition(
    cfg: &SynthConfig,
    plant: usize,
    exposition: usize,
) -> Result<SynthExposition> {
    cfg.validate()?;
    let traits = plant_traits(cfg, plant);
    let index = (plant * cfg.expositions_per_plant + exposition) as f64;
    let start_s = cfg.epoch_start_s + index * cfg.spacing_s();
    let onset = start_s + cfg.pre_onset_s;
    let expo_seed = seed::derive_index(
        seed::derive_index(seed::derive(cfg.seed, "exposition"), plant as u64),
        exposition as u64,
    );
    let stem_response = cfg.response_strength * cfg.response_amplitude_mv * traits.amplitude;
    let leaf = channel_counts(
        cfg,
        traits.offset_leaf,
        cfg.leaf_factor * stem_response,
        seed::rng_for(expo_seed, "leaf"),
    );
    let stem = channel_counts(
        cfg,
        traits.offset_stem,
        stem_response,
        seed::rng_for(expo_seed, "stem"),
    );
    let manifest = ExpositionManifest {
        plant_id: plant_id(plant),
        exposition_id: exposition_id(plant, exposition),
        stimulus_onset: onset,
        stimulus_duration: cfg.stimulus_duration_s,
        channels: [
            ("leaf".to_string(), PathBuf::from("leaf.csv")),
            ("stem".to_string(), PathBuf::from("stem.csv")),
        ]
        .into_iter()
        .collect(),
        gain: cfg.gain_mv_per_count,
        offset: 0.0,
        nominal_rate: Some(cfg.sampling_rate),
        base_dir: None,
    };
    Ok(SynthExposition {
        manifest,
        start_us: (start_s * 1e6).round() as i64,
        rate: cfg.sampling_rate,
        leaf,
        stem,
    })
}

/// Every exposition in plant-major order. Holds all recordings in memory;
/// prefer [`write_dataset`] at full scale.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthExposition>> {
    cfg.validate()?;
    (0..cfg.n_plants)
        .flat_map(|p| (0..cfg.expositions_per_plant).map(move |e| (p, e)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(p, e)| generate_exposition(cfg, p, e))
        .collect()
}

/// Write `synth_config.json` and `expositions/<id>/{manifest.json,leaf.csv,stem.csv}`
/// under `dir`. Returns the manifest paths in plant-major order.
pub fn write_dataset(cfg: &SynthConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let config_path = dir.join("synth_config.json");
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    fs::write(&config_path, text + "\n").map_err(|e| io_error(&config_path, e))?;

    let pairs: Vec<(usize, usize)> = (0..cfg.n_plants)
        .flat_map(|p| (0..cfg.expositions_per_plant).map(move |e| (p, e)))
        .collect();
    pairs
        .into_par_iter()
        .map(|(p, e)| {
            let x = generate_exposition(cfg, p, e)?;
            let expo_dir = dir.join("expositions").join(&x.manifest.exposition_id);
            fs::create_dir_all(&expo_dir).map_err(|err| io_error(&expo_dir, err))?;
            for ch in [ChannelId::Leaf, ChannelId::Stem] {
                let path = expo_dir.join(format!("{}.csv", ch.as_str()));
                let file = fs::File::create(&path).map_err(|err| io_error(&path, err))?;
                x.write_csv(&ch, file).map_err(|err| io_error(&path, err))?;
            }
            let manifest_path = expo_dir.join("manifest.json");
            x.manifest.write(&manifest_path).map_err(|err| {
                io_error(
                    &manifest_path,
                    io::Error::new(io::ErrorKind::Other, err.to_string()),
                )
            })?;
            Ok(manifest_path)
        })
        .collect()
}
