use phytosense::datagen::{self, DatagenError, SynthConfig};
use phytosense::eval::{self, EvalConfig};
use phytosense::features::{self, FeatureMatrix, Provenance};
use phytosense::ingest::{self, ChannelId, ExpositionManifest, PreprocessConfig};
use phytosense::models::{Classifier, MaxFeatures, PipelineSpec, Preprocessor};

/// Small and slow-sampled so that whole datasets fit in a unit test.
fn small(strength: f64) -> SynthConfig {
    SynthConfig {
        n_plants: 2,
        expositions_per_plant: 8,
        sampling_rate: 10.0,
        response_strength: strength,
        seed: 3,
        ..SynthConfig::default()
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        SynthConfig {
            response_strength: 1.5,
            ..SynthConfig::default()
        },
        SynthConfig {
            sampling_rate: 0.0,
            ..SynthConfig::default()
        },
        SynthConfig {
            noise_std_mv: -1.0,
            ..SynthConfig::default()
        },
        SynthConfig {
            n_plants: 0,
            ..SynthConfig::default()
        },
        SynthConfig {
            pre_onset_s: 100.0,
            ..SynthConfig::default()
        },
    ];
    for cfg in bad {
        assert!(
            matches!(cfg.validate(), Err(DatagenError::InvalidConfig(_))),
            "{cfg:?}"
        );
    }
    assert!(SynthConfig::default().validate().is_ok());
}

#[test]
fn recordings_cover_thirty_minutes_and_are_deterministic() {
    let cfg = small(1.0);
    let a = datagen::generate_exposition(&cfg, 1, 2).unwrap();
    let b = datagen::generate_exposition(&cfg, 1, 2).unwrap();
    assert_eq!(a, b);
    let leaf = a.recording(&ChannelId::Leaf);
    assert!(leaf.duration() >= 30.0 * 60.0);
    assert_eq!(leaf.nominal_rate, 10.0);
    let t0 = leaf.timestamps[0];
    assert!(t0 <= a.manifest.background_window().0);
    assert!(*leaf.timestamps.last().unwrap() >= a.manifest.stimulus_window().1);
    assert!(leaf.values.iter().all(|v| v.fract() == 0.0));
    assert_ne!(a, datagen::generate_exposition(&cfg, 1, 3).unwrap());
}

#[test]
fn noiseless_response_moves_stimulus_mean() {
    let cfg = SynthConfig {
        noise_std_mv: 0.0,
        walk_std_mv: 0.0,
        artifact_rate_hz: 0.0,
        ..small(1.0)
    };
    for plant in 0..cfg.n_plants {
        for e in 0..cfg.expositions_per_plant {
            let x = datagen::generate_exposition(&cfg, plant, e).unwrap();
            for ch in [ChannelId::Leaf, ChannelId::Stem] {
                let (t, _) = ingest::prepare_triple(
                    &x.recording(&ch),
                    &x.manifest,
                    &PreprocessConfig::default(),
                )
                .unwrap();
                let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
                assert!((mean(&t.stimulus) - mean(&t.prestimulus)).abs() > 0.1);
            }
        }
    }
}

#[test]
fn leaf_response_is_larger_than_stem() {
    let cfg = SynthConfig {
        noise_std_mv: 0.0,
        walk_std_mv: 0.0,
        drift_amplitude_mv: 0.0,
        artifact_rate_hz: 0.0,
        ..small(1.0)
    };
    let x = datagen::generate_exposition(&cfg, 0, 0).unwrap();
    let pc = PreprocessConfig::default();
    let shift = |ch: ChannelId| {
        let (t, _) = ingest::prepare_triple(&x.recording(&ch), &x.manifest, &pc).unwrap();
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        mean(&t.stimulus) - mean(&t.prestimulus)
    };
    let ratio = shift(ChannelId::Leaf) / shift(ChannelId::Stem);
    assert!((ratio - 1.5).abs() < 0.01, "{ratio}");
}

#[test]
fn offsets_cancel_after_background_subtraction() {
    let base = SynthConfig {
        offset_spread_mv: 0.0,
        ..small(1.0)
    };
    let shifted = SynthConfig {
        offset_spread_mv: 40.0,
        ..small(1.0)
    };
    let pc = PreprocessConfig::default();
    let mean_idx = features::feature_names()
        .iter()
        .position(|n| n == "mean")
        .unwrap();
    for e in 0..3 {
        let a = datagen::generate_exposition(&base, 1, e).unwrap();
        let b = datagen::generate_exposition(&shifted, 1, e).unwrap();
        let fa = |x: &datagen::SynthExposition| {
            let (t, _) =
                ingest::prepare_triple(&x.recording(&ChannelId::Leaf), &x.manifest, &pc).unwrap();
            features::extract_with_background(&t, true).unwrap().values[mean_idx]
        };
        // integer quantization of the raw counts is the only difference
        assert!((fa(&a) - fa(&b)).abs() < 1e-2);
    }
}

#[test]
fn written_dataset_round_trips_through_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_plants: 1,
        expositions_per_plant: 2,
        ..small(1.0)
    };
    let manifests = datagen::write_dataset(&cfg, dir.path()).unwrap();
    assert_eq!(manifests.len(), 2);
    for path in &manifests {
        let m = ExpositionManifest::from_path(path).unwrap();
        for ch in [ChannelId::Leaf, ChannelId::Stem] {
            let (t, stats) = ingest::load_triple(&m, &ch, &PreprocessConfig::default()).unwrap();
            assert_eq!(stats.dropped_rows, 0);
            assert_eq!(t.stimulus.len(), 1200);
        }
    }
    // same seed, byte-identical files
    let other = tempfile::tempdir().unwrap();
    datagen::write_dataset(&cfg, other.path()).unwrap();
    for path in &manifests {
        let rel = path.strip_prefix(dir.path()).unwrap();
        let dir_a = path.parent().unwrap();
        let dir_b = other.path().join(rel).parent().unwrap().to_path_buf();
        for f in ["manifest.json", "leaf.csv", "stem.csv"] {
            assert_eq!(
                std::fs::read(dir_a.join(f)).unwrap(),
                std::fs::read(dir_b.join(f)).unwrap()
            );
        }
    }
}

fn combined_matrix(cfg: &SynthConfig) -> FeatureMatrix {
    let pc = PreprocessConfig::default();
    let mut leaf = Vec::new();
    let mut stem = Vec::new();
    for plant in 0..cfg.n_plants {
        for e in 0..cfg.expositions_per_plant {
            let x = datagen::generate_exposition(cfg, plant, e).unwrap();
            for (ch, rows) in [(ChannelId::Leaf, &mut leaf), (ChannelId::Stem, &mut stem)] {
                let (t, _) = ingest::prepare_triple(&x.recording(&ch), &x.manifest, &pc).unwrap();
                rows.extend(features::exposition_samples(&t).unwrap());
            }
        }
    }
    let leaf = FeatureMatrix::from_vectors(&leaf, Provenance::Leaf).unwrap();
    let stem = FeatureMatrix::from_vectors(&stem, Provenance::Stem).unwrap();
    features::combine_channels(&leaf, &stem).unwrap()
}

#[test]
fn auc_does_not_decrease_with_response_strength() {
    let spec = PipelineSpec::new(
        Preprocessor::None,
        Classifier::RandomForest {
            n_trees: 50,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
        },
        0,
    );
    let ecfg = EvalConfig {
        n_runs: 20,
        ..EvalConfig::default()
    };
    let aucs: Vec<f64> = [0.0, 0.5, 1.0]
        .iter()
        .map(|&s| {
            let m = combined_matrix(&small(s));
            eval::repeated_eval_matrix(&spec, &m, &ecfg)
                .unwrap()
                .mean_roc_auc
        })
        .collect();
    assert!(aucs[0] <= aucs[1] && aucs[1] <= aucs[2], "{aucs:?}");
    assert!(aucs[2] >= 0.9, "{aucs:?}");
}
