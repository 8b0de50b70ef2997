use ndarray::Array2;
use phytosense::featsel::{
    best_subset, forward_select, round_splits, running_best_curve, score_subset, BeamSchedule,
    FeatselError, Round, ScoredSet, SelectionConfig, SelectionTrace,
};
use phytosense::features::{FeatureMatrix, Provenance};
use phytosense::models::{Classifier, KnnWeights, PipelineSpec, Preprocessor};
use phytosense::seed;
use rand::Rng;

fn matrix(x: Array2<f64>, y: Vec<u8>) -> FeatureMatrix {
    let ids = (0..y.len()).map(|i| format!("e{i}")).collect();
    let cols = (0..x.ncols()).map(|c| format!("f{c:02}")).collect();
    FeatureMatrix::new(ids, y, cols, x, Provenance::Combined).unwrap()
}

/// Noise columns except `informative`, whose sum decides the label.
fn dataset(n: usize, cols: usize, informative: &[usize], seed_value: u64) -> FeatureMatrix {
    let mut rng = seed::rng(seed_value);
    let x = Array2::from_shape_fn((n, cols), |_| rng.gen_range(-1.0..1.0));
    let y = x
        .rows()
        .into_iter()
        .map(|r| u8::from(informative.iter().map(|&c| r[c]).sum::<f64>() > 0.0))
        .collect();
    matrix(x, y)
}

fn logistic() -> PipelineSpec {
    PipelineSpec::new(Preprocessor::None, Classifier::Logistic { c: 1.0 }, 0)
}

fn knn() -> PipelineSpec {
    PipelineSpec::new(
        Preprocessor::None,
        Classifier::Knn {
            k: 5,
            weights: KnnWeights::Uniform,
        },
        0,
    )
}

fn cfg(n_runs: usize, max_rounds: Option<usize>) -> SelectionConfig {
    SelectionConfig {
        n_runs,
        max_rounds,
        seed: 11,
        ..SelectionConfig::default()
    }
}

#[test]
fn schedule_validation_and_widths() {
    let s = BeamSchedule::default();
    assert_eq!(s.width_at(1), 10);
    assert_eq!(s.width_at(40), 10);
    assert_eq!(s.width_at(41), 5);
    assert_eq!(s.width_at(100), 5);
    assert_eq!(s.width_at(101), 3);
    assert_eq!(s.width_at(5000), 3);
    assert!(matches!(
        BeamSchedule::new(vec![]),
        Err(FeatselError::InvalidSchedule(_))
    ));
    assert!(matches!(
        BeamSchedule::new(vec![(Some(5), 2), (Some(5), 1), (None, 1)]),
        Err(FeatselError::InvalidSchedule(_))
    ));
    assert!(matches!(
        BeamSchedule::new(vec![(Some(5), 0), (None, 1)]),
        Err(FeatselError::InvalidSchedule(_))
    ));
    assert!(matches!(
        BeamSchedule::new(vec![(Some(5), 2)]),
        Err(FeatselError::InvalidSchedule(_))
    ));
    assert!(BeamSchedule::new(vec![(None, 2)]).is_ok());
}

#[test]
fn single_informative_column_is_picked_first() {
    let m = dataset(80, 3, &[2], 1);
    let trace = forward_select(&m, &logistic(), &BeamSchedule::default(), &cfg(30, None)).unwrap();
    assert_eq!(trace.rounds[0].kept[0].features, vec![2]);
    assert_eq!(trace.rounds.len(), 3);
}

#[test]
fn single_column_matrix_gives_one_round() {
    let m = dataset(40, 1, &[0], 2);
    let trace = forward_select(&m, &logistic(), &BeamSchedule::default(), &cfg(5, None)).unwrap();
    assert_eq!(trace.rounds.len(), 1);
    assert_eq!(trace.rounds[0].kept.len(), 1);
}

#[test]
fn pair_round_matches_exhaustive_oracle() {
    let m = dataset(120, 10, &[3, 7], 3);
    let c = cfg(20, Some(2));
    let spec = logistic();
    let trace = forward_select(&m, &spec, &BeamSchedule::default(), &c).unwrap();
    let first = &trace.rounds[0].kept[0].features;
    assert!(first == &vec![3] || first == &vec![7], "{first:?}");

    let plan = round_splits(&m.labels, 2, &c).unwrap();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for a in 0..10 {
        for b in a + 1..10 {
            let (mean, _) = score_subset(&spec, m.data.view(), &m.labels, &[a, b], &plan);
            if best.as_ref().map_or(true, |(s, _)| mean > *s) {
                best = Some((mean, vec![a, b]));
            }
        }
    }
    let (oracle_score, oracle_set) = best.unwrap();
    assert_eq!(oracle_set, vec![3, 7]);
    let size2 = &trace.rounds[1].kept[0];
    assert_eq!(size2.features, oracle_set);
    assert_eq!(size2.mean, oracle_score);
}

#[test]
fn trace_invariants() {
    let m = dataset(60, 8, &[1, 4], 4);
    let schedule = BeamSchedule::new(vec![(Some(2), 4), (Some(4), 2), (None, 1)]).unwrap();
    let c = cfg(6, None);
    let trace = forward_select(&m, &knn(), &schedule, &c).unwrap();
    assert_eq!(trace.rounds.len(), 8);
    for (k, round) in trace.rounds.iter().enumerate() {
        let size = k + 1;
        assert_eq!(round.size, size);
        let expected = schedule.width_at(size).min(round.n_candidates);
        assert_eq!(round.kept.len(), expected, "size {size}");
        for set in &round.kept {
            assert_eq!(set.features.len(), size);
            assert!(set.features.windows(2).all(|w| w[0] < w[1]));
            assert!(set.mean >= round.max_discarded);
            if k > 0 {
                let parent_ok = trace.rounds[k - 1]
                    .kept
                    .iter()
                    .any(|p| p.features.iter().all(|f| set.features.contains(f)));
                assert!(
                    parent_ok,
                    "size {size} set {:?} has no kept parent",
                    set.features
                );
            }
        }
        assert!(round.kept.windows(2).all(|w| w[0].mean >= w[1].mean));
    }
    let again = forward_select(&m, &knn(), &schedule, &c).unwrap();
    assert_eq!(trace, again);
    assert_eq!(trace.to_csv(), again.to_csv());

    let (names, size, score) = best_subset(&trace).unwrap();
    let max = trace
        .rounds
        .iter()
        .flat_map(|r| r.kept.iter().map(|s| s.mean))
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(score, max);
    assert_eq!(names.len(), size);

    let curve = running_best_curve(&trace).unwrap();
    assert_eq!(curve.len(), trace.rounds.len());
    assert!(curve
        .windows(2)
        .all(|w| w[0].running_max <= w[1].running_max));
    assert!(curve.iter().all(|p| p.mean <= p.running_max));
}

#[test]
fn max_rounds_caps_sizes() {
    let m = dataset(40, 6, &[0], 5);
    let trace = forward_select(&m, &knn(), &BeamSchedule::default(), &cfg(3, Some(2))).unwrap();
    assert_eq!(trace.rounds.len(), 2);
}

fn scored(features: Vec<usize>, mean: f64) -> ScoredSet {
    ScoredSet {
        features,
        mean,
        std: 0.0,
    }
}

fn hand_trace(means: &[f64]) -> SelectionTrace {
    SelectionTrace {
        columns: (0..means.len()).map(|c| format!("c{c}")).collect(),
        rounds: means
            .iter()
            .enumerate()
            .map(|(k, &m)| Round {
                size: k + 1,
                kept: vec![scored((0..=k).collect(), m)],
                n_candidates: 1,
                max_discarded: f64::NEG_INFINITY,
            })
            .collect(),
        spec: logistic(),
        schedule: BeamSchedule::default(),
        config: SelectionConfig::default(),
    }
}

#[test]
fn best_subset_semantics() {
    let rising = hand_trace(&[0.6, 0.7, 0.8]);
    assert_eq!(
        best_subset(&rising).unwrap(),
        (vec!["c0".into(), "c1".into(), "c2".into()], 3, 0.8)
    );
    let peaked = hand_trace(&[0.6, 0.7, 0.7, 0.9, 0.95, 0.9, 0.8]);
    assert_eq!(best_subset(&peaked).unwrap().1, 5);
    // ties prefer the smaller set
    let tied = hand_trace(&[0.6, 0.9, 0.9]);
    assert_eq!(best_subset(&tied).unwrap().1, 2);
    let one = running_best_curve(&hand_trace(&[0.6])).unwrap();
    assert_eq!(one.len(), 1);
    let empty = hand_trace(&[]);
    assert!(matches!(best_subset(&empty), Err(FeatselError::EmptyTrace)));
    assert!(matches!(
        running_best_curve(&empty),
        Err(FeatselError::EmptyTrace)
    ));
}
