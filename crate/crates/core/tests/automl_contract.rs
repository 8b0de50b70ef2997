use ndarray::Array2;
use phytosense::automl::{
    evaluate_candidate, sample_hyperparameters, search, AutomlError, Metric, Phase, SearchConfig,
};
use phytosense::eval::stratified_shuffle_splits;
use phytosense::features::{FeatureMatrix, Provenance};
use phytosense::models::{list_components, Classifier, KnnWeights, PipelineSpec, Preprocessor};
use phytosense::seed;
use proptest::prelude::*;
use rand::Rng;

fn matrix(x: Array2<f64>, y: Vec<u8>) -> FeatureMatrix {
    let ids = (0..y.len()).map(|i| format!("e{i}")).collect();
    let cols = (0..x.ncols()).map(|c| format!("f{c}")).collect();
    FeatureMatrix::new(ids, y, cols, x, Provenance::Combined).unwrap()
}

/// label = [feature_0 > 0] plus noise columns.
fn threshold_dataset(n: usize, cols: usize, seed_value: u64) -> FeatureMatrix {
    let mut rng = seed::rng(seed_value);
    let x = Array2::from_shape_fn((n, cols), |_| rng.gen_range(-1.0..1.0));
    let y = x.column(0).iter().map(|&v| u8::from(v > 0.0)).collect();
    matrix(x, y)
}

fn quick(metric: Metric, n_hpo_steps: usize) -> SearchConfig {
    SearchConfig {
        metric,
        n_hpo_steps,
        seed: 5,
        ..SearchConfig::default()
    }
}

#[test]
fn separable_dataset_reaches_perfect_accuracy_in_phase_one() {
    let m = threshold_dataset(200, 4, 1);
    let report = search(&m, &quick(Metric::Accuracy, 3)).unwrap();
    assert_eq!(report.best_score, 1.0);
    assert!(report
        .log
        .iter()
        .any(|c| c.phase == Phase::Enumeration && c.mean_score == 1.0));
}

#[test]
fn zero_hpo_steps_logs_every_combination_once() {
    let m = threshold_dataset(60, 6, 2);
    let report = search(&m, &quick(Metric::RocAuc, 0)).unwrap();
    let reg = list_components();
    assert_eq!(
        report.log.len(),
        reg.preprocessors.len() * reg.classifiers.len()
    );
    assert_eq!(report.log.len(), 30);
    let mut seen = std::collections::BTreeSet::new();
    for c in &report.log {
        assert_eq!(c.phase, Phase::Enumeration);
        seen.insert(c.spec.to_string());
    }
    assert_eq!(seen.len(), 30);
}

#[test]
fn report_invariants_and_determinism() {
    let m = threshold_dataset(60, 6, 3);
    let cfg = quick(Metric::RocAuc, 6);
    let a = search(&m, &cfg).unwrap();
    let b = search(&m, &cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.summary_json(), b.summary_json());
    assert_eq!(a.log.len(), 36);

    let max = a
        .log
        .iter()
        .map(|c| c.mean_score)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.best_score, max);
    assert_eq!(a.log[a.best_index].spec, a.best_spec);
    // earliest maximum wins
    assert_eq!(
        a.log.iter().position(|c| c.mean_score == max),
        Some(a.best_index)
    );

    let winner = &a.log[a.phase1_winner];
    for c in a.log.iter().filter(|c| c.phase == Phase::Hpo) {
        assert_eq!(c.spec.preprocessor.name(), winner.spec.preprocessor.name());
        assert_eq!(c.spec.classifier.name(), winner.spec.classifier.name());
    }
    assert_eq!(a.fitted.spec, a.best_spec);
    assert_eq!(a.fitted.columns, m.columns);
}

#[test]
fn accuracy_scores_stay_in_unit_interval() {
    let m = threshold_dataset(40, 3, 4);
    let report = search(&m, &quick(Metric::Accuracy, 2)).unwrap();
    for c in report.log.iter().filter(|c| !c.failed) {
        assert!((0.0..=1.0).contains(&c.mean_score));
        assert_eq!(c.split_scores.len(), 5);
    }
}

#[test]
fn evaluate_candidate_examples() {
    let m = threshold_dataset(50, 3, 6);
    let plan = stratified_shuffle_splits(&m.labels, 5, 0.8, 0).unwrap();
    let tree = PipelineSpec::new(
        Preprocessor::None,
        Classifier::DecisionTree {
            max_depth: Some(1),
            min_leaf: 1,
        },
        0,
    );
    let perfect = evaluate_candidate(&tree, m.data.view(), &m.labels, &plan, Metric::Accuracy);
    assert_eq!(perfect.split_scores, vec![1.0; 5]);
    assert_eq!(perfect.mean_score, 1.0);
    assert!(!perfect.failed);

    let impossible = PipelineSpec::new(
        Preprocessor::VarianceThreshold { threshold: 1e9 },
        tree.classifier,
        0,
    );
    let failed = evaluate_candidate(
        &impossible,
        m.data.view(),
        &m.labels,
        &plan,
        Metric::Accuracy,
    );
    assert!(failed.failed);
    assert_eq!(failed.mean_score, f64::NEG_INFINITY);
    assert!(failed.error.is_some());
}

#[test]
fn sampling_respects_validity() {
    let mut rng = seed::rng(1);
    let knn = Classifier::Knn {
        k: 5,
        weights: KnnWeights::Uniform,
    };
    for _ in 0..200 {
        let s = sample_hyperparameters(
            Preprocessor::UnivariateSelect { k: 50 },
            knn,
            50,
            0,
            &mut rng,
        )
        .unwrap();
        match s.preprocessor {
            Preprocessor::UnivariateSelect { k } => assert!((10..=50).contains(&k)),
            other => panic!("{other:?}"),
        }
        match s.classifier {
            Classifier::Knn { k, .. } => assert!(k % 2 == 1 && (1..=25).contains(&k)),
            other => panic!("{other:?}"),
        }
    }
    assert!(matches!(
        sample_hyperparameters(
            Preprocessor::UnivariateSelect { k: 50 },
            knn,
            5,
            0,
            &mut rng
        ),
        Err(AutomlError::NoValidConfiguration(_))
    ));
    let draw = |s| {
        let mut r = seed::rng(s);
        (0..20)
            .map(|_| {
                sample_hyperparameters(Preprocessor::MinmaxScaler, knn, 10, 0, &mut r).unwrap()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(9), draw(9));
}

#[test]
fn precondition_errors() {
    let m = threshold_dataset(40, 3, 7);
    let single = FeatureMatrix {
        labels: vec![1; 40],
        ..m.clone()
    };
    assert!(matches!(
        search(&single, &quick(Metric::RocAuc, 0)),
        Err(AutomlError::DegenerateLabels)
    ));
    let mut few = vec![0u8; 40];
    few[0] = 1;
    few[1] = 1;
    let tiny = FeatureMatrix { labels: few, ..m };
    assert!(matches!(
        search(&tiny, &quick(Metric::RocAuc, 0)),
        Err(AutomlError::TooFewSamples { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_specs_lie_in_their_spaces(seed_value in any::<u64>(), which in 0usize..6) {
        let mut rng = seed::rng(seed_value);
        let clf = list_components().classifiers[which];
        let s = sample_hyperparameters(Preprocessor::VarianceThreshold { threshold: 0.0 }, clf, 30, 0, &mut rng).unwrap();
        match s.preprocessor {
            Preprocessor::VarianceThreshold { threshold } => prop_assert!((0.0..=0.1).contains(&threshold)),
            _ => prop_assert!(false),
        }
        match s.classifier {
            Classifier::DecisionTree { max_depth, min_leaf } => {
                prop_assert!(max_depth.map_or(true, |d| (2..=20).contains(&d)));
                prop_assert!((1..=10).contains(&min_leaf));
            }
            Classifier::RandomForest { n_trees, max_depth, .. } | Classifier::ExtraTrees { n_trees, max_depth, .. } => {
                prop_assert!((50..=300).contains(&n_trees));
                prop_assert!(max_depth.map_or(true, |d| (4..=20).contains(&d)));
            }
            Classifier::GradientBoostedTrees { n_rounds, learning_rate, max_depth, .. } => {
                prop_assert!((50..=300).contains(&n_rounds));
                prop_assert!((0.01..=0.3).contains(&learning_rate));
                prop_assert!((2..=6).contains(&max_depth));
            }
            Classifier::Logistic { c } => prop_assert!((1e-3..=1e3).contains(&c)),
            Classifier::Knn { k, .. } => prop_assert!(k % 2 == 1 && k <= 25),
        }
    }
}
