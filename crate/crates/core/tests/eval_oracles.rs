use ndarray::Array2;
use phytosense::eval::{
    self, accuracy, roc_auc, roc_curve, stratified_shuffle_splits, EvalConfig, EvalError,
};
use phytosense::features::{FeatureMatrix, Provenance};
use phytosense::models::{Classifier, KnnWeights, PipelineSpec, Preprocessor};
use phytosense::seed;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            total += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    total / pairs
}

fn knn(k: usize) -> PipelineSpec {
    PipelineSpec::new(
        Preprocessor::None,
        Classifier::Knn {
            k,
            weights: KnnWeights::Uniform,
        },
        0,
    )
}

/// Label = sign of column 0 plus two noise columns.
fn separable(n: usize, seed_value: u64) -> (Array2<f64>, Vec<u8>) {
    let mut rng = seed::rng(seed_value);
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let x = Array2::from_shape_fn((n, 3), |(i, j)| {
        let noise: f64 = rng.gen_range(-1.0..1.0);
        if j == 0 {
            if y[i] == 1 {
                2.0 + noise
            } else {
                -2.0 + noise
            }
        } else {
            noise
        }
    });
    (x, y)
}

#[test]
fn roc_auc_examples() {
    assert_eq!(
        roc_auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(),
        0.75
    );
    assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
    assert_eq!(roc_auc(&[0.3; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
    assert!(matches!(
        roc_auc(&[0.1, 0.2], &[1, 1]),
        Err(EvalError::SingleClassLabels)
    ));
}

#[test]
fn roc_auc_matches_pairwise_oracle_with_ties() {
    let mut rng = seed::rng(99);
    for _ in 0..2000 {
        let n = rng.gen_range(2..=12);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        labels.shuffle(&mut rng);
        // coarse grid forces many ties
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.gen_range(0..5)) / 4.0)
            .collect();
        let got = roc_auc(&scores, &labels).unwrap();
        assert!((got - pairwise_auc(&scores, &labels)).abs() <= 1e-12);
    }
}

#[test]
fn accuracy_examples() {
    assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), 1.0);
    assert_eq!(accuracy(&[1, 0, 0, 1], &[0, 1, 1, 0]).unwrap(), 0.0);
    assert_eq!(accuracy(&[1, 1, 1, 0], &[1, 1, 1, 1]).unwrap(), 0.75);
    assert!(matches!(
        accuracy(&[1], &[1, 0]),
        Err(EvalError::LengthMismatch { .. })
    ));
    assert!(matches!(accuracy(&[], &[]), Err(EvalError::Empty)));
}

#[test]
fn roc_curve_trapezoid_equals_auc() {
    let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.2];
    let labels = [0, 0, 1, 1, 1, 0];
    let (fpr, tpr) = roc_curve(&scores, &labels).unwrap();
    assert_eq!((fpr[0], tpr[0]), (0.0, 0.0));
    assert_eq!((*fpr.last().unwrap(), *tpr.last().unwrap()), (1.0, 1.0));
    let area: f64 = fpr
        .windows(2)
        .zip(tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0)
        .sum();
    assert!((area - roc_auc(&scores, &labels).unwrap()).abs() < 1e-12);
}

#[test]
fn split_examples() {
    let labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
    let plan = stratified_shuffle_splits(&labels, 25, 0.8, 3).unwrap();
    assert_eq!(plan.splits.len(), 25);
    for s in &plan.splits {
        let pos_train = s.train.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!((s.train.len(), pos_train), (16, 8));
        assert_eq!(s.validation.len(), 4);
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
    }
    assert_eq!(
        plan,
        stratified_shuffle_splits(&labels, 25, 0.8, 3).unwrap()
    );
    assert_ne!(
        plan,
        stratified_shuffle_splits(&labels, 25, 0.8, 4).unwrap()
    );
    assert!(matches!(
        stratified_shuffle_splits(&[0, 0, 1], 1, 0.8, 0),
        Err(EvalError::ClassTooSmall { label: 1, count: 1 })
    ));
}

#[test]
fn repeated_eval_separable_and_null() {
    let (x, y) = separable(60, 1);
    let cfg = EvalConfig {
        n_runs: 50,
        ..EvalConfig::default()
    };
    let r = eval::repeated_eval(&knn(5), x.view(), &y, &cfg).unwrap();
    assert!(r.mean_roc_auc >= 0.99, "{}", r.mean_roc_auc);
    assert_eq!(r.n_runs, 50);
    assert!(r.mean_tpr.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*r.mean_tpr.last().unwrap(), 1.0);
    assert_eq!(r.fpr.len(), 101);

    let mut permuted = y.clone();
    permuted.shuffle(&mut seed::rng(17));
    let (noise, _) = separable(60, 2);
    let null =
        eval::repeated_eval(&knn(5), noise.slice(ndarray::s![.., 1..]), &permuted, &cfg).unwrap();
    assert!(
        (null.mean_roc_auc - 0.5).abs() <= 0.1,
        "{}",
        null.mean_roc_auc
    );

    let one = eval::repeated_eval(&knn(5), x.view(), &y, &EvalConfig { n_runs: 1, ..cfg }).unwrap();
    assert_eq!((one.std_accuracy, one.std_roc_auc), (0.0, 0.0));
    assert!(one.std_tpr.iter().all(|&s| s == 0.0));
}

#[test]
fn repeated_eval_is_reproducible() {
    let (x, y) = separable(40, 5);
    let spec = PipelineSpec::new(
        Preprocessor::None,
        Classifier::RandomForest {
            n_trees: 10,
            max_features: phytosense::models::MaxFeatures::Sqrt,
            max_depth: None,
        },
        1,
    );
    let cfg = EvalConfig {
        n_runs: 8,
        ..EvalConfig::default()
    };
    let a = eval::repeated_eval(&spec, x.view(), &y, &cfg).unwrap();
    let b = eval::repeated_eval(&spec, x.view(), &y, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
}

fn matrix(x: Array2<f64>, y: Vec<u8>) -> FeatureMatrix {
    let ids = (0..y.len()).map(|i| format!("e{i}")).collect();
    let cols = (0..x.ncols()).map(|c| format!("c{c}")).collect();
    FeatureMatrix::new(ids, y, cols, x, Provenance::Leaf).unwrap()
}

#[test]
fn holdout_examples() {
    let (x, y) = separable(40, 8);
    let m = matrix(x, y);
    let r = eval::holdout_eval(&knn(1), &m, &m, 5, 0).unwrap();
    assert_eq!(r.mean_accuracy, 1.0);
    assert_eq!((r.std_accuracy, r.std_roc_auc), (0.0, 0.0));

    let renamed = FeatureMatrix {
        columns: vec!["a".into(), "b".into(), "c".into()],
        ..m.clone()
    };
    assert!(matches!(
        eval::holdout_eval(&knn(1), &m, &renamed, 5, 0),
        Err(EvalError::ColumnMismatch { .. })
    ));
}

#[test]
fn learning_curve_examples() {
    let (x, y) = separable(60, 9);
    let cfg = EvalConfig {
        n_runs: 20,
        ..EvalConfig::default()
    };
    let lc = eval::learning_curve(&knn(1), x.view(), &y, &[1, 4, 20, 48], &cfg).unwrap();
    assert_eq!(lc.points.len(), 4);
    // a single training sample is always one class
    assert_eq!(lc.points[0].mean_roc_auc, 0.5);
    assert_eq!(lc.points[0].std_roc_auc, 0.0);
    assert!(lc.points[3].mean_roc_auc >= lc.points[1].mean_roc_auc);
    assert!(matches!(
        eval::learning_curve(&knn(1), x.view(), &y, &[49], &cfg),
        Err(EvalError::GridExceedsData { .. })
    ));

    // one-point grid at the full training size matches repeated_eval
    let full = eval::learning_curve(&knn(3), x.view(), &y, &[48], &cfg).unwrap();
    let rep = eval::repeated_eval(&knn(3), x.view(), &y, &cfg).unwrap();
    assert!((full.points[0].mean_roc_auc - rep.mean_roc_auc).abs() < 1e-12);
}

#[test]
fn threshold_baseline_examples() {
    let y: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
    let perfect: Vec<f64> = y.iter().map(|&l| f64::from(l) * 10.0 + 1.0).collect();
    let cfg = EvalConfig {
        n_runs: 50,
        ..EvalConfig::default()
    };
    assert_eq!(
        eval::threshold_baseline(&perfect, &y, &cfg)
            .unwrap()
            .mean_accuracy,
        1.0
    );
    // reversed polarity is found too
    let reversed: Vec<f64> = perfect.iter().map(|v| -v).collect();
    assert_eq!(
        eval::threshold_baseline(&reversed, &y, &cfg)
            .unwrap()
            .mean_accuracy,
        1.0
    );

    let mut rng = seed::rng(4);
    let y_big: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
    let noise: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
    let null = eval::threshold_baseline(&noise, &y_big, &cfg)
        .unwrap()
        .mean_accuracy;
    assert!((null - 0.5).abs() <= 0.1, "{null}");
}

#[test]
fn interpolation_takes_highest_tpr_at_vertex() {
    // vertical jump at fpr = 0.5
    let fpr = [0.0, 0.5, 0.5, 1.0];
    let tpr = [0.0, 0.2, 0.8, 1.0];
    let grid = eval::fpr_grid();
    let v = eval::interpolate_tpr(&fpr, &tpr, &grid);
    assert_eq!(v[50], 0.8);
    assert!((v[25] - 0.1).abs() < 1e-12);
    assert!((v[75] - 0.9).abs() < 1e-12);
    assert_eq!(v[100], 1.0);
}

proptest! {
    #[test]
    fn auc_invariant_under_increasing_maps(
        pairs in prop::collection::vec((-100.0f64..100.0, 0u8..2), 2..30),
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let a = roc_auc(&scores, &labels).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| (s / 50.0).exp() * 2.0 - 7.0).collect();
        prop_assert!((a - roc_auc(&mapped, &labels).unwrap()).abs() < 1e-12);
        prop_assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auc_label_flip_complements(
        pairs in prop::collection::vec((-100.0f64..100.0, 0u8..2), 2..30),
    ) {
        let labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        prop_assume!(sorted.len() == scores.len());
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let sum = roc_auc(&scores, &labels).unwrap() + roc_auc(&scores, &flipped).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stratified_counts_within_one(
        n0 in 2usize..40,
        n1 in 2usize..40,
        ratio in 0.05f64..0.95,
        seed_value in any::<u64>(),
    ) {
        let labels: Vec<u8> = (0..n0 + n1).map(|i| u8::from(i >= n0)).collect();
        let plan = stratified_shuffle_splits(&labels, 3, ratio, seed_value).unwrap();
        for s in &plan.splits {
            for (class, count) in [(0u8, n0), (1u8, n1)] {
                let train = s.train.iter().filter(|&&i| labels[i] == class).count();
                prop_assert!((train as f64 - ratio * count as f64).abs() < 1.0);
                prop_assert!(train >= 1 && train < count);
            }
        }
    }
}
