mod common;

use std::collections::BTreeMap;

use mousedyn::eval::auc_rank;
use mousedyn::forest::{
    build_user_dataset, fuse_scores, gain_ratio, DecisionTree, FeatureSchema, Label, Matrix, Node, ScoreMode, SplitTest,
};
use mousedyn::{ForestError, ForestParams, RandomForest};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(num_trees: usize, seed: u64) -> ForestParams {
    ForestParams {
        num_trees,
        seed,
        ..ForestParams::default()
    }
}

fn blobs(seed: u64, per_class: usize, separation: f64) -> (Matrix, Vec<bool>) {
    common::gaussian_blobs(&mut ChaCha8Rng::seed_from_u64(seed), per_class, 6, separation)
}

fn fit(x: &Matrix, y: &[bool], p: ForestParams) -> RandomForest {
    RandomForest::fit(x, y, common::numeric_schema(x.n_cols()), p).unwrap()
}

#[test]
fn separates_two_clusters() {
    let (x, y) = blobs(1, 500, 4.0);
    let model = fit(&x, &y, params(50, 9));
    let scores = model.predict_matrix(&x).unwrap();
    let correct = scores.iter().zip(&y).filter(|(s, g)| (**s >= 0.5) == **g).count();
    assert!(correct as f64 / y.len() as f64 > 0.99);
}

#[test]
fn deterministic_and_thread_independent() {
    let (x, y) = blobs(2, 150, 0.7);
    let (probe, _) = blobs(3, 40, 0.7);
    let p = params(40, 1234);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| fit(&x, &y, p));
    let b = four.install(|| fit(&x, &y, p));
    assert_eq!(a, b);
    let pa = a.predict_matrix(&probe).unwrap();
    let pb = fit(&x, &y, p).predict_matrix(&probe).unwrap();
    assert_eq!(
        pa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        pb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let other = fit(&x, &y, params(40, 1235));
    assert_ne!(a, other);
}

#[test]
fn save_load_round_trip() {
    let (x, y) = blobs(4, 100, 1.0);
    let model = fit(&x, &y, params(20, 5));
    let mut buf = Vec::new();
    model.save(&mut buf).unwrap();
    let schema = common::numeric_schema(6);
    let loaded = RandomForest::load(buf.as_slice(), &schema).unwrap();
    assert_eq!(loaded, model);
    let (probe, _) = blobs(5, 30, 1.0);
    let a = model.predict_matrix(&probe).unwrap();
    let b = loaded.predict_matrix(&probe).unwrap();
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));

    let wrong = common::numeric_schema(7);
    assert!(matches!(
        RandomForest::load(buf.as_slice(), &wrong),
        Err(ForestError::SchemaMismatch(_))
    ));
    assert!(matches!(
        model.predict_proba(&[0.0; 3]),
        Err(ForestError::SchemaMismatch(_))
    ));
}

#[test]
fn single_class_is_degenerate() {
    let (x, _) = blobs(6, 10, 1.0);
    let y = vec![true; x.n_rows()];
    let err = RandomForest::fit(&x, &y, common::numeric_schema(6), params(5, 0)).unwrap_err();
    assert!(matches!(err, ForestError::DegenerateData(_)));
}

#[test]
fn hand_built_votes() {
    let schema = common::numeric_schema(1);
    let leaf = |genuine: f64| Node::Leaf { genuine, total: 3.0 };
    let stump = |left_genuine: bool| {
        let (l, r) = if left_genuine {
            (leaf(3.0), leaf(0.0))
        } else {
            (leaf(0.0), leaf(3.0))
        };
        DecisionTree::from_nodes(vec![
            Node::Split {
                feature: 0,
                test: SplitTest::Numeric { threshold: 0.5 },
                left: 1,
                right: 2,
            },
            l,
            r,
        ])
        .unwrap()
    };
    let forest = RandomForest::from_trees(
        schema,
        ForestParams::default(),
        vec![stump(true), stump(true), stump(false)],
    );
    assert!((forest.predict_proba(&[0.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((forest.predict_proba(&[1.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn more_trees_less_variance() {
    let (x, y) = blobs(7, 60, 0.5);
    let (probe, _) = blobs(8, 10, 0.5);
    let variance = |trees: usize| -> f64 {
        let preds: Vec<Vec<f64>> = (0..30)
            .map(|s| fit(&x, &y, params(trees, 1000 + s)).predict_matrix(&probe).unwrap())
            .collect();
        (0..probe.n_rows())
            .map(|r| {
                let col: Vec<f64> = preds.iter().map(|p| p[r]).collect();
                let m = col.iter().sum::<f64>() / col.len() as f64;
                col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64
            })
            .sum::<f64>()
            / probe.n_rows() as f64
    };
    let v: Vec<f64> = [3, 15, 75].iter().map(|&t| variance(t)).collect();
    assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
}

#[test]
fn dataset_quotas() {
    let mut all = BTreeMap::new();
    all.insert(1u32, (0..4500).map(|i| common::feature_row(1, i)).collect::<Vec<_>>());
    for u in 2..=10 {
        all.insert(u, (0..800).map(|i| common::feature_row(u, i)).collect());
    }
    let d = build_user_dataset(&all, 1, 77).unwrap();
    assert_eq!(d.count(Label::Genuine), 4500);
    assert_eq!(d.count(Label::Impostor), 4500);
    for u in 2..=10 {
        let n = d
            .rows
            .iter()
            .filter(|(f, l)| *l == Label::Impostor && f.user_id == u)
            .count();
        assert_eq!(n, 500, "user {u}");
    }
    // Without replacement: every impostor row is distinct.
    let mut keys: Vec<(u32, u64)> = d
        .rows
        .iter()
        .filter(|(_, l)| *l == Label::Impostor)
        .map(|(f, _)| (f.user_id, f.elapsed_time.to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    assert_eq!(keys.len(), 4500);
    assert_eq!(build_user_dataset(&all, 1, 77).unwrap(), d);

    let two: BTreeMap<u32, Vec<_>> = all.into_iter().filter(|(u, _)| *u <= 2).collect();
    let d = build_user_dataset(&two, 2, 1).unwrap();
    assert!(d
        .rows
        .iter()
        .filter(|(_, l)| *l == Label::Impostor)
        .all(|(f, _)| f.user_id == 1));
    assert_eq!(d.count(Label::Impostor), 800);

    let lonely: BTreeMap<u32, Vec<_>> = two.into_iter().filter(|(u, _)| *u == 2).collect();
    assert!(matches!(
        build_user_dataset(&lonely, 2, 1),
        Err(ForestError::NotEnoughUsers(_))
    ));
}

#[test]
fn gain_ratio_extremes() {
    let classes: Vec<usize> = (0..100).map(|i| i % 2).collect();
    assert!((gain_ratio(&classes, &classes) - 1.0).abs() < 1e-12);
    assert_eq!(gain_ratio(&vec![0; 100], &classes), 0.0);
}

#[test]
fn categorical_schema_matches_table() {
    let s = FeatureSchema::action_features();
    assert_eq!(s.len(), 39);
    assert_eq!(s.features[0].name, "mean_vx");
    assert_eq!(s.features[38].name, "a_beg_time");
}

#[test]
fn mean_probability_mode_scores_in_range() {
    let (x, y) = blobs(9, 80, 0.8);
    let model = fit(
        &x,
        &y,
        ForestParams {
            score_mode: ScoreMode::MeanProbability,
            ..params(25, 3)
        },
    );
    assert!(model
        .predict_matrix(&x)
        .unwrap()
        .iter()
        .all(|s| (0.0..=1.0).contains(s)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn scores_in_unit_interval_and_probe_order_free(seed in any::<u64>()) {
        let (x, y) = blobs(seed, 40, 0.6);
        let model = fit(&x, &y, params(15, seed));
        let (probe, _) = blobs(seed ^ 1, 20, 0.6);
        let scores = model.predict_matrix(&probe).unwrap();
        prop_assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));

        let mut order: Vec<usize> = (0..probe.n_rows()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = model.predict_matrix(&probe.select(&order)).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(permuted[k].to_bits(), scores[i].to_bits());
        }
    }

    #[test]
    fn fusion_properties(scores in prop::collection::vec(0.0f64..=1.0, 1..12), seed in any::<u64>()) {
        let f = fuse_scores(&scores).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        let mut shuffled = scores.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((fuse_scores(&shuffled).unwrap() - f).abs() < 1e-12);
        prop_assert_eq!(fuse_scores(&scores[..1]).unwrap(), scores[0]);
        let same = vec![scores[0]; scores.len()];
        prop_assert!((fuse_scores(&same).unwrap() - scores[0]).abs() < 1e-15);
    }
}

#[test]
fn fusion_examples() {
    assert!((fuse_scores(&[0.2, 0.4, 0.6]).unwrap() - 0.4).abs() < 1e-15);
    assert_eq!(fuse_scores(&[1.0, 0.0]).unwrap(), 0.5);
    assert!(matches!(fuse_scores(&[]), Err(ForestError::EmptySet)));
}

#[test]
fn cross_validated_separation() {
    let (x, y) = blobs(10, 300, 2.0);
    let s = common::matrix_cv(&x, &y, 10, params(50, 11));
    assert!(auc_rank(&s.positives, &s.negatives) > 0.95);
}
