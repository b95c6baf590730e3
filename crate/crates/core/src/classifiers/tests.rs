use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::ClassLabel;

use super::*;

const N: ClassLabel = ClassLabel::Normal;
const A: ClassLabel = ClassLabel::Abnormal;

fn dataset(vectors: Vec<Vec<f64>>, labels: Vec<ClassLabel>) -> Dataset {
    Dataset::new(vectors, labels, "test-spec").unwrap()
}

/// Two Gaussian blobs separated by about ten standard deviations.
fn clustered(n_per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * n_per_class {
        let abnormal = i % 2 == 1;
        let center = if abnormal { 0.8 } else { 0.2 };
        let v: Vec<f64> = (0..4).map(|_| center + rng.random_range(-0.06..0.06)).collect();
        vectors.push(v);
        labels.push(if abnormal { A } else { N });
    }
    dataset(vectors, labels)
}

// -- decision tree ---------------------------------------------------------

#[test]
fn dt_separable_split_survives_pruning() {
    let data = dataset(
        vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]],
        vec![N, N, A, A],
    );
    let model = train_decision_tree(&data, &DTParams::default()).unwrap();
    // Collapsing to a leaf would pessimistically cost more than the two
    // pure children, so the split must survive.
    let ModelKind::DecisionTree(ref tree) = model.kind else { panic!() };
    assert_eq!(tree.root.leaf_count(), 2);
    assert_eq!(model.predict(&[0.5]).unwrap(), (N, 0.0));
    assert_eq!(model.predict(&[10.5]).unwrap(), (A, 1.0));
}

#[test]
fn dt_identical_vectors_collapse_to_class_fraction_leaf() {
    let data = dataset(vec![vec![0.3, 0.3]; 5], vec![N, N, A, A, A]);
    let model = train_decision_tree(&data, &DTParams::default()).unwrap();
    let ModelKind::DecisionTree(ref tree) = model.kind else { panic!() };
    assert_eq!(tree.root.leaf_count(), 1);
    let (label, score) = model.predict(&[0.3, 0.3]).unwrap();
    assert_eq!(label, A);
    assert!((score - 0.6).abs() < 1e-12);
}

#[test]
fn dt_pure_dataset_scores_zero() {
    let data = dataset(vec![vec![0.0], vec![1.0], vec![2.0]], vec![N, N, N]);
    let model = train_decision_tree(&data, &DTParams::default()).unwrap();
    assert_eq!(model.predict(&[5.0]).unwrap(), (N, 0.0));
}

#[test]
fn dt_min_instances_blocks_tiny_children() {
    // With M = 3, no legal split exists for 4 instances (a 1/3 or 2/2
    // split — but 2 < 3 on each side), so training yields one leaf.
    let data = dataset(
        vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]],
        vec![N, N, A, A],
    );
    let params = DTParams { confidence_c: 0.25, min_instances_m: 3 };
    let model = train_decision_tree(&data, &params).unwrap();
    let ModelKind::DecisionTree(ref tree) = model.kind else { panic!() };
    assert_eq!(tree.root.leaf_count(), 1);
}

#[test]
fn dt_rejects_bad_confidence() {
    let data = dataset(vec![vec![0.0], vec![1.0]], vec![N, A]);
    for c in [0.0, -0.1, 1.0, 1.5] {
        let params = DTParams { confidence_c: c, min_instances_m: 2 };
        assert!(train_decision_tree(&data, &params).is_err(), "confidence_c={c}");
    }
}

// -- random forest ---------------------------------------------------------

#[test]
fn rf_same_seed_is_byte_identical() {
    let data = clustered(40, 7);
    let params = RFParams { tree_count_i: 15, rng_seed: 42, ..RFParams::default() };
    let a = save_model(&train_random_forest(&data, &params).unwrap());
    let b = save_model(&train_random_forest(&data, &params).unwrap());
    assert_eq!(a, b);
}

#[test]
fn rf_different_seed_changes_forest() {
    let data = clustered(40, 7);
    let p1 = RFParams { tree_count_i: 15, rng_seed: 1, ..RFParams::default() };
    let p2 = RFParams { tree_count_i: 15, rng_seed: 2, ..RFParams::default() };
    let a = train_random_forest(&data, &p1).unwrap();
    let b = train_random_forest(&data, &p2).unwrap();
    let (ModelKind::RandomForest(fa), ModelKind::RandomForest(fb)) = (&a.kind, &b.kind) else {
        panic!()
    };
    assert_ne!(fa.trees, fb.trees);
}

#[test]
fn rf_oob_accuracy_high_on_separated_clusters() {
    let data = clustered(60, 11);
    let params = RFParams { tree_count_i: 30, rng_seed: 3, ..RFParams::default() };
    let model = train_random_forest(&data, &params).unwrap();
    let oob = model.meta.oob_accuracy.expect("bootstrap enabled");
    assert!(oob >= 0.95, "oob accuracy {oob}");
    for (v, l) in data.vectors.iter().zip(&data.labels) {
        assert_eq!(model.predict(v).unwrap().0, *l);
    }
}

#[test]
fn rf_without_bootstrap_has_no_oob_estimate() {
    let data = clustered(20, 5);
    let params =
        RFParams { tree_count_i: 3, bootstrap: false, rng_seed: 9, ..RFParams::default() };
    let model = train_random_forest(&data, &params).unwrap();
    assert!(model.meta.oob_accuracy.is_none());
}

#[test]
fn rf_score_is_vote_fraction() {
    let data = clustered(40, 13);
    let params = RFParams { tree_count_i: 10, rng_seed: 1, ..RFParams::default() };
    let model = train_random_forest(&data, &params).unwrap();
    let (_, score) = model.predict(&data.vectors[0]).unwrap();
    let steps = score * 10.0;
    assert!((steps - steps.round()).abs() < 1e-9, "score {score} not a tenth");
}

// -- naive bayes -----------------------------------------------------------

#[test]
fn nb_gaussian_matches_closed_form() {
    // Normal values {0.1, 0.3}, abnormal {0.7, 0.9}: means 0.2 / 0.8,
    // population variance 0.01 each, priors 1/2.
    let data = dataset(
        vec![vec![0.1], vec![0.3], vec![0.7], vec![0.9]],
        vec![N, N, A, A],
    );
    let model = train_naive_bayes(&data, &NBParams::default()).unwrap();
    let q = 0.2;
    let log_pdf = |mean: f64, var: f64| {
        -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (q - mean) * (q - mean) / var)
    };
    let ln = 0.5f64.ln() + log_pdf(0.2, 0.01);
    let la = 0.5f64.ln() + log_pdf(0.8, 0.01);
    let expected = {
        let m = ln.max(la);
        (la - m).exp() / ((ln - m).exp() + (la - m).exp())
    };
    let (label, score) = model.predict(&[q]).unwrap();
    assert_eq!(label, N);
    assert!((score - expected).abs() < 1e-9, "score {score} vs {expected}");
}

#[test]
fn nb_gaussian_tie_goes_to_normal() {
    // Exactly representable symmetric fixture: means -1 and 1, variance
    // 0.25 for both classes, so the midpoint posterior is exactly one half.
    let data = dataset(
        vec![vec![-1.5], vec![-0.5], vec![0.5], vec![1.5]],
        vec![N, N, A, A],
    );
    let model = train_naive_bayes(&data, &NBParams::default()).unwrap();
    let (label, score) = model.predict(&[0.0]).unwrap();
    assert_eq!(score, 0.5);
    assert_eq!(label, N);
}

#[test]
fn nb_constant_feature_uses_variance_floor() {
    let data = dataset(
        vec![vec![0.5, 0.1], vec![0.5, 0.2], vec![0.5, 0.8], vec![0.5, 0.9]],
        vec![N, N, A, A],
    );
    let model = train_naive_bayes(&data, &NBParams::default()).unwrap();
    // The constant feature contributes identically to both classes; the
    // informative one decides.
    assert_eq!(model.predict(&[0.5, 0.15]).unwrap().0, N);
    assert_eq!(model.predict(&[0.5, 0.85]).unwrap().0, A);
}

#[test]
fn nb_discretized_constant_feature_has_no_cuts() {
    let data = dataset(vec![vec![0.5]; 4], vec![N, N, A, A]);
    let params = NBParams { supervised_discretization_d: true };
    let model = train_naive_bayes(&data, &params).unwrap();
    let ModelKind::NaiveBayes(ref nb) = model.kind else { panic!() };
    let bayes::FeatureModel::Discretized { ref cuts, .. } = nb.features[0] else { panic!() };
    assert!(cuts.is_empty());
    // One bin carries no evidence, so the equal priors tie toward NORMAL.
    assert_eq!(model.predict(&[0.5]).unwrap(), (N, 0.5));
}

#[test]
fn nb_discretized_separates_clean_classes() {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for i in 0..20 {
        vectors.push(vec![0.1 + 0.01 * i as f64]);
        labels.push(N);
        vectors.push(vec![0.7 + 0.01 * i as f64]);
        labels.push(A);
    }
    let data = dataset(vectors, labels);
    let params = NBParams { supervised_discretization_d: true };
    let model = train_naive_bayes(&data, &params).unwrap();
    let ModelKind::NaiveBayes(ref nb) = model.kind else { panic!() };
    let bayes::FeatureModel::Discretized { ref cuts, .. } = nb.features[0] else { panic!() };
    assert!(!cuts.is_empty());
    assert!(cuts.iter().all(|c| (0.29..=0.71).contains(c)), "cuts {cuts:?}");
    assert_eq!(model.predict(&[0.2]).unwrap().0, N);
    assert_eq!(model.predict(&[0.8]).unwrap().0, A);
}

#[test]
fn nb_single_class_dataset_always_predicts_that_class() {
    let data = dataset(vec![vec![0.1], vec![0.2], vec![0.3]], vec![A, A, A]);
    let model = train_naive_bayes(&data, &NBParams::default()).unwrap();
    let (label, score) = model.predict(&[0.9]).unwrap();
    assert_eq!(label, A);
    assert_eq!(score, 1.0);
}

// -- svm -------------------------------------------------------------------

#[test]
fn svm_linear_separable_satisfies_kkt() {
    let data = clustered(30, 17);
    let params = SVMParams {
        kernel_k: KernelKind::Linear,
        complexity_c: 8.9,
        ..SVMParams::default()
    };
    let model = train_svm(&data, &params).unwrap();
    assert!(!model.meta.convergence_warning);
    let ModelKind::Svm(ref svm) = model.kind else { panic!() };
    assert!(!svm.support_vectors.is_empty());

    for (v, l) in data.vectors.iter().zip(&data.labels) {
        let y = if l.is_abnormal() { 1.0 } else { -1.0 };
        let f = svm.decision_value(v);
        assert_eq!(model.predict(v).unwrap().0, *l, "training accuracy");
        // KKT for alpha = 0 points (the vast majority on separable data):
        // the functional margin must reach 1 up to the SMO tolerance.
        assert!(y * f >= 1.0 - 1e-2 || {
            // support vectors may sit inside the margin band
            svm.support_vectors.iter().any(|sv| sv == v)
        });
    }
    // Margin support vectors (0 < alpha < C) sit on the margin.
    for (sv, &c) in svm.support_vectors.iter().zip(&svm.dual_coefficients) {
        let alpha = c.abs();
        if alpha > 1e-9 && alpha < 8.9 - 1e-9 {
            let y = c.signum();
            assert!((y * svm.decision_value(sv) - 1.0).abs() < 1e-2);
        }
    }
}

#[test]
fn svm_polynomial_degree_one_agrees_with_linear_labels() {
    let data = clustered(25, 23);
    let linear = train_svm(
        &data,
        &SVMParams { kernel_k: KernelKind::Linear, ..SVMParams::default() },
    )
    .unwrap();
    let poly = train_svm(
        &data,
        &SVMParams { kernel_k: KernelKind::Polynomial, degree_d: 1, ..SVMParams::default() },
    )
    .unwrap();
    for v in &data.vectors {
        assert_eq!(linear.predict(v).unwrap().0, poly.predict(v).unwrap().0);
    }
}

#[test]
fn svm_rbf_classifies_clusters() {
    let data = clustered(30, 29);
    let model = train_svm(&data, &SVMParams::default()).unwrap();
    let correct = data
        .vectors
        .iter()
        .zip(&data.labels)
        .filter(|(v, l)| model.predict(v).unwrap().0 == **l)
        .count();
    assert_eq!(correct, data.len());
}

#[test]
fn svm_survives_contradictory_duplicates() {
    // The same point under both labels can never satisfy KKT exactly;
    // training must still terminate and produce a usable model.
    let data = dataset(
        vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.1, 0.1], vec![0.9, 0.9]],
        vec![N, A, N, A],
    );
    let params = SVMParams { max_passes: 50, ..SVMParams::default() };
    let model = train_svm(&data, &params).unwrap();
    assert_eq!(model.predict(&[0.9, 0.9]).unwrap().0, A);
}

#[test]
fn svm_training_is_deterministic() {
    let data = clustered(20, 31);
    let params = SVMParams::default();
    let a = save_model(&train_svm(&data, &params).unwrap());
    let b = save_model(&train_svm(&data, &params).unwrap());
    assert_eq!(a, b);
}

// -- knn -------------------------------------------------------------------

/// Straight-line reimplementation used as the oracle: full pairwise scan
/// with explicit weighted tallies.
fn knn_oracle(
    train: &[(Vec<f64>, ClassLabel)],
    query: &[f64],
    k: usize,
    weighted: bool,
) -> f64 {
    let mut order: Vec<usize> = (0..train.len()).collect();
    let dist = |i: usize| -> f64 {
        train[i].0.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    order.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    let mut abn = 0.0;
    let mut tot = 0.0;
    for &i in order.iter().take(k) {
        let w = if weighted { 1.0 / (dist(i) + 1e-12) } else { 1.0 };
        tot += w;
        if train[i].1.is_abnormal() {
            abn += w;
        }
    }
    abn / tot
}

#[test]
fn knn_matches_oracle_over_random_trials() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..200 {
        let n = rng.random_range(5..40);
        let dim = rng.random_range(1..5);
        let rows: Vec<(Vec<f64>, ClassLabel)> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
                (v, if rng.random_bool(0.4) { A } else { N })
            })
            .collect();
        let k = rng.random_range(1..=n);
        let weighted = rng.random_bool(0.5);
        let data = dataset(
            rows.iter().map(|(v, _)| v.clone()).collect(),
            rows.iter().map(|(_, l)| *l).collect(),
        );
        let params = KNNParams { neighbors_k: k, inverse_distance_weighting_i: weighted };
        let model = train_knn(&data, &params).unwrap();
        let query: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let got = model.predict(&query).unwrap().1;
        let want = knn_oracle(&rows, &query, k, weighted);
        assert!((got - want).abs() < 1e-12, "trial {trial}: {got} vs {want}");
    }
}

#[test]
fn knn_k1_exact_duplicate_is_certain() {
    let data = dataset(
        vec![vec![0.1, 0.1], vec![0.5, 0.5], vec![0.9, 0.9]],
        vec![N, A, N],
    );
    let model = train_knn(&data, &KNNParams::default()).unwrap();
    assert_eq!(model.predict(&[0.5, 0.5]).unwrap(), (A, 1.0));
}

#[test]
fn knn_even_split_ties_to_normal() {
    let data = dataset(
        vec![vec![0.4], vec![0.6], vec![0.3], vec![0.7]],
        vec![N, A, A, N],
    );
    let params = KNNParams { neighbors_k: 4, inverse_distance_weighting_i: false };
    let model = train_knn(&data, &params).unwrap();
    let (label, score) = model.predict(&[0.5]).unwrap();
    assert_eq!(score, 0.5);
    assert_eq!(label, N);
}

#[test]
fn knn_inverse_distance_weighting_favors_the_close_neighbor() {
    // Unweighted k=3 votes 2:1 NORMAL; weighting flips it because the
    // abnormal neighbor is far closer.
    let data = dataset(
        vec![vec![0.50], vec![0.9], vec![0.95]],
        vec![A, N, N],
    );
    let base = train_knn(
        &dataset(
            vec![vec![0.50], vec![0.9], vec![0.95]],
            vec![A, N, N],
        ),
        &KNNParams { neighbors_k: 3, inverse_distance_weighting_i: false },
    )
    .unwrap();
    assert_eq!(base.predict(&[0.52]).unwrap().0, N);
    let weighted = train_knn(
        &data,
        &KNNParams { neighbors_k: 3, inverse_distance_weighting_i: true },
    )
    .unwrap();
    assert_eq!(weighted.predict(&[0.52]).unwrap().0, A);
}

#[test]
fn knn_rejects_k_larger_than_training_set() {
    let data = dataset(vec![vec![0.0], vec![1.0]], vec![N, A]);
    let params = KNNParams { neighbors_k: 3, inverse_distance_weighting_i: false };
    match train_knn(&data, &params) {
        Err(TrainError::KTooLarge { k: 3, n: 2 }) => {}
        other => panic!("expected KTooLarge, got {other:?}"),
    }
}

// -- shared contract -------------------------------------------------------

fn all_models(data: &Dataset) -> Vec<TrainedModel> {
    vec![
        train_decision_tree(data, &DTParams::default()).unwrap(),
        train_random_forest(data, &RFParams { tree_count_i: 5, ..RFParams::default() }).unwrap(),
        train_naive_bayes(data, &NBParams::default()).unwrap(),
        train_svm(data, &SVMParams::default()).unwrap(),
        train_knn(data, &KNNParams { neighbors_k: 3, inverse_distance_weighting_i: true })
            .unwrap(),
    ]
}

#[test]
fn save_load_round_trips_every_algorithm() {
    let data = clustered(20, 41);
    for model in all_models(&data) {
        let bytes = save_model(&model);
        let restored = load_model(&bytes).unwrap();
        assert_eq!(restored, model);
        for v in data.vectors.iter().take(10) {
            let (l1, s1) = model.predict(v).unwrap();
            let (l2, s2) = restored.predict(v).unwrap();
            assert_eq!((l1, s1.to_bits()), (l2, s2.to_bits()));
        }
    }
}

#[test]
fn load_rejects_truncated_and_versioned_models() {
    let data = clustered(10, 43);
    let model = train_decision_tree(&data, &DTParams::default()).unwrap();
    let bytes = save_model(&model);
    assert!(matches!(load_model(&bytes[..bytes.len() / 2]), Err(ModelIoError::Malformed(_))));

    let mut tampered = model.clone();
    tampered.meta.format_version = 99;
    let bytes = serde_json::to_vec(&tampered).unwrap();
    assert!(matches!(load_model(&bytes), Err(ModelIoError::UnsupportedVersion(99))));
}

#[test]
fn predict_rejects_wrong_dimension() {
    let data = clustered(10, 47);
    let model = train_decision_tree(&data, &DTParams::default()).unwrap();
    assert!(matches!(
        model.predict(&[0.1, 0.2]),
        Err(PredictError::DimensionMismatch { got: 2, want: 4 })
    ));
}

#[test]
fn require_spec_guards_fingerprint_mismatch() {
    let data = clustered(10, 53);
    let model = train_naive_bayes(&data, &NBParams::default()).unwrap();
    assert!(model.require_spec("test-spec").is_ok());
    assert!(matches!(model.require_spec("other"), Err(ModelIoError::SpecMismatch { .. })));
}

#[test]
fn score_label_agreement_holds_for_every_algorithm() {
    let data = clustered(20, 59);
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for model in all_models(&data) {
        for _ in 0..50 {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-0.2..1.2)).collect();
            let (label, score) = model.predict(&v).unwrap();
            assert!((0.0..=1.0).contains(&score), "{} score {score}", model.meta.algorithm);
            assert_eq!(label, label_from_score(score), "{}", model.meta.algorithm);
        }
    }
}

#[test]
fn empty_dataset_is_rejected() {
    assert!(Dataset::new(vec![], vec![], "test-spec").is_err());
}
