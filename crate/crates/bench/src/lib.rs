//! Shared fixtures for the microbenchmarks and their smoke tests: a
//! synthetic session corpus, its stream-order encoding, and one trained
//! model per algorithm.

use nids_core::classifiers::{train_knn, train_svm, Dataset, KNNParams, SVMParams, TrainedModel};
use nids_core::features::{
    fit_normalization, strip_and_encode, FullFeatureRecord, HostWindow, NormalizationSpec,
};
use nids_core::model::SessionRecord;
use nids_core::seeding::sub_seed;
use nids_core::selection::{downsample, Algorithm};
use nids_core::synth::{generate_sessions, SynthConfig};

pub fn corpus(sessions: usize, seed: u64) -> Vec<SessionRecord> {
    generate_sessions(&SynthConfig { sessions, ..SynthConfig::default() }, seed)
        .into_iter()
        .map(|(s, _)| s)
        .collect()
}

/// Stream-order host features and a freshly fitted normalization over a
/// labeled synthetic corpus.
pub fn encoded_corpus(
    sessions: usize,
    seed: u64,
) -> (Dataset, NormalizationSpec, Vec<FullFeatureRecord>) {
    let generated = generate_sessions(
        &SynthConfig { sessions, feature_noise: 0.2, ..SynthConfig::default() },
        seed,
    );
    let mut window = HostWindow::new();
    let records: Vec<FullFeatureRecord> = generated
        .iter()
        .map(|(s, _)| FullFeatureRecord {
            host: window.update_and_extract(s),
            session: s.clone(),
        })
        .collect();
    let spec = fit_normalization(&records).expect("non-empty corpus");
    let data = Dataset::new(
        records.iter().map(|r| strip_and_encode(r, &spec)).collect(),
        generated.iter().map(|(_, l)| *l).collect(),
        spec.fingerprint(),
    )
    .expect("valid dataset");
    (data, spec, records)
}

/// One model per algorithm, trained on a balanced slice of the corpus. The
/// SMO pass budget is capped: predict-path cost is what the benchmarks
/// measure, and an unconverged boundary exercises it just as well.
pub fn trained_models(data: &Dataset, seed: u64) -> Vec<(&'static str, TrainedModel)> {
    let balanced = downsample(data, sub_seed(seed, "downsample")).expect("two classes present");
    let mut models = Vec::new();
    for algo in [Algorithm::Dt, Algorithm::Rf, Algorithm::Nb] {
        models.push((
            algo.name(),
            algo.train(&balanced, &[], sub_seed(seed, "train")).expect("training succeeds"),
        ));
    }
    models.push((
        "svm",
        train_svm(&balanced, &SVMParams { max_passes: 100, ..SVMParams::default() })
            .expect("training succeeds"),
    ));
    models.push((
        "knn",
        train_knn(&balanced, &KNNParams { neighbors_k: 4, inverse_distance_weighting_i: false })
            .expect("training succeeds"),
    ));
    models
}
