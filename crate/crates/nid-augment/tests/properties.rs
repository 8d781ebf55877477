//! Property tests for structural invariants.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use proptest::prelude::*;

use nid_augment::classifiers::{predict, LinearKind, LinearModel, Model};
use nid_augment::kdd::{self, fit_normalizer, FeatureVector, FEATURE_DIM};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// Parsing the bundled fixture corpus and re-serializing reproduces every
/// line byte-identically.
#[test]
fn fixture_corpus_roundtrips_byte_identically() {
    for file in ["fixture_train.csv", "fixture_test.csv"] {
        let text = std::fs::read_to_string(fixture(file)).unwrap();
        let records = kdd::parse_records(std::io::Cursor::new(text.as_bytes())).unwrap();
        for (line, record) in text.lines().zip(&records) {
            assert_eq!(record.to_line(), line, "{file}");
        }
        assert_eq!(text.lines().count(), records.len());
    }
}

/// A checkpoint written with extra provenance keys still loads.
#[test]
fn checkpoint_with_provenance_keys_loads() {
    use nid_augment::neural::{Activation, DenseNet};
    use nid_augment::rng::RandomSource;
    let mut rng = RandomSource::new(1);
    let net = DenseNet::new(&[3, 4, 2], &[Activation::Relu, Activation::Softmax], &mut rng);
    let mut value: serde_json::Value = serde_json::from_str(&net.to_checkpoint_json()).unwrap();
    value["config_hash"] = "abc".into();
    value["rng_seed"] = 7.into();
    let restored = DenseNet::from_checkpoint_json(&value.to_string()).unwrap();
    assert_eq!(restored.dims(), net.dims());
}

proptest! {
    /// Record lines with arbitrary numeric tokens survive a parse/serialize
    /// round trip.
    #[test]
    fn record_line_roundtrip(values in proptest::collection::vec(0u32..100_000, 38), label_idx in 0usize..4) {
        let labels = ["normal", "smurf", "guesspasswd", "apache2"];
        let mut tokens: Vec<String> = Vec::with_capacity(41);
        let mut numeric = values.iter();
        for column in 0..41usize {
            if kdd::SYMBOLIC_COLUMNS.contains(&column) {
                tokens.push(["tcp", "http", "SF"][kdd::SYMBOLIC_COLUMNS.iter().position(|c| *c == column).unwrap()].to_string());
            } else {
                tokens.push(numeric.next().unwrap().to_string());
            }
        }
        let line = format!("{},{}.", tokens.join(","), labels[label_idx]);
        let records = kdd::parse_records(std::io::Cursor::new(line.clone())).unwrap();
        prop_assert_eq!(records[0].to_line(), line);
    }

    /// Applying then inverting the normalizer recovers inputs to within
    /// 1e-9 relative error, and discrete columns are untouched.
    #[test]
    fn normalizer_roundtrip(raw in proptest::collection::vec(0.0f64..1e6, 38 * 5)) {
        let train: Vec<FeatureVector> = raw
            .chunks(FEATURE_DIM)
            .map(|chunk| FeatureVector::new(chunk.to_vec()).unwrap())
            .collect();
        let norm = fit_normalizer(&train).unwrap();
        for fv in &train {
            let back = norm.invert(&norm.apply(fv));
            for (a, b) in fv.values().iter().zip(back.values()) {
                let scale = a.abs().max(1.0);
                prop_assert!((a - b).abs() / scale < 1e-9);
            }
        }
        // apply twice equals apply once on discrete columns
        let once = norm.apply(&train[0]);
        let twice = norm.apply(&once);
        for i in 0..FEATURE_DIM {
            if !norm.continuous_mask[i] {
                prop_assert_eq!(once.values()[i], twice.values()[i]);
            }
        }
    }

    /// One-vs-rest argmax labels are invariant under a constant shift of
    /// every class score.
    #[test]
    fn one_vs_rest_shift_invariance(
        weights in proptest::collection::vec(-5.0f64..5.0, 3 * 4),
        inputs in proptest::collection::vec(-10.0f64..10.0, 4 * 6),
        shift in -100.0f64..100.0,
    ) {
        let models: Vec<LinearModel> = weights
            .chunks(4)
            .enumerate()
            .map(|(c, w)| LinearModel {
                weights: w.to_vec(),
                bias: 0.3 * c as f64,
                kind: LinearKind::SvmHinge,
            })
            .collect();
        let shifted: Vec<LinearModel> = models
            .iter()
            .map(|m| LinearModel {
                weights: m.weights.clone(),
                bias: m.bias + shift,
                kind: m.kind,
            })
            .collect();
        let x = Array2::from_shape_vec((6, 4), inputs).unwrap();
        let (a, _) = predict(&Model::OneVsRest(models), &x).unwrap();
        let (b, _) = predict(&Model::OneVsRest(shifted), &x).unwrap();
        prop_assert_eq!(a, b);
    }
}
