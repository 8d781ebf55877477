//! Parse KDD-Cup-99 records, encode the 38 numeric features, and fit the
//! z-scoring normalizer.
//!
//! Run: cargo run --example parse_and_normalize

use std::collections::BTreeMap;
use std::path::Path;

use nid_augment::kdd::{
    self, encode_features, fit_normalizer, open_dataset, parse_records, FEATURE_DIM,
};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture_train.csv");
    let records = parse_records(open_dataset(&path).unwrap()).unwrap();
    println!("parsed {} records from {}", records.len(), path.display());

    // class distribution
    let mut coarse_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut encoded = Vec::new();
    for record in &records {
        let (features, label) = encode_features(record).unwrap();
        *coarse_counts.entry(label.coarse.name()).or_insert(0) += 1;
        encoded.push((features, label));
    }
    println!("\nclass counts:");
    for (class, count) in &coarse_counts {
        println!("  {class:8} {count}");
    }

    // the symbolic columns are gone; trace a feature back to its wire column
    println!("\nfeature traceability:");
    for idx in [0, 1, 4, 37] {
        println!(
            "  feature {idx:2} <- wire column {:2} ({})",
            kdd::source_column(idx),
            kdd::feature_name(idx)
        );
    }

    // fit the normalizer on the training vectors
    let train: Vec<_> = encoded.iter().map(|(fv, _)| fv.clone()).collect();
    let normalizer = fit_normalizer(&train).unwrap();
    let continuous = normalizer.continuous_mask.iter().filter(|&&m| m).count();
    println!(
        "\nnormalizer: {continuous} continuous features z-scored, {} discrete pass through",
        FEATURE_DIM - continuous
    );

    // z-scoring is invertible
    let sample = &train[0];
    let z = normalizer.apply(sample);
    let back = normalizer.invert(&z);
    let max_err = sample
        .values()
        .iter()
        .zip(back.values())
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0f64, f64::max);
    println!("roundtrip max relative error: {max_err:.2e}");

    // records re-serialize byte-identically
    let line = records[0].to_line();
    println!("\nfirst record round-trips: {}", line.len() > 40);
}
