//! Fit the Poisson-Gamma model to a handful of intrusion records and
//! Gibbs-sample a synthesised pool from the conjugate posterior.
//!
//! Run: cargo run --example pgm_synthesis

use std::path::Path;

use nid_augment::kdd::{self, encode_features, open_dataset, parse_records};
use nid_augment::pgm::{compute_posterior, estimate_prior, gibbs_generate};
use nid_augment::rng::RandomSource;

fn main() {
    // the fixture's guesspasswd records stand in for a scarce intrusion type
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture_train.csv");
    let records = parse_records(open_dataset(&path).unwrap()).unwrap();
    let seeds_vec: Vec<_> = records
        .iter()
        .filter(|r| kdd::canonical_label(&r.label) == "guesspasswd")
        .map(|r| encode_features(r).unwrap().0)
        .collect();
    let seeds = kdd::to_matrix(&seeds_vec);
    println!("seed records: {} x {} features", seeds.nrows(), seeds.ncols());

    // moment-matched prior: shape/rate reproduce each column's mean exactly
    let prior = estimate_prior(&seeds).unwrap();
    let pinned = prior.pinned.iter().filter(|p| p.is_some()).count();
    println!("prior fitted; {pinned} constant columns pinned");

    // conjugate update: shape grows by column sums, rate by the record count
    let posterior = compute_posterior(&seeds, &prior).unwrap();
    println!("posterior evidence: {} records", posterior.evidence);

    // synthesise a pool, discarding a burn-in prefix
    let mut rng = RandomSource::new(2024);
    let set = gibbs_generate(&mut rng, &seeds, 500, 500).unwrap();
    println!(
        "synthesised {} records (burn-in {})",
        set.provenance.count, set.provenance.burn_in
    );
    println!("seed hash: {}...", &set.provenance.seed_hash[..16]);

    // generated column means track the posterior-predictive means
    println!("\n{:<28} {:>10} {:>10}", "feature", "predictive", "generated");
    for (i, predictive) in posterior.mean().iter().enumerate().take(8) {
        let generated = set.samples.column(i).sum() / set.samples.nrows() as f64;
        println!(
            "{:<28} {predictive:>10.3} {generated:>10.3}",
            kdd::feature_name(i)
        );
    }

    // integer support: every generated value is a non-negative whole number
    // (pinned constants are reproduced verbatim)
    let all_integral = set
        .samples
        .iter()
        .all(|&v| v >= 0.0 && (v.fract() == 0.0 || seeds_has_constant(&prior, v)));
    println!("\nall values on the Poisson support: {all_integral}");
}

fn seeds_has_constant(prior: &nid_augment::pgm::GammaPrior, value: f64) -> bool {
    prior.pinned.iter().any(|p| *p == Some(value))
}
