//! The whole flow on the bundled fixture corpus: preprocess, partition,
//! synthesise, refine, train, evaluate, report.
//!
//! Equivalent to running the `nid` binary's preprocess / augment full /
//! reproduce subcommands with a fixture-scale configuration.
//!
//! Run: cargo run --release --example full_pipeline

use std::path::Path;

use nid_augment::classifiers::TrainConfig;
use nid_augment::dgnn::TrainSchedule;
use nid_augment::pipeline::{
    cmd_augment, cmd_preprocess, cmd_reproduce, AugmentStage, Experiment, PipelineConfig,
};

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let out = std::env::temp_dir().join("nid-full-pipeline-example");
    let cfg = PipelineConfig {
        train_path: data.join("fixture_train.csv"),
        test_path: data.join("fixture_test.csv"),
        attack_types: vec!["apache2".into(), "mailbomb".into(), "guesspasswd".into()],
        seeds_per_type: 30,
        synth_count: 150,
        augment_target: 150,
        gibbs_burn_in: 100,
        schedule: TrainSchedule {
            batch: 10,
            pretrain_iters: 1500,
            finetune_iters: 200,
            ..TrainSchedule::default()
        },
        linear_config: TrainConfig {
            epochs: 60,
            ..TrainConfig::linear()
        },
        repeats: 3,
        binary_normals: 500,
        rng_seed: 12,
        out_dir: out.clone(),
        ..PipelineConfig::default()
    };

    println!("config hash {}...", &cfg.config_hash()[..16]);

    let summary = cmd_preprocess(&cfg).unwrap();
    println!(
        "preprocess: {} training records, {} test records",
        summary.train_records, summary.test_records
    );

    for attack in &cfg.attack_types {
        let manifest = cmd_augment(&cfg, attack, AugmentStage::Full).unwrap();
        println!(
            "augment {attack}: {} seeds -> {} synthesised -> {} refined",
            manifest.seed_records, manifest.synthesised, manifest.augmented
        );
    }

    let report = cmd_reproduce(&cfg, Experiment::Binary).unwrap();
    println!("\nbinary report ({} repeats per row):", report.repeats);
    println!(
        "{:<14} {:<12} {:>16} {:>16} {:>16} {:>16}",
        "intrusion", "model", "accuracy", "precision", "recall", "f1"
    );
    for row in &report.rows {
        let [acc, prec, rec, f1] = row.rendered();
        println!(
            "{:<14} {:<12} {acc:>16} {prec:>16} {rec:>16} {f1:>16}",
            row.subject, row.model
        );
    }
    println!("\nartifacts under {}", out.display());
}
