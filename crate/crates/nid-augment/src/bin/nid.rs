//! Thin command-line front end over [`nid_augment::pipeline`].
//!
//! Configuration comes from an optional JSON file (`--config`), every key of
//! which can be overridden by the flag of the same name. On failure the
//! process prints a machine-readable JSON error object to stderr and exits
//! non-zero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nid_augment::eval::ClassifierKind;
use nid_augment::pipeline::{
    cmd_augment, cmd_evaluate, cmd_preprocess, cmd_reproduce, cmd_train, AugmentMode,
    AugmentStage, Experiment, PipelineConfig,
};

#[derive(Parser)]
#[command(
    name = "nid",
    about = "Data-augmentation-enhanced network intrusion detection pipeline",
    version
)]
struct Cli {
    /// JSON configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// One flag per configuration key.
#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    train_path: Option<PathBuf>,
    #[arg(long, global = true)]
    test_path: Option<PathBuf>,
    /// Comma-separated attack-type list.
    #[arg(long, global = true, value_delimiter = ',')]
    attack_types: Option<Vec<String>>,
    #[arg(long, global = true)]
    seeds_per_type: Option<usize>,
    #[arg(long, global = true)]
    synth_count: Option<usize>,
    #[arg(long, global = true)]
    augment_target: Option<usize>,
    #[arg(long, global = true)]
    gibbs_burn_in: Option<usize>,
    #[arg(long, global = true)]
    repeats: Option<usize>,
    #[arg(long, global = true)]
    binary_normals: Option<usize>,
    #[arg(long, global = true)]
    multiclass_svm_normals: Option<usize>,
    #[arg(long, global = true)]
    multiclass_dnn_normals: Option<usize>,
    #[arg(long, global = true)]
    rng_seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    // adversarial schedule
    #[arg(long, global = true)]
    batch: Option<usize>,
    #[arg(long, global = true)]
    d_steps: Option<usize>,
    #[arg(long, global = true)]
    g_steps: Option<usize>,
    #[arg(long, global = true)]
    pretrain_iters: Option<usize>,
    #[arg(long, global = true)]
    finetune_iters: Option<usize>,
    #[arg(long, global = true)]
    d_learning_rate: Option<f64>,
    #[arg(long, global = true)]
    g_learning_rate: Option<f64>,
    #[arg(long, global = true)]
    dropout: Option<f64>,

    // linear classifier config
    #[arg(long, global = true)]
    linear_epochs: Option<usize>,
    #[arg(long, global = true)]
    linear_batch_size: Option<usize>,
    #[arg(long, global = true)]
    linear_learning_rate: Option<f64>,
    #[arg(long, global = true)]
    linear_l2: Option<f64>,

    // DNN classifier config
    #[arg(long, global = true)]
    dnn_epochs: Option<usize>,
    #[arg(long, global = true)]
    dnn_batch_size: Option<usize>,
    #[arg(long, global = true)]
    dnn_learning_rate: Option<f64>,
    #[arg(long, global = true)]
    dnn_patience: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($field:ident, $target:expr) => {
                if let Some(v) = &self.$field {
                    $target = v.clone();
                }
            };
        }
        set!(train_path, cfg.train_path);
        set!(test_path, cfg.test_path);
        set!(attack_types, cfg.attack_types);
        set!(seeds_per_type, cfg.seeds_per_type);
        set!(synth_count, cfg.synth_count);
        set!(augment_target, cfg.augment_target);
        set!(gibbs_burn_in, cfg.gibbs_burn_in);
        set!(repeats, cfg.repeats);
        set!(binary_normals, cfg.binary_normals);
        set!(multiclass_svm_normals, cfg.multiclass_svm_normals);
        set!(multiclass_dnn_normals, cfg.multiclass_dnn_normals);
        set!(rng_seed, cfg.rng_seed);
        set!(out_dir, cfg.out_dir);
        set!(batch, cfg.schedule.batch);
        set!(d_steps, cfg.schedule.d_steps);
        set!(g_steps, cfg.schedule.g_steps);
        set!(pretrain_iters, cfg.schedule.pretrain_iters);
        set!(finetune_iters, cfg.schedule.finetune_iters);
        set!(d_learning_rate, cfg.schedule.d_learning_rate);
        set!(g_learning_rate, cfg.schedule.g_learning_rate);
        set!(dropout, cfg.schedule.dropout);
        set!(linear_epochs, cfg.linear_config.epochs);
        set!(linear_batch_size, cfg.linear_config.batch_size);
        set!(linear_learning_rate, cfg.linear_config.learning_rate);
        set!(linear_l2, cfg.linear_config.l2);
        set!(dnn_epochs, cfg.dnn_config.epochs);
        set!(dnn_batch_size, cfg.dnn_config.batch_size);
        set!(dnn_learning_rate, cfg.dnn_config.learning_rate);
        set!(dnn_patience, cfg.dnn_config.patience);
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse, encode and normalize the dataset files.
    Preprocess,
    /// Run the augmentation stages for one or all attack types.
    Augment {
        #[command(subcommand)]
        stage: AugmentCommand,
    },
    /// Train one model and save it under models/.
    Train {
        /// lr, svm or dnn
        #[arg(long)]
        classifier: String,
        /// none, pgm or da
        #[arg(long, default_value = "none")]
        augment: String,
        #[arg(long)]
        attack_type: String,
    },
    /// Score a saved model on an attack type's test set.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        attack_type: String,
    },
    /// Run a full experiment table: binary, multiclass-svm or multiclass-dnn.
    Reproduce {
        experiment: String,
    },
}

#[derive(Subcommand)]
enum AugmentCommand {
    /// Gibbs synthesis only.
    Pgm(AugmentTarget),
    /// Adversarial refinement of existing synthesised data.
    Dgnn(AugmentTarget),
    /// Synthesis followed by refinement.
    Full(AugmentTarget),
}

#[derive(Args)]
struct AugmentTarget {
    /// Attack type to augment; omit to run every configured type.
    #[arg(long)]
    attack_type: Option<String>,
}

fn run() -> Result<(), Box<dyn std::error::Error>> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_json_file(path)?,
        None => PipelineConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;

    match &cli.command {
        Command::Preprocess => {
            let summary = cmd_preprocess(&cfg)?;
            println!("encoded {} training and {} test records", summary.train_records, summary.test_records);
            println!("training class counts:");
            for (class, count) in &summary.train_coarse_counts {
                println!("  {class:8} {count}");
            }
            println!("test class counts:");
            for (class, count) in &summary.test_coarse_counts {
                println!("  {class:8} {count}");
            }
        }
        Command::Augment { stage } => {
            let (stage, target) = match stage {
                AugmentCommand::Pgm(t) => (AugmentStage::Pgm, t),
                AugmentCommand::Dgnn(t) => (AugmentStage::Dgnn, t),
                AugmentCommand::Full(t) => (AugmentStage::Full, t),
            };
            let types: Vec<String> = match &target.attack_type {
                Some(t) => vec![t.clone()],
                None => {
                    let mut all = cfg.attack_types.clone();
                    all.sort();
                    all
                }
            };
            for attack in &types {
                let manifest = cmd_augment(&cfg, attack, stage)?;
                println!(
                    "{attack}: {} seeds -> {} synthesised -> {} augmented",
                    manifest.seed_records, manifest.synthesised, manifest.augmented
                );
            }
        }
        Command::Train {
            classifier,
            augment,
            attack_type,
        } => {
            let kind = parse_classifier(classifier)?;
            let mode = AugmentMode::parse(augment)
                .ok_or_else(|| format!("unknown augment mode {augment:?}"))?;
            let path = cmd_train(&cfg, kind, Experiment::Binary, mode, Some(attack_type))?;
            println!("saved {}", path.display());
        }
        Command::Evaluate { model, attack_type } => {
            let path = cmd_evaluate(&cfg, model, attack_type)?;
            println!("wrote {}", path.display());
        }
        Command::Reproduce { experiment } => {
            let experiment = Experiment::parse(experiment)
                .ok_or_else(|| format!("unknown experiment {experiment:?}"))?;
            let report = cmd_reproduce(&cfg, experiment)?;
            println!(
                "{}: {} rows over {} repeats",
                report.experiment,
                report.rows.len(),
                report.repeats
            );
            for row in &report.rows {
                let [acc, prec, rec, f1] = row.rendered();
                println!(
                    "  {:16} {:16} acc {acc:16} prec {prec:16} rec {rec:16} f1 {f1}",
                    row.subject, row.model
                );
            }
        }
    }
    Ok(())
}

fn parse_classifier(text: &str) -> Result<ClassifierKind, String> {
    match text {
        "lr" => Ok(ClassifierKind::Logistic),
        "svm" => Ok(ClassifierKind::Svm),
        "dnn" => Ok(ClassifierKind::Dnn),
        other => Err(format!("unknown classifier {other:?} (expected lr, svm or dnn)")),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            let payload = serde_json::json!({ "error": error.to_string() });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
