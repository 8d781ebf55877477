//! End-to-end orchestration: preprocess, augment, train, evaluate,
//! reproduce.
//!
//! Every command is a pure function of `(PipelineConfig, artifacts on
//! disk)`. Randomness is derived per purpose from the configured seed
//! (`derive_seed(rng_seed, "augment/mailbomb")` and the like), so commands
//! are reproducible independently of the order they run in, and every
//! artifact carries the config hash and seed that produced it. CSV artifacts
//! are written with deterministic ordering and shortest-roundtrip float
//! formatting: re-running a command with the same config and seed rewrites
//! them byte-identically.
//!
//! Artifact layout under the output directory:
//!
//! ```text
//! preprocess/{train_encoded.csv, test_encoded.csv, normalizer.json, summary.json}
//! augment/<type>/{synthesised.csv, augmented.csv, d_net.json, g_net.json,
//!                 loss_history.csv, manifest.json}
//! models/<name>.json
//! evaluate/<name>.json
//! reports/<experiment>.{csv, json}
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifiers::{predict, Model, TrainConfig};
use crate::dgnn::{self, TrainSchedule};
use crate::eval::{
    self, metrics, run_trials, ClassifierKind, ClassOutcome, TrialOutcome, TrialSpec,
};
use crate::kdd::{
    self, encode_features, partition_small_sample, ClassLabel, CoarseClass, FeatureVector,
    Normalizer, NormalizerAccumulator, SmallSamplePartition, FEATURE_DIM,
};
use crate::pgm;
use crate::rng::RandomSource;

/// Environment variable naming the dataset root; relative dataset paths
/// resolve against it.
pub const DATA_DIR_ENV: &str = "NID_DATA_DIR";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Kdd(#[from] kdd::KddError),
    #[error(transparent)]
    Pgm(#[from] pgm::PgmError),
    #[error(transparent)]
    Dgnn(#[from] dgnn::DgnnError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Classifier(#[from] crate::classifiers::ClassifierError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact {path}; run `{hint}` first")]
    MissingArtifact { path: String, hint: String },
    #[error("artifact {path} is malformed: {detail}")]
    MalformedArtifact { path: String, detail: String },
    #[error("unknown attack type {0:?} (not in the configured list)")]
    UnknownAttackType(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// The eight small-sample intrusion types used by default.
pub fn default_attack_types() -> Vec<String> {
    [
        "apache2",
        "mailbomb",
        "processtable",
        "mscan",
        "saint",
        "guesspasswd",
        "snmpgetattack",
        "snmpguess",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

/// Full pipeline configuration. Every field has a default and maps to a CLI
/// flag of the same name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Training-split file, plain or gzip.
    pub train_path: PathBuf,
    /// Test-split file, plain or gzip.
    pub test_path: PathBuf,
    pub attack_types: Vec<String>,
    /// Seed records selected per attack type (M).
    pub seeds_per_type: usize,
    /// Synthesised records drawn per type (N).
    pub synth_count: usize,
    /// Refined records generated per type.
    pub augment_target: usize,
    /// Burn-in iterations discarded by the Gibbs sampler (T).
    pub gibbs_burn_in: usize,
    pub schedule: TrainSchedule,
    pub linear_config: TrainConfig,
    pub dnn_config: TrainConfig,
    pub repeats: usize,
    /// Normal requests sampled per repeat for the binary experiments.
    pub binary_normals: usize,
    /// Normal requests per repeat for the 4-class linear experiments.
    pub multiclass_svm_normals: usize,
    /// Normal requests per repeat for the 4-class DNN experiments.
    pub multiclass_dnn_normals: usize,
    pub rng_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train_path: PathBuf::from("kddcup.data_10_percent"),
            test_path: PathBuf::from("corrected"),
            attack_types: default_attack_types(),
            seeds_per_type: 50,
            synth_count: 500,
            augment_target: 500,
            gibbs_burn_in: 500,
            schedule: TrainSchedule::default(),
            linear_config: TrainConfig::linear(),
            dnn_config: TrainConfig::dnn(),
            repeats: 15,
            binary_normals: 6000,
            multiclass_svm_normals: 6000,
            multiclass_dnn_normals: 12_000,
            rng_seed: 7,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.augment_target < self.seeds_per_type {
            return Err(PipelineError::Config(format!(
                "augment_target ({}) must be at least seeds_per_type ({})",
                self.augment_target, self.seeds_per_type
            )));
        }
        if self.attack_types.is_empty() {
            return Err(PipelineError::Config("attack_types is empty".into()));
        }
        Ok(())
    }

    /// Dataset path resolved against `NID_DATA_DIR` when relative.
    pub fn resolve_data_path(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            return path.to_path_buf();
        }
        match std::env::var_os(DATA_DIR_ENV) {
            Some(root) => Path::new(&root).join(path),
            None => path.to_path_buf(),
        }
    }

    /// SHA-256 over the canonical config JSON with the output directory
    /// cleared (where artifacts land is not part of what they contain).
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    fn preprocess_dir(&self) -> PathBuf {
        self.out_dir.join("preprocess")
    }

    fn augment_dir(&self, attack: &str) -> PathBuf {
        self.out_dir.join("augment").join(attack)
    }

    fn reports_dir(&self) -> PathBuf {
        self.out_dir.join("reports")
    }

    fn models_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }
}

/// Stable per-purpose seed derivation, so each command consumes an
/// independent stream no matter which other commands ran before it.
pub fn derive_seed(base: u64, purpose: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

// ---------------------------------------------------------------------------
// preprocess

/// On-disk wrapper for the fitted normalizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizerArtifact {
    pub config_hash: String,
    pub rng_seed: u64,
    pub normalizer: Normalizer,
}

/// Class counts and artifact paths produced by preprocessing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub config_hash: String,
    pub rng_seed: u64,
    pub train_records: usize,
    pub test_records: usize,
    pub train_coarse_counts: BTreeMap<String, usize>,
    pub test_coarse_counts: BTreeMap<String, usize>,
    pub train_fine_counts: BTreeMap<String, usize>,
    pub test_fine_counts: BTreeMap<String, usize>,
}

/// Parse and encode both splits, fit the normalizer on the training split,
/// and persist the encoded matrices, the normalizer, and a count summary.
pub fn cmd_preprocess(cfg: &PipelineConfig) -> Result<PreprocessSummary, PipelineError> {
    cfg.validate()?;
    let dir = cfg.preprocess_dir();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let hash = cfg.config_hash();

    let mut acc = NormalizerAccumulator::new(FEATURE_DIM);
    let (train_coarse, train_fine, train_records) = encode_split(
        cfg,
        &cfg.resolve_data_path(&cfg.train_path),
        &dir.join("train_encoded.csv"),
        &hash,
        Some(&mut acc),
    )?;
    let (test_coarse, test_fine, test_records) = encode_split(
        cfg,
        &cfg.resolve_data_path(&cfg.test_path),
        &dir.join("test_encoded.csv"),
        &hash,
        None,
    )?;
    let normalizer = acc.finish()?;
    let normalizer_path = dir.join("normalizer.json");
    write_json(
        &normalizer_path,
        &NormalizerArtifact {
            config_hash: hash.clone(),
            rng_seed: cfg.rng_seed,
            normalizer,
        },
    )?;

    let summary = PreprocessSummary {
        config_hash: hash,
        rng_seed: cfg.rng_seed,
        train_records,
        test_records,
        train_coarse_counts: train_coarse,
        test_coarse_counts: test_coarse,
        train_fine_counts: train_fine,
        test_fine_counts: test_fine,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

type SplitCounts = (BTreeMap<String, usize>, BTreeMap<String, usize>, usize);

fn encode_split(
    cfg: &PipelineConfig,
    input: &Path,
    output: &Path,
    config_hash: &str,
    mut normalizer_acc: Option<&mut NormalizerAccumulator>,
) -> Result<SplitCounts, PipelineError> {
    let reader = kdd::open_dataset(input)?;
    let mut writer = artifact_writer(output, config_hash, cfg.rng_seed)?;
    writeln!(writer, "{}", encoded_header()).map_err(io_err(output))?;
    let mut coarse_counts = BTreeMap::new();
    let mut fine_counts = BTreeMap::new();
    let mut total = 0usize;
    for record in kdd::parse_iter(reader) {
        let record = record?;
        let (fv, label) = encode_features(&record)?;
        if let Some(acc) = normalizer_acc.as_deref_mut() {
            acc.push(&fv);
        }
        writeln!(writer, "{}", encoded_line(&fv, &label)).map_err(io_err(output))?;
        *coarse_counts
            .entry(label.coarse.name().to_string())
            .or_insert(0) += 1;
        *fine_counts.entry(label.fine.clone()).or_insert(0) += 1;
        total += 1;
    }
    writer.flush().map_err(io_err(output))?;
    Ok((coarse_counts, fine_counts, total))
}

fn encoded_header() -> String {
    let mut header = String::new();
    for i in 0..FEATURE_DIM {
        let _ = write!(header, "{},", kdd::feature_name(i));
    }
    header.push_str("coarse,fine");
    header
}

fn encoded_line(fv: &FeatureVector, label: &ClassLabel) -> String {
    let mut line = String::new();
    for v in fv.values() {
        let _ = write!(line, "{v},");
    }
    let _ = write!(line, "{},{}", label.coarse.name(), label.fine);
    line
}

/// Load an encoded split back into memory.
pub fn load_encoded(path: &Path) -> Result<Vec<(FeatureVector, ClassLabel)>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|_| PipelineError::MissingArtifact {
        path: path.display().to_string(),
        hint: "nid preprocess".into(),
    })?;
    let malformed = |detail: &str| PipelineError::MalformedArtifact {
        path: path.display().to_string(),
        detail: detail.to_string(),
    };
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with(kdd::feature_name(0)) || line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').collect();
        if tokens.len() != FEATURE_DIM + 2 {
            return Err(malformed("wrong column count"));
        }
        let mut values = Vec::with_capacity(FEATURE_DIM);
        for token in &tokens[..FEATURE_DIM] {
            values.push(
                token
                    .parse::<f64>()
                    .map_err(|_| malformed("non-numeric feature"))?,
            );
        }
        let fine = tokens[FEATURE_DIM + 1].to_string();
        let coarse =
            kdd::coarse_of(&fine).ok_or_else(|| malformed("unknown fine label"))?;
        out.push((
            FeatureVector::new(values)?,
            ClassLabel { coarse, fine },
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// augment

/// Which stage of the augmentation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentStage {
    /// Gibbs synthesis only.
    Pgm,
    /// Adversarial refinement of an existing synthesised set.
    Dgnn,
    /// Both stages.
    Full,
}

/// Provenance manifest written next to augmentation artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentManifest {
    pub config_hash: String,
    pub rng_seed: u64,
    pub attack_type: String,
    pub seed_records: usize,
    pub synthesised: usize,
    pub augmented: usize,
    pub gibbs_burn_in: usize,
    pub seed_hash: String,
    pub generator_checkpoint: Option<String>,
}

/// Run the augmentation pipeline for one attack type: select the fixed seed
/// records, Gibbs-sample the synthesised pool, adversarially refine it, and
/// persist every artifact with provenance.
pub fn cmd_augment(
    cfg: &PipelineConfig,
    attack: &str,
    stage: AugmentStage,
) -> Result<AugmentManifest, PipelineError> {
    cfg.validate()?;
    if !cfg.attack_types.iter().any(|t| t == attack) {
        return Err(PipelineError::UnknownAttackType(attack.to_string()));
    }
    let dir = cfg.augment_dir(attack);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let hash = cfg.config_hash();

    let partition = load_partition(cfg)?;
    let seeds = kdd::to_matrix(&partition.seed_intrusions[attack]);
    let seed_hash = matrix_hash(&seeds);

    let synth_path = dir.join("synthesised.csv");
    let synthesised = match stage {
        AugmentStage::Pgm | AugmentStage::Full => {
            let mut rng = RandomSource::new(derive_seed(
                cfg.rng_seed,
                &format!("augment/pgm/{attack}"),
            ));
            let set = pgm::gibbs_generate(&mut rng, &seeds, cfg.synth_count, cfg.gibbs_burn_in)?;
            write_matrix_csv(&synth_path, &set.samples, &hash, cfg.rng_seed)?;
            set.samples
        }
        AugmentStage::Dgnn => read_matrix_csv(&synth_path, "nid augment pgm")?,
    };

    let mut manifest = AugmentManifest {
        config_hash: hash.clone(),
        rng_seed: cfg.rng_seed,
        attack_type: attack.to_string(),
        seed_records: seeds.nrows(),
        synthesised: synthesised.nrows(),
        augmented: 0,
        gibbs_burn_in: cfg.gibbs_burn_in,
        seed_hash,
        generator_checkpoint: None,
    };

    if matches!(stage, AugmentStage::Dgnn | AugmentStage::Full) {
        let mut rng = RandomSource::new(derive_seed(
            cfg.rng_seed,
            &format!("augment/dgnn/{attack}"),
        ));
        let trained = match dgnn::train_dgnn(&mut rng, &seeds, &synthesised, &cfg.schedule) {
            Ok(t) => t,
            Err(dgnn::DgnnError::Diverged {
                iteration,
                phase,
                value,
                history_len,
                history,
            }) => {
                // Persist the loss history before surfacing the abort.
                write_loss_history(&dir.join("loss_history.csv"), &history, &hash, cfg.rng_seed)?;
                return Err(dgnn::DgnnError::Diverged {
                    iteration,
                    phase,
                    value,
                    history_len,
                    history: Vec::new(),
                }
                .into());
            }
            Err(other) => return Err(other.into()),
        };
        write_loss_history(
            &dir.join("loss_history.csv"),
            &trained.history,
            &hash,
            cfg.rng_seed,
        )?;
        write_checkpoint(
            &dir.join("d_net.json"),
            &trained.pair.d_net.to_checkpoint_json(),
            &hash,
            cfg.rng_seed,
        )?;
        write_checkpoint(
            &dir.join("g_net.json"),
            &trained.pair.g_net.to_checkpoint_json(),
            &hash,
            cfg.rng_seed,
        )?;
        let augmented = dgnn::generate_augmented(
            &mut rng,
            &trained.pair,
            &synthesised,
            cfg.augment_target,
        )?;
        write_matrix_csv(
            &dir.join("augmented.csv"),
            &augmented.samples,
            &hash,
            cfg.rng_seed,
        )?;
        manifest.augmented = augmented.samples.nrows();
        manifest.generator_checkpoint = Some(augmented.generator_checkpoint);
    }

    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Rebuild the deterministic seed/test partition from the encoded artifacts.
pub fn load_partition(cfg: &PipelineConfig) -> Result<SmallSamplePartition, PipelineError> {
    let dir = cfg.preprocess_dir();
    let train = load_encoded(&dir.join("train_encoded.csv"))?;
    let test = load_encoded(&dir.join("test_encoded.csv"))?;
    let mut types = cfg.attack_types.clone();
    types.sort();
    let mut rng = RandomSource::new(derive_seed(cfg.rng_seed, "partition"));
    Ok(partition_small_sample(
        &train,
        &test,
        &types,
        cfg.seeds_per_type,
        &mut rng,
    )?)
}

// ---------------------------------------------------------------------------
// experiments

/// The three reproduction experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Binary,
    MulticlassSvm,
    MulticlassDnn,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Binary => "binary",
            Experiment::MulticlassSvm => "multiclass-svm",
            Experiment::MulticlassDnn => "multiclass-dnn",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "binary" => Some(Self::Binary),
            "multiclass-svm" => Some(Self::MulticlassSvm),
            "multiclass-dnn" => Some(Self::MulticlassDnn),
            _ => None,
        }
    }
}

/// How the intrusion side of a training set is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    /// The raw seed records only.
    None,
    /// Gibbs-synthesised records.
    Pgm,
    /// Adversarially refined records.
    Da,
}

impl AugmentMode {
    pub fn tag(self) -> &'static str {
        match self {
            AugmentMode::None => "",
            AugmentMode::Pgm => "pgm-",
            AugmentMode::Da => "da-",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "none" => Some(Self::None),
            "pgm" => Some(Self::Pgm),
            "da" => Some(Self::Da),
            _ => None,
        }
    }
}

/// One report row: a class scored under one model variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    /// Intrusion type (binary) or coarse category (multiclass).
    pub subject: String,
    /// Model variant, e.g. `nid-svm` or `nid-da-svm`.
    pub model: String,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub precision_mean: Option<f64>,
    pub precision_std: Option<f64>,
    pub recall_mean: Option<f64>,
    pub recall_std: Option<f64>,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub accepted_runs: usize,
    pub rejected_runs: usize,
}

impl ReportRow {
    fn from_outcome(subject: &str, model: &str, class: &ClassOutcome, outcome: &TrialOutcome) -> Self {
        let split = |a: Option<eval::Aggregate>| (a.map(|v| v.mean), a.map(|v| v.std));
        let (accuracy_mean, accuracy_std) = split(class.accuracy);
        let (precision_mean, precision_std) = split(class.precision);
        let (recall_mean, recall_std) = split(class.recall);
        let (f1_mean, f1_std) = split(class.f1);
        Self {
            subject: subject.to_string(),
            model: model.to_string(),
            accuracy_mean,
            accuracy_std,
            precision_mean,
            precision_std,
            recall_mean,
            recall_std,
            f1_mean,
            f1_std,
            accepted_runs: outcome.accepted.len(),
            rejected_runs: outcome.rejected.len(),
        }
    }

    /// Table cell strings following the undefined-metric convention:
    /// precision/recall print `0.00`, F1 prints `-`.
    pub fn rendered(&self) -> [String; 4] {
        let cell = |mean: Option<f64>, std: Option<f64>, undefined: &str| match (mean, std) {
            (Some(m), Some(s)) => format!("{:.2} ± {:.2}", m * 100.0, s * 100.0),
            _ => undefined.to_string(),
        };
        [
            cell(self.accuracy_mean, self.accuracy_std, "0.00"),
            cell(self.precision_mean, self.precision_std, "0.00"),
            cell(self.recall_mean, self.recall_std, "0.00"),
            cell(self.f1_mean, self.f1_std, "-"),
        ]
    }
}

/// A full experiment report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub rng_seed: u64,
    pub experiment: String,
    pub repeats: usize,
    pub rows: Vec<ReportRow>,
}

/// Everything loaded once per reproduce run.
struct ExperimentData {
    partition: SmallSamplePartition,
    normalizer: Normalizer,
    /// Per attack type: raw seeds, synthesised, augmented (the latter two
    /// present when the corresponding artifacts exist).
    seeds: BTreeMap<String, Array2<f64>>,
    synthesised: BTreeMap<String, Array2<f64>>,
    augmented: BTreeMap<String, Array2<f64>>,
    normal_pool: Array2<f64>,
}

fn load_experiment_data(
    cfg: &PipelineConfig,
    need: AugmentMode,
) -> Result<ExperimentData, PipelineError> {
    let normalizer_path = cfg.preprocess_dir().join("normalizer.json");
    let normalizer = read_json::<NormalizerArtifact>(&normalizer_path, "nid preprocess")?.normalizer;
    let partition = load_partition(cfg)?;
    let normal_pool = kdd::to_matrix(&partition.normal_pool);

    let mut seeds = BTreeMap::new();
    let mut synthesised = BTreeMap::new();
    let mut augmented = BTreeMap::new();
    let mut types = cfg.attack_types.clone();
    types.sort();
    for attack in &types {
        seeds.insert(
            attack.clone(),
            kdd::to_matrix(&partition.seed_intrusions[attack]),
        );
        let dir = cfg.augment_dir(attack);
        if matches!(need, AugmentMode::Pgm) {
            synthesised.insert(
                attack.clone(),
                read_matrix_csv(&dir.join("synthesised.csv"), "nid augment pgm")?,
            );
        }
        if matches!(need, AugmentMode::Da) {
            augmented.insert(
                attack.clone(),
                read_matrix_csv(&dir.join("augmented.csv"), "nid augment full")?,
            );
        }
    }
    Ok(ExperimentData {
        partition,
        normalizer,
        seeds,
        synthesised,
        augmented,
        normal_pool,
    })
}

impl ExperimentData {
    fn training_matrix(
        &self,
        attack: &str,
        mode: AugmentMode,
    ) -> Result<Array2<f64>, PipelineError> {
        let map = match mode {
            AugmentMode::None => &self.seeds,
            AugmentMode::Pgm => &self.synthesised,
            AugmentMode::Da => &self.augmented,
        };
        map.get(attack)
            .cloned()
            .ok_or_else(|| PipelineError::UnknownAttackType(attack.to_string()))
    }
}

/// Binary test set for one attack type: test normals plus that type's
/// remaining test records.
fn binary_test_set(
    partition: &SmallSamplePartition,
    attack: &str,
) -> (Array2<f64>, Vec<usize>) {
    let rows: Vec<&FeatureVector> = partition
        .reduced_test
        .iter()
        .filter(|(_, l)| l.coarse == CoarseClass::Normal || l.fine == attack)
        .map(|(fv, _)| fv)
        .collect();
    let labels: Vec<usize> = partition
        .reduced_test
        .iter()
        .filter(|(_, l)| l.coarse == CoarseClass::Normal || l.fine == attack)
        .map(|(_, l)| usize::from(l.fine == attack))
        .collect();
    (stack_rows(&rows), labels)
}

/// Multiclass test set: every remaining test record whose coarse category
/// is NORMAL or one of the trained intrusion categories (`groups` order
/// fixes the class ids). User-to-root records and categories without a
/// trained class are excluded; with the default attack-type list the
/// classes are NORMAL, DOS, PROBE, R2L.
fn multiclass_test_set(
    partition: &SmallSamplePartition,
    groups: &[(CoarseClass, Vec<String>)],
) -> (Array2<f64>, Vec<usize>) {
    let class_of = |l: &ClassLabel| {
        if l.coarse == CoarseClass::Normal {
            return Some(0usize);
        }
        groups
            .iter()
            .position(|(coarse, _)| *coarse == l.coarse)
            .map(|idx| idx + 1)
    };
    let rows: Vec<&FeatureVector> = partition
        .reduced_test
        .iter()
        .filter(|(_, l)| class_of(l).is_some())
        .map(|(fv, _)| fv)
        .collect();
    let labels: Vec<usize> = partition
        .reduced_test
        .iter()
        .filter_map(|(_, l)| class_of(l))
        .collect();
    (stack_rows(&rows), labels)
}

fn stack_rows(rows: &[&FeatureVector]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), FEATURE_DIM));
    for (i, fv) in rows.iter().enumerate() {
        for (j, &v) in fv.values().iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Coarse-category grouping of the configured attack types, in fixed
/// class order DOS, PROBE, R2L.
fn coarse_groups(cfg: &PipelineConfig) -> Vec<(CoarseClass, Vec<String>)> {
    let mut groups: Vec<(CoarseClass, Vec<String>)> = vec![
        (CoarseClass::Dos, Vec::new()),
        (CoarseClass::Probe, Vec::new()),
        (CoarseClass::R2l, Vec::new()),
    ];
    let mut types = cfg.attack_types.clone();
    types.sort();
    for attack in &types {
        if let Some(coarse) = kdd::coarse_of(attack) {
            if let Some(slot) = groups.iter_mut().find(|(c, _)| *c == coarse) {
                slot.1.push(attack.clone());
            }
        }
    }
    groups.retain(|(_, members)| !members.is_empty());
    groups
}

/// Run one experiment table end to end and write `reports/<name>.{csv,json}`.
pub fn cmd_reproduce(
    cfg: &PipelineConfig,
    experiment: Experiment,
) -> Result<ExperimentReport, PipelineError> {
    cfg.validate()?;
    let hash = cfg.config_hash();
    let mut rows = Vec::new();
    match experiment {
        Experiment::Binary => {
            let baseline = load_experiment_data(cfg, AugmentMode::None)?;
            let da = load_experiment_data(cfg, AugmentMode::Da)?;
            let mut types = cfg.attack_types.clone();
            types.sort();
            for attack in &types {
                let (test_x, test_y) = binary_test_set(&baseline.partition, attack);
                for classifier in [ClassifierKind::Logistic, ClassifierKind::Svm] {
                    for mode in [AugmentMode::None, AugmentMode::Da] {
                        let data = match mode {
                            AugmentMode::Da => &da,
                            _ => &baseline,
                        };
                        let outcome = run_binary_trial(
                            cfg, data, attack, classifier, mode, &test_x, &test_y,
                        )?;
                        let model_name = format!("nid-{}{}", mode.tag(), classifier.name());
                        rows.push(ReportRow::from_outcome(
                            attack,
                            &model_name,
                            &outcome.per_class[1],
                            &outcome,
                        ));
                    }
                }
            }
        }
        Experiment::MulticlassSvm | Experiment::MulticlassDnn => {
            let classifier = if experiment == Experiment::MulticlassSvm {
                ClassifierKind::Svm
            } else {
                ClassifierKind::Dnn
            };
            for mode in [AugmentMode::None, AugmentMode::Pgm, AugmentMode::Da] {
                let data = load_experiment_data(cfg, mode)?;
                let outcome = run_multiclass_trial(cfg, &data, classifier, mode)?;
                let model_name = format!("nid-{}{}", mode.tag(), classifier.name());
                for class in &outcome.per_class {
                    rows.push(ReportRow::from_outcome(
                        &class.class,
                        &model_name,
                        class,
                        &outcome,
                    ));
                }
            }
        }
    }

    let report = ExperimentReport {
        config_hash: hash,
        rng_seed: cfg.rng_seed,
        experiment: experiment.name().to_string(),
        repeats: cfg.repeats,
        rows,
    };
    write_report(cfg, &report)?;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn run_binary_trial(
    cfg: &PipelineConfig,
    data: &ExperimentData,
    attack: &str,
    classifier: ClassifierKind,
    mode: AugmentMode,
    test_x: &Array2<f64>,
    test_y: &[usize],
) -> Result<TrialOutcome, PipelineError> {
    let trial = TrialSpec {
        classifier,
        config: cfg.linear_config.clone(),
        normalizer: &data.normalizer,
        normal_pool: &data.normal_pool,
        normals_per_repeat: cfg.binary_normals,
        intrusion_train: vec![(attack.to_string(), data.training_matrix(attack, mode)?)],
        test_features: test_x,
        test_labels: test_y,
    };
    let purpose = format!(
        "trial/binary/{attack}/{}/{}",
        classifier.name(),
        mode.tag()
    );
    let mut rng = RandomSource::new(derive_seed(cfg.rng_seed, &purpose));
    Ok(run_trials(&trial, cfg.repeats, &mut rng)?)
}

fn run_multiclass_trial(
    cfg: &PipelineConfig,
    data: &ExperimentData,
    classifier: ClassifierKind,
    mode: AugmentMode,
) -> Result<TrialOutcome, PipelineError> {
    let groups = coarse_groups(cfg);
    let (test_x, test_y) = multiclass_test_set(&data.partition, &groups);
    let mut intrusion_train = Vec::new();
    for (coarse, members) in groups {
        let matrices: Vec<Array2<f64>> = members
            .iter()
            .map(|attack| data.training_matrix(attack, mode))
            .collect::<Result<_, _>>()?;
        let total: usize = matrices.iter().map(Array2::nrows).sum();
        let mut stacked = Array2::zeros((total, FEATURE_DIM));
        let mut offset = 0;
        for m in &matrices {
            for row in m.rows() {
                stacked.row_mut(offset).assign(&row);
                offset += 1;
            }
        }
        intrusion_train.push((coarse.name().to_string(), stacked));
    }
    let normals = if classifier == ClassifierKind::Dnn {
        cfg.multiclass_dnn_normals
    } else {
        cfg.multiclass_svm_normals
    };
    let config = if classifier == ClassifierKind::Dnn {
        cfg.dnn_config.clone()
    } else {
        cfg.linear_config.clone()
    };
    let trial = TrialSpec {
        classifier,
        config,
        normalizer: &data.normalizer,
        normal_pool: &data.normal_pool,
        normals_per_repeat: normals,
        intrusion_train,
        test_features: &test_x,
        test_labels: &test_y,
    };
    let purpose = format!("trial/multiclass/{}/{}", classifier.name(), mode.tag());
    let mut rng = RandomSource::new(derive_seed(cfg.rng_seed, &purpose));
    Ok(run_trials(&trial, cfg.repeats, &mut rng)?)
}

// ---------------------------------------------------------------------------
// train / evaluate

/// Train a single model (one repeat of the corresponding experiment) and
/// save it under `models/`.
pub fn cmd_train(
    cfg: &PipelineConfig,
    classifier: ClassifierKind,
    experiment: Experiment,
    mode: AugmentMode,
    attack: Option<&str>,
) -> Result<PathBuf, PipelineError> {
    let (model, name) = train_single(cfg, classifier, experiment, mode, attack)?;
    let dir = cfg.models_dir();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let path = dir.join(format!("{name}.json"));
    let mut payload: serde_json::Value =
        serde_json::from_str(&model.to_json()).expect("model JSON is valid");
    payload["config_hash"] = cfg.config_hash().into();
    payload["rng_seed"] = cfg.rng_seed.into();
    fs::write(&path, serde_json::to_string_pretty(&payload).expect("valid"))
        .map_err(io_err(&path))?;
    Ok(path)
}

fn train_single(
    cfg: &PipelineConfig,
    classifier: ClassifierKind,
    experiment: Experiment,
    mode: AugmentMode,
    attack: Option<&str>,
) -> Result<(Model, String), PipelineError> {
    let data = load_experiment_data(cfg, mode)?;
    let (spec, name): (TrialSpec<'_>, String) = match experiment {
        Experiment::Binary => {
            let attack = attack.ok_or_else(|| {
                PipelineError::Config("binary training needs --attack-type".into())
            })?;
            let (test_x, test_y) = binary_test_set(&data.partition, attack);
            // the test set is unused for training; keep shapes valid
            let _ = (test_x, test_y);
            (
                TrialSpec {
                    classifier,
                    config: cfg.linear_config.clone(),
                    normalizer: &data.normalizer,
                    normal_pool: &data.normal_pool,
                    normals_per_repeat: cfg.binary_normals,
                    intrusion_train: vec![(
                        attack.to_string(),
                        data.training_matrix(attack, mode)?,
                    )],
                    test_features: &data.normal_pool, // placeholder, not scored
                    test_labels: &[],
                    },
                format!("binary-{attack}-nid-{}{}", mode.tag(), classifier.name()),
            )
        }
        _ => {
            return Err(PipelineError::Config(
                "single-model training currently covers the binary experiment".into(),
            ))
        }
    };
    let purpose = format!("train/{name}");
    let mut rng = RandomSource::new(derive_seed(cfg.rng_seed, &purpose));
    let model = eval::train_once(&spec, &mut rng)?;
    Ok((model, name))
}

/// Score a saved model on the experiment's test set and persist the metrics.
pub fn cmd_evaluate(
    cfg: &PipelineConfig,
    model_path: &Path,
    attack: &str,
) -> Result<PathBuf, PipelineError> {
    let text = fs::read_to_string(model_path).map_err(|_| PipelineError::MissingArtifact {
        path: model_path.display().to_string(),
        hint: "nid train".into(),
    })?;
    let model = Model::from_json(&text)?;
    let data = load_experiment_data(cfg, AugmentMode::None)?;
    let (test_x, test_y) = binary_test_set(&data.partition, attack);
    let mut normalized = test_x.clone();
    data.normalizer.apply_matrix(&mut normalized);
    let (preds, _) = predict(&model, &normalized)?;
    let counts = eval::confusion(test_y.as_slice(), &preds, &1)?;
    let report = metrics(&counts)?;

    let dir = cfg.out_dir.join("evaluate");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let stem = model_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "model".into());
    let out = dir.join(format!("{stem}-metrics.json"));
    let payload = serde_json::json!({
        "config_hash": cfg.config_hash(),
        "rng_seed": cfg.rng_seed,
        "attack_type": attack,
        "tp": counts.tp, "tn": counts.tn, "fp": counts.fp, "fn": counts.fn_,
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
    });
    fs::write(&out, serde_json::to_string_pretty(&payload).expect("valid"))
        .map_err(io_err(&out))?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// artifact I/O

fn artifact_writer(
    path: &Path,
    config_hash: &str,
    rng_seed: u64,
) -> Result<std::io::BufWriter<fs::File>, PipelineError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut writer = std::io::BufWriter::new(file);
    writeln!(writer, "# config_hash={config_hash} rng_seed={rng_seed}").map_err(io_err(path))?;
    Ok(writer)
}

/// Persist a network checkpoint with provenance keys added alongside the
/// versioned layer payload (readers ignore unknown keys).
fn write_checkpoint(
    path: &Path,
    checkpoint_json: &str,
    config_hash: &str,
    rng_seed: u64,
) -> Result<(), PipelineError> {
    let mut value: serde_json::Value =
        serde_json::from_str(checkpoint_json).expect("checkpoint JSON is valid");
    value["config_hash"] = config_hash.into();
    value["rng_seed"] = rng_seed.into();
    fs::write(path, value.to_string()).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value).expect("artifact serializes");
    fs::write(path, json).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(
    path: &Path,
    hint: &str,
) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|_| PipelineError::MissingArtifact {
        path: path.display().to_string(),
        hint: hint.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::MalformedArtifact {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Write a feature matrix as CSV with a provenance header comment.
pub fn write_matrix_csv(
    path: &Path,
    matrix: &Array2<f64>,
    config_hash: &str,
    rng_seed: u64,
) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut writer = std::io::BufWriter::new(file);
    writeln!(writer, "# config_hash={config_hash} rng_seed={rng_seed}").map_err(io_err(path))?;
    for row in matrix.rows() {
        let mut line = String::new();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            let _ = write!(line, "{v}");
        }
        writeln!(writer, "{line}").map_err(io_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

/// Read a feature matrix back from [`write_matrix_csv`] output.
pub fn read_matrix_csv(path: &Path, hint: &str) -> Result<Array2<f64>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|_| PipelineError::MissingArtifact {
        path: path.display().to_string(),
        hint: hint.to_string(),
    })?;
    let mut rows = Vec::new();
    let mut width = 0usize;
    for line in text.lines() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|_| PipelineError::MalformedArtifact {
            path: path.display().to_string(),
            detail: "non-numeric cell".into(),
        })?;
        if width == 0 {
            width = row.len();
        } else if row.len() != width {
            return Err(PipelineError::MalformedArtifact {
                path: path.display().to_string(),
                detail: "ragged rows".into(),
            });
        }
        rows.push(row);
    }
    let mut out = Array2::zeros((rows.len(), width));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

fn write_loss_history(
    path: &Path,
    history: &[dgnn::LossRecord],
    config_hash: &str,
    rng_seed: u64,
) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut writer = std::io::BufWriter::new(file);
    writeln!(writer, "# config_hash={config_hash} rng_seed={rng_seed}").map_err(io_err(path))?;
    writeln!(writer, "iteration,mode,step,v_value").map_err(io_err(path))?;
    for record in history {
        writeln!(
            writer,
            "{},{},{},{}",
            record.iteration,
            record.phase.name(),
            record.step.name(),
            record.value
        )
        .map_err(io_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

fn write_report(cfg: &PipelineConfig, report: &ExperimentReport) -> Result<(), PipelineError> {
    let dir = cfg.reports_dir();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_json(&dir.join(format!("{}.json", report.experiment)), report)?;

    let path = dir.join(format!("{}.csv", report.experiment));
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut writer = std::io::BufWriter::new(file);
    writeln!(
        writer,
        "# config_hash={} rng_seed={}",
        report.config_hash, report.rng_seed
    )
    .map_err(io_err(&path))?;
    writeln!(
        writer,
        "subject,model,accuracy,precision,recall,f1,accepted_runs,rejected_runs"
    )
    .map_err(io_err(&path))?;
    for row in &report.rows {
        let [acc, prec, rec, f1] = row.rendered();
        writeln!(
            writer,
            "{},{},{acc},{prec},{rec},{f1},{},{}",
            row.subject, row.model, row.accepted_runs, row.rejected_runs
        )
        .map_err(io_err(&path))?;
    }
    writer.flush().map_err(io_err(&path))
}

fn matrix_hash(matrix: &Array2<f64>) -> String {
    let mut hasher = Sha256::new();
    for &v in matrix.iter() {
        hasher.update(v.to_le_bytes());
    }
    format!("{:x}", hasher.finalize())
}
