//! KDD-Cup-99 record handling.
//!
//! The wire format is one comma-separated record per line: 41 feature
//! columns followed by an attack-name label with a trailing period. Three
//! columns (`protocol_type`, `service`, `flag`) are symbolic and dropped at
//! encoding time; the remaining 38 numeric columns form the feature vector
//! used by every downstream stage. Fine attack names are canonicalized by
//! stripping the trailing period and any underscores, so `guess_passwd.`
//! becomes `guesspasswd`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RandomSource;

/// Feature-space dimension after the symbolic columns are dropped.
pub const FEATURE_DIM: usize = 38;

/// Total columns per record: 41 features plus the label.
pub const RECORD_COLUMNS: usize = 42;

/// Column indices (within the 41 feature columns) that hold symbolic values.
pub const SYMBOLIC_COLUMNS: [usize; 3] = [1, 2, 3];

/// Names of all 41 feature columns in wire order.
pub const COLUMN_NAMES: [&str; 41] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

#[derive(Debug, Error)]
pub enum KddError {
    #[error("line {line}: expected {RECORD_COLUMNS} comma-separated tokens, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: input is not valid UTF-8")]
    Decode { line: usize },
    #[error("line {line}: {source}")]
    Io {
        line: usize,
        source: std::io::Error,
    },
    #[error("empty label token")]
    EmptyLabel,
    #[error("column {column} ({name}): cannot parse {token:?} as a number")]
    NumericParse {
        column: usize,
        name: &'static str,
        token: String,
    },
    #[error("column {column} ({name}): value {value} is not finite and non-negative")]
    NumericRange {
        column: usize,
        name: &'static str,
        value: f64,
    },
    #[error("unknown attack label {0:?}")]
    UnknownLabel(String),
    #[error("cannot fit a normalizer on an empty training set")]
    EmptyTrainingSet,
    #[error("feature vector has {found} entries, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("attack type {attack:?} has only {available} records across train and test, need {needed}")]
    InsufficientRecords {
        attack: String,
        available: usize,
        needed: usize,
    },
    #[error("opening {path}: {source}")]
    Open {
        path: String,
        source: std::io::Error,
    },
}

/// One unparsed record: the 41 raw feature tokens plus the label with its
/// trailing period stripped. Tokens and the label are kept verbatim
/// (canonicalization happens at encoding time) so a record re-serializes
/// byte-identically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub values: Vec<String>,
    pub label: String,
}

impl RawRecord {
    /// Reproduce the wire line this record was parsed from.
    pub fn to_line(&self) -> String {
        let mut line = self.values.join(",");
        line.push(',');
        line.push_str(&self.label);
        line.push('.');
        line
    }
}

/// Coarse attack category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoarseClass {
    Normal,
    Dos,
    Probe,
    U2r,
    R2l,
}

impl CoarseClass {
    pub fn name(self) -> &'static str {
        match self {
            CoarseClass::Normal => "NORMAL",
            CoarseClass::Dos => "DOS",
            CoarseClass::Probe => "PROBE",
            CoarseClass::U2r => "U2R",
            CoarseClass::R2l => "R2L",
        }
    }
}

/// Record label: the canonical fine attack name and its coarse category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub coarse: CoarseClass,
    pub fine: String,
}

/// Fine-to-coarse mapping over the full label universe of the training and
/// corrected test files. Names are canonical (trailing period and
/// underscores removed).
const LABEL_MAP: &[(&str, CoarseClass)] = &[
    ("normal", CoarseClass::Normal),
    // denial of service
    ("back", CoarseClass::Dos),
    ("land", CoarseClass::Dos),
    ("neptune", CoarseClass::Dos),
    ("pod", CoarseClass::Dos),
    ("smurf", CoarseClass::Dos),
    ("teardrop", CoarseClass::Dos),
    ("apache2", CoarseClass::Dos),
    ("mailbomb", CoarseClass::Dos),
    ("processtable", CoarseClass::Dos),
    ("udpstorm", CoarseClass::Dos),
    // probing
    ("ipsweep", CoarseClass::Probe),
    ("nmap", CoarseClass::Probe),
    ("portsweep", CoarseClass::Probe),
    ("satan", CoarseClass::Probe),
    ("mscan", CoarseClass::Probe),
    ("saint", CoarseClass::Probe),
    // remote to local
    ("ftpwrite", CoarseClass::R2l),
    ("guesspasswd", CoarseClass::R2l),
    ("imap", CoarseClass::R2l),
    ("multihop", CoarseClass::R2l),
    ("phf", CoarseClass::R2l),
    ("spy", CoarseClass::R2l),
    ("warezclient", CoarseClass::R2l),
    ("warezmaster", CoarseClass::R2l),
    ("sendmail", CoarseClass::R2l),
    ("named", CoarseClass::R2l),
    ("snmpgetattack", CoarseClass::R2l),
    ("snmpguess", CoarseClass::R2l),
    ("worm", CoarseClass::R2l),
    ("xlock", CoarseClass::R2l),
    ("xsnoop", CoarseClass::R2l),
    // user to root
    ("bufferoverflow", CoarseClass::U2r),
    ("loadmodule", CoarseClass::U2r),
    ("perl", CoarseClass::U2r),
    ("rootkit", CoarseClass::U2r),
    ("httptunnel", CoarseClass::U2r),
    ("ps", CoarseClass::U2r),
    ("sqlattack", CoarseClass::U2r),
    ("xterm", CoarseClass::U2r),
];

/// Canonical fine name: trailing period stripped, underscores removed,
/// lowercased.
pub fn canonical_label(raw: &str) -> String {
    raw.trim()
        .trim_end_matches('.')
        .chars()
        .filter(|c| *c != '_')
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Map a canonical fine name to its coarse category.
pub fn coarse_of(fine: &str) -> Option<CoarseClass> {
    LABEL_MAP
        .iter()
        .find(|(name, _)| *name == fine)
        .map(|(_, c)| *c)
}

/// Encoded 38-dimensional feature vector. Entry `i` comes from wire column
/// [`source_column`]`(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, KddError> {
        if values.len() != FEATURE_DIM {
            return Err(KddError::Dimension {
                expected: FEATURE_DIM,
                found: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Wire column index that feature `feature_idx` was read from.
pub fn source_column(feature_idx: usize) -> usize {
    assert!(feature_idx < FEATURE_DIM);
    (0..41)
        .filter(|c| !SYMBOLIC_COLUMNS.contains(c))
        .nth(feature_idx)
        .unwrap()
}

/// Name of the wire column behind feature `feature_idx`.
pub fn feature_name(feature_idx: usize) -> &'static str {
    COLUMN_NAMES[source_column(feature_idx)]
}

/// Open a dataset file, transparently decompressing gzip (detected from the
/// two-byte magic header, not the extension).
pub fn open_dataset(path: &Path) -> Result<Box<dyn BufRead>, KddError> {
    let wrap = |source| KddError::Open {
        path: path.display().to_string(),
        source,
    };
    let mut file = File::open(path).map_err(wrap)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(wrap)?;
    let file = File::open(path).map_err(wrap)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(flate2::read::GzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Iterate records from a reader without materializing the whole file.
/// Blank lines are skipped; errors carry the 1-based line number.
pub fn parse_iter<R: BufRead>(reader: R) -> impl Iterator<Item = Result<RawRecord, KddError>> {
    reader
        .split(b'\n')
        .enumerate()
        .filter_map(|(idx, chunk)| {
            let line_no = idx + 1;
            let bytes = match chunk {
                Ok(b) => b,
                Err(source) => {
                    return Some(Err(KddError::Io {
                        line: line_no,
                        source,
                    }))
                }
            };
            let text = match std::str::from_utf8(&bytes) {
                Ok(t) => t.trim_end_matches('\r'),
                Err(_) => return Some(Err(KddError::Decode { line: line_no })),
            };
            if text.trim().is_empty() {
                return None;
            }
            Some(parse_line(text, line_no))
        })
}

fn parse_line(text: &str, line_no: usize) -> Result<RawRecord, KddError> {
    let tokens: Vec<&str> = text.split(',').collect();
    if tokens.len() != RECORD_COLUMNS {
        return Err(KddError::ColumnCount {
            line: line_no,
            found: tokens.len(),
        });
    }
    let label = tokens[RECORD_COLUMNS - 1]
        .trim()
        .trim_end_matches('.')
        .to_string();
    if label.is_empty() {
        return Err(KddError::EmptyLabel);
    }
    Ok(RawRecord {
        values: tokens[..RECORD_COLUMNS - 1]
            .iter()
            .map(|t| t.to_string())
            .collect(),
        label,
    })
}

/// Parse an entire stream into memory. Prefer [`parse_iter`] for the full
/// dataset files.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<RawRecord>, KddError> {
    parse_iter(reader).collect()
}

/// Drop the symbolic columns, parse the 38 numeric ones in wire order, and
/// resolve the label.
pub fn encode_features(record: &RawRecord) -> Result<(FeatureVector, ClassLabel), KddError> {
    let mut values = Vec::with_capacity(FEATURE_DIM);
    for (column, token) in record.values.iter().enumerate() {
        if SYMBOLIC_COLUMNS.contains(&column) {
            continue;
        }
        let name = COLUMN_NAMES[column];
        let value: f64 = token.parse().map_err(|_| KddError::NumericParse {
            column,
            name,
            token: token.clone(),
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(KddError::NumericRange {
                column,
                name,
                value,
            });
        }
        values.push(value);
    }
    let fine = canonical_label(&record.label);
    let coarse = coarse_of(&fine).ok_or_else(|| KddError::UnknownLabel(record.label.clone()))?;
    Ok((FeatureVector::new(values)?, ClassLabel { coarse, fine }))
}

/// Per-feature z-scoring statistics. A feature is treated as continuous
/// (and z-scored) only if the training data shows a value outside {0, 1};
/// discrete 0/1 features pass through unchanged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub continuous_mask: Vec<bool>,
}

/// Lower bound on a continuous feature's standard deviation; near-constant
/// columns would otherwise blow up the transform.
pub const STD_FLOOR: f64 = 1e-8;

/// Streaming fit for [`Normalizer`] statistics (Welford updates), so the
/// full dataset never needs to sit in memory.
#[derive(Debug, Clone)]
pub struct NormalizerAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    continuous_mask: Vec<bool>,
}

impl NormalizerAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            continuous_mask: vec![false; dim],
        }
    }

    pub fn push(&mut self, fv: &FeatureVector) {
        self.count += 1;
        let n = self.count as f64;
        for (i, &v) in fv.values.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                self.continuous_mask[i] = true;
            }
            let delta = v - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (v - self.mean[i]);
        }
    }

    /// Finish with population variance (divide by the sample count).
    pub fn finish(self) -> Result<Normalizer, KddError> {
        if self.count == 0 {
            return Err(KddError::EmptyTrainingSet);
        }
        let n = self.count as f64;
        let std = self
            .m2
            .iter()
            .map(|m2| (m2 / n).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Normalizer {
            mean: self.mean,
            std,
            continuous_mask: self.continuous_mask,
        })
    }
}

/// Fit z-scoring statistics on training vectors. Variance is the population
/// convention (divide by the sample count).
pub fn fit_normalizer(train: &[FeatureVector]) -> Result<Normalizer, KddError> {
    if train.is_empty() {
        return Err(KddError::EmptyTrainingSet);
    }
    let mut acc = NormalizerAccumulator::new(train[0].values.len());
    for fv in train {
        acc.push(fv);
    }
    acc.finish()
}

impl Normalizer {
    /// Z-score continuous features; discrete ones pass through.
    pub fn apply(&self, fv: &FeatureVector) -> FeatureVector {
        let values = fv
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if self.continuous_mask[i] {
                    (v - self.mean[i]) / self.std[i]
                } else {
                    v
                }
            })
            .collect();
        FeatureVector { values }
    }

    /// Invert [`Normalizer::apply`].
    pub fn invert(&self, fv: &FeatureVector) -> FeatureVector {
        let values = fv
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if self.continuous_mask[i] {
                    v * self.std[i] + self.mean[i]
                } else {
                    v
                }
            })
            .collect();
        FeatureVector { values }
    }

    /// Apply to a rows-are-samples matrix in place.
    pub fn apply_matrix(&self, data: &mut ndarray::Array2<f64>) {
        for mut row in data.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                if self.continuous_mask[i] {
                    *v = (*v - self.mean[i]) / self.std[i];
                }
            }
        }
    }
}

/// Seed/test split for the small-sample protocol: per attack type the fixed
/// seed records, the test set with any moved records removed, and the pool
/// of normal training records.
#[derive(Debug, Clone)]
pub struct SmallSamplePartition {
    pub seed_intrusions: BTreeMap<String, Vec<FeatureVector>>,
    pub reduced_test: Vec<(FeatureVector, ClassLabel)>,
    pub normal_pool: Vec<FeatureVector>,
}

/// Select `m` seed records per attack type. Types with at least `m`
/// training records are seeded from the training split; otherwise seeds are
/// taken from the test split and removed from it (topping up from whatever
/// training records exist first). Selection order is deterministic given
/// the random source.
pub fn partition_small_sample(
    train: &[(FeatureVector, ClassLabel)],
    test: &[(FeatureVector, ClassLabel)],
    attack_types: &[String],
    m: usize,
    rng: &mut RandomSource,
) -> Result<SmallSamplePartition, KddError> {
    let mut seed_intrusions = BTreeMap::new();
    let mut removed_test_indices: Vec<usize> = Vec::new();

    for attack in attack_types {
        let train_idx: Vec<usize> = train
            .iter()
            .enumerate()
            .filter(|(_, (_, l))| &l.fine == attack)
            .map(|(i, _)| i)
            .collect();
        let test_idx: Vec<usize> = test
            .iter()
            .enumerate()
            .filter(|(_, (_, l))| &l.fine == attack)
            .map(|(i, _)| i)
            .collect();
        if train_idx.len() + test_idx.len() < m {
            return Err(KddError::InsufficientRecords {
                attack: attack.clone(),
                available: train_idx.len() + test_idx.len(),
                needed: m,
            });
        }
        let mut seeds = Vec::with_capacity(m);
        if train_idx.len() >= m {
            for pick in rng.sample_indices(train_idx.len(), m) {
                seeds.push(train[train_idx[pick]].0.clone());
            }
        } else {
            // Use every scarce training record, then draw the remainder from
            // the test split and reject those records from testing.
            for &i in &train_idx {
                seeds.push(train[i].0.clone());
            }
            let from_test = m - train_idx.len();
            for pick in rng.sample_indices(test_idx.len(), from_test) {
                let idx = test_idx[pick];
                seeds.push(test[idx].0.clone());
                removed_test_indices.push(idx);
            }
        }
        seed_intrusions.insert(attack.clone(), seeds);
    }

    removed_test_indices.sort_unstable();
    let mut reduced_test = Vec::with_capacity(test.len() - removed_test_indices.len());
    let mut removed = removed_test_indices.iter().peekable();
    for (i, entry) in test.iter().enumerate() {
        if removed.peek() == Some(&&i) {
            removed.next();
            continue;
        }
        reduced_test.push(entry.clone());
    }

    let normal_pool = train
        .iter()
        .filter(|(_, l)| l.coarse == CoarseClass::Normal)
        .map(|(fv, _)| fv.clone())
        .collect();

    Ok(SmallSamplePartition {
        seed_intrusions,
        reduced_test,
        normal_pool,
    })
}

/// Stack feature vectors into a rows-are-samples matrix.
pub fn to_matrix(vectors: &[FeatureVector]) -> ndarray::Array2<f64> {
    let dim = vectors.first().map_or(FEATURE_DIM, |v| v.values.len());
    let mut out = ndarray::Array2::zeros((vectors.len(), dim));
    for (i, fv) in vectors.iter().enumerate() {
        for (j, &v) in fv.values.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}
