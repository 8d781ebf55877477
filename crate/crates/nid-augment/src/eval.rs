//! Detection metrics and the repeated-trial experiment harness.
//!
//! Metrics follow the usual one-vs-rest counting with an explicit
//! undefined marker: precision and recall are `None` when their denominator
//! is zero rather than silently 0, and the report renderer prints the
//! conventional `0.00` / `-` forms for those cells.
//!
//! The harness trains and scores a classifier `repeats` times, each repeat
//! drawing a fresh sample of normal requests while the intrusion training
//! records stay fixed. Runs whose headline statistic (F1 of the intrusion
//! side, accuracy if F1 is undefined) strays more than three median absolute
//! deviations from the repeat median are rejected as anomalous, capped at a
//! third of the runs, and the survivors aggregate to mean and sample
//! standard deviation per metric.

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::classifiers::{
    predict, train_dnn_classifier, train_linear_multiclass, train_logreg, train_svm,
    ClassifierError, LinearKind, Model, TrainConfig,
};
use crate::kdd::Normalizer;
use crate::rng::RandomSource;

/// Reject at most `floor(repeats / 3)` runs.
pub const REJECTION_CAP_DIVISOR: usize = 3;

/// MAD multiplier for the anomaly threshold.
pub const REJECTION_MAD_FACTOR: f64 = 3.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels ({labels}) and predictions ({preds}) differ in length")]
    LengthMismatch { labels: usize, preds: usize },
    #[error("cannot compute metrics over zero records")]
    EmptyCounts,
    #[error("trial needs at least one repeat")]
    NoRuns,
    #[error("normal pool holds {have} records, repeat needs {need}")]
    NormalPoolTooSmall { have: usize, need: usize },
    #[error("trial spec needs at least one intrusion class")]
    NoIntrusionClasses,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// One-vs-rest confusion counts for a designated positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Count true/false positives/negatives with `positive` as the positive
/// class.
pub fn confusion<T: PartialEq>(
    labels: &[T],
    preds: &[T],
    positive: &T,
) -> Result<ConfusionCounts, EvalError> {
    if labels.len() != preds.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            preds: preds.len(),
        });
    }
    let mut counts = ConfusionCounts {
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
    };
    for (label, pred) in labels.iter().zip(preds) {
        match (label == positive, pred == positive) {
            (true, true) => counts.tp += 1,
            (false, false) => counts.tn += 1,
            (false, true) => counts.fp += 1,
            (true, false) => counts.fn_ += 1,
        }
    }
    Ok(counts)
}

/// Accuracy, precision, recall and F1 in `[0, 1]`, with `None` marking an
/// undefined value (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Derive the four metrics from confusion counts.
pub fn metrics(c: &ConfusionCounts) -> Result<MetricsReport, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::EmptyCounts);
    }
    let accuracy = (c.tp + c.tn) as f64 / total as f64;
    let precision = if c.tp + c.fp > 0 {
        Some(c.tp as f64 / (c.tp + c.fp) as f64)
    } else {
        None
    };
    let recall = if c.tp + c.fn_ > 0 {
        Some(c.tp as f64 / (c.tp + c.fn_) as f64)
    } else {
        None
    };
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
    })
}

/// Mean and sample standard deviation over accepted runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Aggregate {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            std,
            count: values.len(),
        })
    }
}

/// Render a percent cell: `Some` becomes `"97.61 ± 0.44"`. An undefined
/// precision or recall renders as `"0.00"` and an undefined F1 as `"-"`.
pub fn render_percent(value: Option<Aggregate>, undefined: &str) -> String {
    match value {
        Some(a) => format!("{:.2} ± {:.2}", a.mean * 100.0, a.std * 100.0),
        None => undefined.to_string(),
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median-absolute-deviation rejection: a run is anomalous when its
/// statistic deviates from the median by more than three MADs. At most
/// `floor(n / 3)` runs are rejected, worst deviations first. Returns
/// (accepted, rejected) run indices, both ascending.
pub fn reject_anomalous(stats: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let n = stats.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut sorted: Vec<f64> = stats.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("run statistics must be finite"));
    let med = median(&sorted);
    let deviations: Vec<f64> = stats.iter().map(|s| (s - med).abs()).collect();
    let mut dev_sorted = deviations.clone();
    dev_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mad = median(&dev_sorted);
    let threshold = REJECTION_MAD_FACTOR * mad;
    let cap = n / REJECTION_CAP_DIVISOR;

    let mut candidates: Vec<usize> = (0..n).filter(|&i| deviations[i] > threshold).collect();
    candidates.sort_by(|&a, &b| {
        deviations[b]
            .partial_cmp(&deviations[a])
            .expect("finite")
            .then(a.cmp(&b))
    });
    candidates.truncate(cap);
    let mut rejected = candidates;
    rejected.sort_unstable();
    let accepted = (0..n).filter(|i| !rejected.contains(i)).collect();
    (accepted, rejected)
}

/// Which detector a trial trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Logistic,
    Svm,
    Dnn,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Logistic => "lr",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Dnn => "dnn",
        }
    }
}

/// Everything one experiment needs. Feature matrices are in raw feature
/// space; the normalizer is applied on the way into training and scoring.
/// Class 0 is the normal side; classes `1..` are the intrusion classes in
/// `intrusion_train` order.
pub struct TrialSpec<'a> {
    pub classifier: ClassifierKind,
    pub config: TrainConfig,
    pub normalizer: &'a Normalizer,
    /// Pool of normal training records to resample each repeat.
    pub normal_pool: &'a Array2<f64>,
    pub normals_per_repeat: usize,
    /// Fixed intrusion training matrices, one per intrusion class.
    pub intrusion_train: Vec<(String, Array2<f64>)>,
    pub test_features: &'a Array2<f64>,
    /// Class ids aligned with `class_names`.
    pub test_labels: &'a [usize],
}

impl TrialSpec<'_> {
    pub fn class_names(&self) -> Vec<String> {
        let mut names = vec!["NORMAL".to_string()];
        names.extend(self.intrusion_train.iter().map(|(n, _)| n.clone()));
        names
    }
}

/// Per-class aggregate over the accepted runs.
#[derive(Debug, Clone)]
pub struct ClassOutcome {
    pub class: String,
    pub accuracy: Option<Aggregate>,
    pub precision: Option<Aggregate>,
    pub recall: Option<Aggregate>,
    pub f1: Option<Aggregate>,
}

/// Result of a repeated trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub per_class: Vec<ClassOutcome>,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
    /// Headline statistic per run (intrusion F1, accuracy fallback).
    pub run_stats: Vec<f64>,
    /// Normal-pool row indices used by each repeat, for audit.
    pub normal_rows: Vec<Vec<usize>>,
}

struct RunResult {
    reports: Vec<MetricsReport>,
    stat: f64,
    normal_rows: Vec<usize>,
}

/// Run the repeated-trial protocol. Repeats execute in parallel on split
/// random streams (one per repeat, split up front, so the outcome does not
/// depend on scheduling), then the rejection rule and aggregation run over
/// the collected results in repeat order.
pub fn run_trials(
    spec: &TrialSpec<'_>,
    repeats: usize,
    rng: &mut RandomSource,
) -> Result<TrialOutcome, EvalError> {
    if repeats == 0 {
        return Err(EvalError::NoRuns);
    }
    if spec.intrusion_train.is_empty() {
        return Err(EvalError::NoIntrusionClasses);
    }
    if spec.normal_pool.nrows() < spec.normals_per_repeat {
        return Err(EvalError::NormalPoolTooSmall {
            have: spec.normal_pool.nrows(),
            need: spec.normals_per_repeat,
        });
    }

    // Normalize the scored set once; it is fixed across repeats.
    let mut test_x = spec.test_features.clone();
    spec.normalizer.apply_matrix(&mut test_x);

    let mut streams: Vec<RandomSource> = (0..repeats).map(|_| rng.split()).collect();
    let runs: Result<Vec<RunResult>, EvalError> = streams
        .par_iter_mut()
        .map(|stream| single_run(spec, &test_x, stream))
        .collect();
    let runs = runs?;

    let stats: Vec<f64> = runs.iter().map(|r| r.stat).collect();
    let (accepted, rejected) = reject_anomalous(&stats);

    let n_classes = 1 + spec.intrusion_train.len();
    let names = spec.class_names();
    let mut per_class = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let collect = |pick: fn(&MetricsReport) -> Option<f64>| {
            let values: Vec<f64> = accepted
                .iter()
                .filter_map(|&run| pick(&runs[run].reports[class]))
                .collect();
            Aggregate::from_values(&values)
        };
        per_class.push(ClassOutcome {
            class: names[class].clone(),
            accuracy: collect(|r| Some(r.accuracy)),
            precision: collect(|r| r.precision),
            recall: collect(|r| r.recall),
            f1: collect(|r| r.f1),
        });
    }
    Ok(TrialOutcome {
        per_class,
        accepted,
        rejected,
        run_stats: stats,
        normal_rows: runs.into_iter().map(|r| r.normal_rows).collect(),
    })
}

/// Assemble one repeat's training set: a fresh normal sample plus the fixed
/// intrusion matrices, normalized. Returns the pool rows used for audit.
fn build_training_set(
    spec: &TrialSpec<'_>,
    rng: &mut RandomSource,
) -> (Array2<f64>, Vec<usize>, Vec<usize>) {
    let dim = spec.normal_pool.ncols();
    let normal_rows = rng.sample_indices(spec.normal_pool.nrows(), spec.normals_per_repeat);
    let intrusion_total: usize = spec.intrusion_train.iter().map(|(_, m)| m.nrows()).sum();
    let mut train_x = Array2::zeros((spec.normals_per_repeat + intrusion_total, dim));
    let mut train_y = Vec::with_capacity(train_x.nrows());
    for (out_row, &pool_row) in normal_rows.iter().enumerate() {
        train_x.row_mut(out_row).assign(&spec.normal_pool.row(pool_row));
        train_y.push(0usize);
    }
    let mut offset = spec.normals_per_repeat;
    for (class, (_, matrix)) in spec.intrusion_train.iter().enumerate() {
        for row in matrix.rows() {
            train_x.row_mut(offset).assign(&row);
            train_y.push(class + 1);
            offset += 1;
        }
    }
    spec.normalizer.apply_matrix(&mut train_x);
    (train_x, train_y, normal_rows)
}

/// Train one model on a fresh draw from the spec: exactly one repeat's
/// training phase, without scoring.
pub fn train_once(spec: &TrialSpec<'_>, rng: &mut RandomSource) -> Result<Model, EvalError> {
    let (train_x, train_y, _) = build_training_set(spec, rng);
    fit_model(spec, &train_x, &train_y, rng)
}

fn fit_model(
    spec: &TrialSpec<'_>,
    train_x: &Array2<f64>,
    train_y: &[usize],
    rng: &mut RandomSource,
) -> Result<Model, EvalError> {
    let n_classes = 1 + spec.intrusion_train.len();
    let model = match (spec.classifier, n_classes) {
        (ClassifierKind::Logistic, 2) => {
            let y: Vec<bool> = train_y.iter().map(|&c| c == 1).collect();
            Model::Binary(train_logreg(&train_x, &y, &spec.config, rng)?)
        }
        (ClassifierKind::Svm, 2) => {
            let y: Vec<bool> = train_y.iter().map(|&c| c == 1).collect();
            Model::Binary(train_svm(&train_x, &y, &spec.config, rng)?)
        }
        (ClassifierKind::Logistic, _) => Model::OneVsRest(train_linear_multiclass(
            LinearKind::Logistic,
            &train_x,
            &train_y,
            n_classes,
            &spec.config,
            rng,
        )?),
        (ClassifierKind::Svm, _) => Model::OneVsRest(train_linear_multiclass(
            LinearKind::SvmHinge,
            &train_x,
            &train_y,
            n_classes,
            &spec.config,
            rng,
        )?),
        (ClassifierKind::Dnn, _) => Model::Dnn(train_dnn_classifier(
            train_x,
            train_y,
            n_classes,
            &spec.config,
            rng,
        )?),
    };
    Ok(model)
}

fn single_run(
    spec: &TrialSpec<'_>,
    test_x: &Array2<f64>,
    rng: &mut RandomSource,
) -> Result<RunResult, EvalError> {
    let (train_x, train_y, normal_rows) = build_training_set(spec, rng);
    let model = fit_model(spec, &train_x, &train_y, rng)?;
    let n_classes = 1 + spec.intrusion_train.len();

    let (preds, _) = predict(&model, test_x)?;
    let mut reports = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let counts = confusion(spec.test_labels, &preds, &class)?;
        reports.push(metrics(&counts)?);
    }

    // Headline statistic: mean F1 over intrusion classes, accuracy standing
    // in where F1 is undefined.
    let stat = reports
        .iter()
        .skip(1)
        .map(|r| r.f1.unwrap_or(r.accuracy))
        .sum::<f64>()
        / (n_classes - 1) as f64;
    Ok(RunResult {
        reports,
        stat,
        normal_rows,
    })
}
