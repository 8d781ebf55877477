//! Supervised detection models: binary/one-vs-rest logistic regression and
//! linear SVM trained by minibatch (sub)gradient descent, and a small DNN
//! softmax classifier on the [`crate::neural`] engine.
//!
//! Inputs are expected in normalized feature space. Multiclass linear models
//! decompose one-vs-rest and predict the argmax score; the DNN classifier
//! uses hidden widths 64/32/16 with relu, dropout on hidden layers during
//! training, Adam with halving on validation plateau, and returns the
//! best-validation parameters.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{Activation, AdamState, DenseNet, DropoutPlan, NeuralError};
use crate::rng::RandomSource;

/// DNN classifier hidden widths.
pub const DNN_HIDDEN: [usize; 3] = [64, 32, 16];

/// Dropout rate on DNN classifier hidden layers.
pub const DNN_DROPOUT: f64 = 0.2;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data is empty")]
    EmptyInput,
    #[error("labels ({labels}) and rows ({rows}) disagree")]
    LabelCount { labels: usize, rows: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("class {0} is absent from the training labels")]
    MissingClass(usize),
    #[error("label {label} is out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("input has {found} features, model expects {expected}")]
    FeatureDim { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("model file: {0}")]
    ModelFile(String),
}

/// Hyperparameters shared by the three trainers. `learning_rate` is the SGD
/// step for the linear models and the initial Adam rate for the DNN;
/// `patience` drives the DNN's plateau halving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::linear()
    }
}

impl TrainConfig {
    /// Defaults for the linear models.
    pub fn linear() -> Self {
        Self {
            epochs: 120,
            batch_size: 32,
            learning_rate: 0.05,
            l2: 1e-4,
            patience: 5,
        }
    }

    /// Defaults for the DNN classifier.
    pub fn dnn() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            l2: 0.0,
            patience: 5,
        }
    }

    fn validate(&self) -> Result<(), ClassifierError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ClassifierError::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || self.l2 < 0.0 {
            return Err(ClassifierError::Config(
                "learning rate must be positive and regularization non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearKind {
    Logistic,
    SvmHinge,
}

/// Linear decision rule `w . x + b`, positive class on the positive side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub kind: LinearKind,
}

impl LinearModel {
    pub fn score(&self, row: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(row)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias
    }

    fn scores(&self, x: &Array2<f64>) -> Array1<f64> {
        let w = Array1::from_vec(self.weights.clone());
        x.dot(&w) + self.bias
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn check_binary_input(x: &Array2<f64>, y: &[bool]) -> Result<(), ClassifierError> {
    if x.nrows() == 0 {
        return Err(ClassifierError::EmptyInput);
    }
    if x.nrows() != y.len() {
        return Err(ClassifierError::LabelCount {
            labels: y.len(),
            rows: x.nrows(),
        });
    }
    let positives = y.iter().filter(|&&b| b).count();
    if positives == 0 || positives == y.len() {
        return Err(ClassifierError::SingleClass);
    }
    Ok(())
}

/// Logistic regression: minibatch SGD on mean log-loss, step decayed as
/// `lr / (1 + 0.02 t_epoch)`. The L2 term on the weights is applied as a
/// proximal shrink `1 / (1 + lr l2)` after each data step, which stays
/// stable for arbitrarily strong regularization; the bias is unregularized.
pub fn train_logreg(
    x: &Array2<f64>,
    y: &[bool],
    cfg: &TrainConfig,
    rng: &mut RandomSource,
) -> Result<LinearModel, ClassifierError> {
    cfg.validate()?;
    check_binary_input(x, y)?;
    let dim = x.ncols();
    let mut weights = Array1::<f64>::zeros(dim);
    let mut bias = 0.0f64;
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate / (1.0 + 0.02 * epoch as f64);
        for batch in minibatches(x.nrows(), cfg.batch_size, rng) {
            let mut grad_w = Array1::<f64>::zeros(dim);
            let mut grad_b = 0.0;
            for &i in &batch {
                let row = x.row(i);
                let s = row.dot(&weights) + bias;
                let err = sigmoid(s) - if y[i] { 1.0 } else { 0.0 };
                grad_w.scaled_add(err, &row);
                grad_b += err;
            }
            let inv = 1.0 / batch.len() as f64;
            weights.scaled_add(-lr * inv, &grad_w);
            weights /= 1.0 + lr * cfg.l2;
            bias -= lr * grad_b * inv;
        }
    }
    Ok(LinearModel {
        weights: weights.to_vec(),
        bias,
        kind: LinearKind::Logistic,
    })
}

/// Linear SVM: minibatch subgradient descent on mean hinge loss with the
/// same proximal L2 shrink as [`train_logreg`] (bias unregularized). Labels
/// are booleans, mapped to -1/+1 internally.
pub fn train_svm(
    x: &Array2<f64>,
    y: &[bool],
    cfg: &TrainConfig,
    rng: &mut RandomSource,
) -> Result<LinearModel, ClassifierError> {
    cfg.validate()?;
    check_binary_input(x, y)?;
    let dim = x.ncols();
    let mut weights = Array1::<f64>::zeros(dim);
    let mut bias = 0.0f64;
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate / (1.0 + 0.02 * epoch as f64);
        for batch in minibatches(x.nrows(), cfg.batch_size, rng) {
            let mut grad_w = Array1::<f64>::zeros(dim);
            let mut grad_b = 0.0;
            for &i in &batch {
                let sign = if y[i] { 1.0 } else { -1.0 };
                let row = x.row(i);
                let margin = sign * (row.dot(&weights) + bias);
                if margin < 1.0 {
                    grad_w.scaled_add(-sign, &row);
                    grad_b -= sign;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            weights.scaled_add(-lr * inv, &grad_w);
            weights /= 1.0 + lr * cfg.l2;
            bias -= lr * grad_b * inv;
        }
    }
    Ok(LinearModel {
        weights: weights.to_vec(),
        bias,
        kind: LinearKind::SvmHinge,
    })
}

/// Shuffled minibatch index sets covering every row once per epoch.
fn minibatches(rows: usize, batch: usize, rng: &mut RandomSource) -> Vec<Vec<usize>> {
    let order = rng.sample_indices(rows, rows);
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

/// One-vs-rest decomposition: one binary model per class.
pub fn train_linear_multiclass(
    kind: LinearKind,
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
    rng: &mut RandomSource,
) -> Result<Vec<LinearModel>, ClassifierError> {
    validate_multiclass(x, y, n_classes)?;
    let mut models = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let targets: Vec<bool> = y.iter().map(|&label| label == class).collect();
        let model = match kind {
            LinearKind::Logistic => train_logreg(x, &targets, cfg, rng)?,
            LinearKind::SvmHinge => train_svm(x, &targets, cfg, rng)?,
        };
        models.push(model);
    }
    Ok(models)
}

fn validate_multiclass(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
) -> Result<(), ClassifierError> {
    if x.nrows() == 0 {
        return Err(ClassifierError::EmptyInput);
    }
    if x.nrows() != y.len() {
        return Err(ClassifierError::LabelCount {
            labels: y.len(),
            rows: x.nrows(),
        });
    }
    if n_classes < 2 {
        return Err(ClassifierError::Config("need at least two classes".into()));
    }
    let mut seen = vec![false; n_classes];
    for &label in y {
        if label >= n_classes {
            return Err(ClassifierError::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
        seen[label] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(ClassifierError::MissingClass(missing));
    }
    Ok(())
}

/// Softmax DNN classifier.
#[derive(Debug, Clone)]
pub struct DnnClassifier {
    pub net: DenseNet,
    pub n_classes: usize,
}

/// Train the DNN classifier: relu hidden stack 64/32/16 into a softmax
/// head, cross-entropy under Adam, dropout active on hidden layers during
/// training only. A stratified tenth of the data is held out; when the
/// validation loss plateaus for `patience` epochs the learning rate halves,
/// and training stops after it has halved four times. The parameters with
/// the best validation loss are returned.
pub fn train_dnn_classifier(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
    rng: &mut RandomSource,
) -> Result<DnnClassifier, ClassifierError> {
    cfg.validate()?;
    validate_multiclass(x, y, n_classes)?;
    let dim = x.ncols();
    let dims = [dim, DNN_HIDDEN[0], DNN_HIDDEN[1], DNN_HIDDEN[2], n_classes];
    let acts = [
        Activation::Relu,
        Activation::Relu,
        Activation::Relu,
        Activation::Softmax,
    ];
    let mut net = DenseNet::new(&dims, &acts, rng);
    let mut adam = AdamState::new(&net, cfg.learning_rate);
    let dropout = DropoutPlan::uniform(DNN_DROPOUT, net.layers.len() - 1);

    let (train_idx, val_idx) = stratified_split(y, n_classes, 0.1, rng);
    let val_idx = if val_idx.is_empty() { train_idx.clone() } else { val_idx };
    let val_x = select_rows(x, &val_idx);
    let val_y: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();

    let mut best = net.clone();
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;
    let mut halvings = 0usize;
    for _epoch in 0..cfg.epochs {
        let order = {
            let mut idx = train_idx.clone();
            shuffle(&mut idx, rng);
            idx
        };
        for batch in order.chunks(cfg.batch_size) {
            let bx = select_rows(x, batch);
            let by: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let (probs, cache) = net.forward(&bx, &dropout, Some(rng))?;
            let inv = 1.0 / batch.len() as f64;
            let mut upstream = Array2::zeros(probs.raw_dim());
            for (row, &label) in by.iter().enumerate() {
                upstream[(row, label)] = -inv / probs[(row, label)].max(1e-12);
            }
            let (grads, _) = net.backward(&cache, &upstream)?;
            adam.step(&mut net, &grads)?;
        }
        let val_loss = cross_entropy(&net, &val_x, &val_y)?;
        if val_loss + 1e-9 < best_val {
            best_val = val_loss;
            best = net.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                adam.learning_rate /= 2.0;
                halvings += 1;
                stale = 0;
                if halvings >= 4 {
                    break;
                }
            }
        }
    }
    Ok(DnnClassifier {
        net: best,
        n_classes,
    })
}

fn cross_entropy(
    net: &DenseNet,
    x: &Array2<f64>,
    y: &[usize],
) -> Result<f64, ClassifierError> {
    let (probs, _) = net.forward(x, &DropoutPlan::inference(), None)?;
    let mut loss = 0.0;
    for (row, &label) in y.iter().enumerate() {
        loss -= probs[(row, label)].max(1e-12).ln();
    }
    Ok(loss / y.len().max(1) as f64)
}

fn stratified_split(
    y: &[usize],
    n_classes: usize,
    fraction: f64,
    rng: &mut RandomSource,
) -> (Vec<usize>, Vec<usize>) {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in y.iter().enumerate() {
        per_class[label].push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut members in per_class {
        shuffle(&mut members, rng);
        let take = ((members.len() as f64) * fraction).floor() as usize;
        val.extend(members.drain(..take));
        train.extend(members);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn shuffle(indices: &mut [usize], rng: &mut RandomSource) {
    for i in (1..indices.len()).rev() {
        let j = rng.below(i + 1);
        indices.swap(i, j);
    }
}

fn select_rows(x: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), x.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}

/// Any trained detector.
#[derive(Debug, Clone)]
pub enum Model {
    Binary(LinearModel),
    OneVsRest(Vec<LinearModel>),
    Dnn(DnnClassifier),
}

impl Model {
    pub fn n_classes(&self) -> usize {
        match self {
            Model::Binary(_) => 2,
            Model::OneVsRest(models) => models.len(),
            Model::Dnn(dnn) => dnn.n_classes,
        }
    }

    fn feature_dim(&self) -> usize {
        match self {
            Model::Binary(m) => m.weights.len(),
            Model::OneVsRest(models) => models.first().map_or(0, |m| m.weights.len()),
            Model::Dnn(dnn) => dnn.net.input_dim(),
        }
    }
}

/// Deterministic prediction: class labels plus an `n x n_classes` score
/// matrix (probabilities for the DNN, margins or logits for linear models;
/// binary models report the positive score in column 1 and its negation in
/// column 0). Ties break toward the lower class index.
pub fn predict(model: &Model, x: &Array2<f64>) -> Result<(Vec<usize>, Array2<f64>), ClassifierError> {
    if x.nrows() > 0 && x.ncols() != model.feature_dim() {
        return Err(ClassifierError::FeatureDim {
            expected: model.feature_dim(),
            found: x.ncols(),
        });
    }
    match model {
        Model::Binary(m) => {
            let s = m.scores(x);
            let mut scores = Array2::zeros((x.nrows(), 2));
            let mut labels = Vec::with_capacity(x.nrows());
            for (i, &v) in s.iter().enumerate() {
                scores[(i, 0)] = -v;
                scores[(i, 1)] = v;
                labels.push(usize::from(v > 0.0));
            }
            Ok((labels, scores))
        }
        Model::OneVsRest(models) => {
            let mut scores = Array2::zeros((x.nrows(), models.len()));
            for (c, m) in models.iter().enumerate() {
                scores.column_mut(c).assign(&m.scores(x));
            }
            Ok((argmax_rows(&scores), scores))
        }
        Model::Dnn(dnn) => {
            let (probs, _) = dnn.net.forward(x, &DropoutPlan::inference(), None)?;
            Ok((argmax_rows(&probs), probs))
        }
    }
}

fn argmax_rows(scores: &Array2<f64>) -> Vec<usize> {
    scores
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
enum ModelFile {
    Binary { linear: LinearModel },
    OneVsRest { linear: Vec<LinearModel> },
    Dnn { n_classes: usize, checkpoint: String },
}

impl Model {
    /// Serialize: linear parameters inline, DNN weights in the neural
    /// checkpoint format embedded as a string.
    pub fn to_json(&self) -> String {
        let file = match self {
            Model::Binary(m) => ModelFile::Binary { linear: m.clone() },
            Model::OneVsRest(m) => ModelFile::OneVsRest { linear: m.clone() },
            Model::Dnn(dnn) => ModelFile::Dnn {
                n_classes: dnn.n_classes,
                checkpoint: dnn.net.to_checkpoint_json(),
            },
        };
        serde_json::to_string(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self, ClassifierError> {
        let file: ModelFile =
            serde_json::from_str(json).map_err(|e| ClassifierError::ModelFile(e.to_string()))?;
        Ok(match file {
            ModelFile::Binary { linear } => Model::Binary(linear),
            ModelFile::OneVsRest { linear } => Model::OneVsRest(linear),
            ModelFile::Dnn {
                n_classes,
                checkpoint,
            } => Model::Dnn(DnnClassifier {
                net: DenseNet::from_checkpoint_json(&checkpoint)?,
                n_classes,
            }),
        })
    }
}
