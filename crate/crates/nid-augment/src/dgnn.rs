//! Deep generative neural networks: adversarial refinement of synthesised
//! intrusion data.
//!
//! A generator/discriminator pair is trained in two folds. During
//! pre-training the discriminator separates synthesised records from
//! generator output on Gaussian noise, which settles the generator near the
//! general intrusion distribution without ever touching real data. During
//! fine-tuning the discriminator's real side switches to the actual seed
//! records while the generator is fed synthesised records perturbed with
//! fresh noise (`y + z`), so it refines rather than memorizes. Both folds
//! optimize the saturating objective
//! `mean(log D(real)) + mean(log(1 - D(G(input))))`, the discriminator by
//! ascent and the generator by descent, with Adam on each side.
//!
//! Training and generation take and return records in raw feature space but
//! run internally in standardized coordinates (per-feature mean/std of the
//! synthesised pool). Raw counters span several orders of magnitude, which
//! a sigmoid-bounded generator cannot reach at these learning rates, and it
//! would drown the unit-variance noise that `y + z` relies on. The
//! standardization is a pure function of the synthesised pool, so
//! generation from a reloaded checkpoint reproduces it exactly.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::neural::{Activation, AdamState, DenseNet, DropoutPlan, NetGradients, NeuralError};
use crate::rng::RandomSource;

/// Discriminator hidden widths.
pub const D_HIDDEN: [usize; 4] = [70, 50, 40, 20];

/// Generator hidden widths.
pub const G_HIDDEN: [usize; 3] = [40, 30, 20];

/// Training aborts when a sampled objective value leaves this band.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

#[derive(Debug, Error)]
pub enum DgnnError {
    #[error("fine-tuning requires a real seed batch")]
    MissingRealBatch,
    #[error("batch size mismatch: expected {expected} rows, got {found}")]
    BatchSize { expected: usize, found: usize },
    #[error("{0} pool is empty")]
    EmptyPool(&'static str),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(
        "training diverged at iteration {iteration} ({phase:?}): objective value {value}; \
         {history_len} loss records available"
    )]
    Diverged {
        iteration: usize,
        phase: Phase,
        value: f64,
        history_len: usize,
        history: Vec<LossRecord>,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Discriminator and generator networks.
#[derive(Debug, Clone)]
pub struct GanPair {
    pub d_net: DenseNet,
    pub g_net: DenseNet,
}

/// Build a fresh pair for `k`-dimensional records: the discriminator maps
/// `k` through hidden widths 70/50/40/20 (relu) to one sigmoid unit, the
/// generator maps `k` through 40/30 (relu) and 20 (sigmoid) back to `k`
/// linearly. The generator is deliberately the smaller network.
pub fn build_gan(k: usize, rng: &mut RandomSource) -> GanPair {
    assert!(k >= 1, "feature dimension must be at least 1");
    let d_dims = [k, D_HIDDEN[0], D_HIDDEN[1], D_HIDDEN[2], D_HIDDEN[3], 1];
    let d_acts = [
        Activation::Relu,
        Activation::Relu,
        Activation::Relu,
        Activation::Relu,
        Activation::Sigmoid,
    ];
    let g_dims = [k, G_HIDDEN[0], G_HIDDEN[1], G_HIDDEN[2], k];
    let g_acts = [
        Activation::Relu,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Linear,
    ];
    GanPair {
        d_net: DenseNet::new(&d_dims, &d_acts, rng),
        g_net: DenseNet::new(&g_dims, &g_acts, rng),
    }
}

/// Which fold of the two-fold mechanism a step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        }
    }
}

/// Adversarial-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    /// Minibatch size; must stay below both pool sizes.
    pub batch: usize,
    /// Discriminator steps per iteration.
    pub d_steps: usize,
    /// Generator steps per iteration.
    pub g_steps: usize,
    pub pretrain_iters: usize,
    pub finetune_iters: usize,
    pub d_learning_rate: f64,
    pub g_learning_rate: f64,
    /// Dropout rate on every hidden layer of both networks.
    pub dropout: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            batch: 15,
            d_steps: 8,
            g_steps: 2,
            pretrain_iters: 3000,
            finetune_iters: 300,
            d_learning_rate: 2e-4,
            g_learning_rate: 2e-4,
            dropout: 0.2,
        }
    }
}

impl TrainSchedule {
    fn validate(&self, real_count: usize, synth_count: usize) -> Result<(), DgnnError> {
        if self.batch == 0 || self.d_steps == 0 || self.g_steps == 0 {
            return Err(DgnnError::InvalidSchedule(
                "batch, d_steps and g_steps must be positive".into(),
            ));
        }
        if !(self.d_learning_rate > 0.0 && self.g_learning_rate > 0.0) {
            return Err(DgnnError::InvalidSchedule(
                "learning rates must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(DgnnError::InvalidSchedule(
                "dropout rate must lie in [0, 1)".into(),
            ));
        }
        // The batch bound only matters when steps will actually run.
        if self.pretrain_iters + self.finetune_iters > 0
            && self.batch >= real_count.min(synth_count)
        {
            return Err(DgnnError::InvalidSchedule(format!(
                "batch size {} must be smaller than both pool sizes ({} real, {} synthesised)",
                self.batch, real_count, synth_count
            )));
        }
        Ok(())
    }
}

/// Gradients of the sampled objective for one batch, for both networks.
#[derive(Debug)]
pub struct AdvGradients {
    pub d: NetGradients,
    pub g: NetGradients,
    /// Sampled objective value `mean(log D(real)) + mean(log(1 - D(fake)))`.
    pub value: f64,
}

/// Objective gradients on one batch.
///
/// Pre-training treats the synthesised batch as the discriminator's real
/// side and runs the generator on noise alone; fine-tuning requires the seed
/// batch `x_batch` as the real side and feeds the generator `y + z`
/// element-wise. The value and both gradients use the batch-mean convention.
///
/// `dropout` is interpreted as a uniform rate and resized to each network's
/// hidden-layer count; masks are drawn from `rng` in a fixed order, so a
/// cloned source replays them exactly.
pub fn adversarial_gradients(
    phase: Phase,
    pair: &GanPair,
    x_batch: Option<&Array2<f64>>,
    y_batch: &Array2<f64>,
    z_batch: &Array2<f64>,
    dropout: &DropoutPlan,
    rng: &mut RandomSource,
) -> Result<AdvGradients, DgnnError> {
    let l = y_batch.nrows();
    if z_batch.nrows() != l {
        return Err(DgnnError::BatchSize {
            expected: l,
            found: z_batch.nrows(),
        });
    }
    let (real, fake_input): (&Array2<f64>, Array2<f64>) = match phase {
        Phase::Pretrain => (y_batch, z_batch.clone()),
        Phase::Finetune => {
            let x = x_batch.ok_or(DgnnError::MissingRealBatch)?;
            if x.nrows() != l {
                return Err(DgnnError::BatchSize {
                    expected: l,
                    found: x.nrows(),
                });
            }
            (x, y_batch + z_batch)
        }
    };

    let (d_real, real_value) = real_side(&pair.d_net, real, dropout, rng)?;
    let fake = fake_side(pair, &fake_input, dropout, rng)?;
    let mut d = d_real;
    d.add(&fake.d_grad);
    Ok(AdvGradients {
        d,
        g: fake.g_grad,
        value: real_value + fake.value,
    })
}

/// `mean(log D(real))` and its discriminator gradient.
fn real_side(
    d_net: &DenseNet,
    real: &Array2<f64>,
    dropout: &DropoutPlan,
    rng: &mut RandomSource,
) -> Result<(NetGradients, f64), DgnnError> {
    let l = real.nrows() as f64;
    let plan = hidden_plan(dropout, d_net.layers.len() - 1);
    let (p, cache) = d_net.forward(real, &plan, Some(rng))?;
    let value = p.mapv(f64::ln).sum() / l;
    let upstream = p.mapv(|v| 1.0 / (l * v));
    let (grads, _) = d_net.backward(&cache, &upstream)?;
    Ok((grads, value))
}

struct FakeSide {
    d_grad: NetGradients,
    g_grad: NetGradients,
    value: f64,
}

/// `mean(log(1 - D(G(input))))`, with gradients for both networks.
fn fake_side(
    pair: &GanPair,
    g_input: &Array2<f64>,
    dropout: &DropoutPlan,
    rng: &mut RandomSource,
) -> Result<FakeSide, DgnnError> {
    let l = g_input.nrows() as f64;
    let g_dropout = hidden_plan(dropout, pair.g_net.layers.len() - 1);
    let d_dropout = hidden_plan(dropout, pair.d_net.layers.len() - 1);
    let (fake, g_cache) = pair.g_net.forward(g_input, &g_dropout, Some(rng))?;
    let (p, d_cache) = pair.d_net.forward(&fake, &d_dropout, Some(rng))?;
    let value = p.mapv(|v| (1.0 - v).ln()).sum() / l;
    let upstream = p.mapv(|v| -1.0 / (l * (1.0 - v)));
    let (d_grad, fake_grad) = pair.d_net.backward(&d_cache, &upstream)?;
    let (g_grad, _) = pair.g_net.backward(&g_cache, &fake_grad)?;
    Ok(FakeSide {
        d_grad,
        g_grad,
        value,
    })
}

/// Resize a uniform dropout plan to a network's hidden-layer count.
fn hidden_plan(plan: &DropoutPlan, hidden: usize) -> DropoutPlan {
    if !plan.active {
        return DropoutPlan::inference();
    }
    DropoutPlan {
        rates: vec![plan.rates.first().copied().unwrap_or(0.0); hidden],
        active: true,
    }
}

/// Per-feature affine map into the coordinates the networks train in.
/// Fitted on the synthesised pool; near-constant columns keep unit scale so
/// they map to zero instead of exploding.
#[derive(Debug, Clone, PartialEq)]
struct FeatureScaling {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl FeatureScaling {
    fn fit(pool: &Array2<f64>) -> Self {
        let n = pool.nrows() as f64;
        let mut mean = Vec::with_capacity(pool.ncols());
        let mut scale = Vec::with_capacity(pool.ncols());
        for col in pool.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let std = var.sqrt();
            mean.push(m);
            scale.push(if std < 1e-8 { 1.0 } else { std });
        }
        Self { mean, scale }
    }

    fn forward(&self, raw: &Array2<f64>) -> Array2<f64> {
        let mut out = raw.clone();
        for mut row in out.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[i]) / self.scale[i];
            }
        }
        out
    }

    fn inverse(&self, standardized: &Array2<f64>) -> Array2<f64> {
        let mut out = standardized.clone();
        for mut row in out.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = *v * self.scale[i] + self.mean[i];
            }
        }
        out
    }
}

/// Update counters proving which pools fed the discriminator's real side.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleAudit {
    pub d_updates: usize,
    pub g_updates: usize,
    /// Real-side rows drawn from the seed pool during pre-training.
    /// Stays zero by construction.
    pub pretrain_real_rows_from_seeds: usize,
    pub pretrain_real_rows_from_synth: usize,
    pub finetune_real_rows_from_seeds: usize,
    /// Real-side rows drawn from the synthesised pool during fine-tuning.
    /// Stays zero by construction.
    pub finetune_real_rows_from_synth: usize,
}

/// One objective sample from the training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    /// Outer iteration, 1-based.
    pub iteration: usize,
    pub phase: Phase,
    pub step: StepKind,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Discriminator,
    Generator,
}

impl StepKind {
    pub fn name(self) -> &'static str {
        match self {
            StepKind::Discriminator => "d",
            StepKind::Generator => "g",
        }
    }
}

/// A trained pair plus its loss history and routing audit.
#[derive(Debug)]
pub struct TrainedGan {
    pub pair: GanPair,
    pub audit: ScheduleAudit,
    pub history: Vec<LossRecord>,
}

/// Run the two-fold schedule: `pretrain_iters` iterations against the
/// synthesised pool, then `finetune_iters` against the seed records, each
/// iteration alternating `d_steps` discriminator updates with `g_steps`
/// generator updates. Noise is pre-drawn as a pool the same size as the
/// synthesised set and batches are selected uniformly with replacement.
/// Deterministic given the random source.
pub fn train_dgnn(
    rng: &mut RandomSource,
    seeds: &Array2<f64>,
    synthesised: &Array2<f64>,
    schedule: &TrainSchedule,
) -> Result<TrainedGan, DgnnError> {
    if synthesised.nrows() == 0 {
        return Err(DgnnError::EmptyPool("synthesised"));
    }
    if seeds.nrows() == 0 {
        return Err(DgnnError::EmptyPool("seed"));
    }
    schedule.validate(seeds.nrows(), synthesised.nrows())?;
    let k = synthesised.ncols();
    let mut pair = build_gan(k, rng);

    let scaling = FeatureScaling::fit(synthesised);
    let seeds = scaling.forward(seeds);
    let synthesised = scaling.forward(synthesised);
    let (seeds, synthesised) = (&seeds, &synthesised);

    // Noise pool, one vector per synthesised record.
    let mut noise = Array2::zeros((synthesised.nrows(), k));
    for v in noise.iter_mut() {
        *v = rng.sample_gaussian(0.0, 1.0).expect("unit sigma is valid");
    }

    let dropout = DropoutPlan::uniform(schedule.dropout, 1); // resized per net
    let mut adam_d = AdamState::new(&pair.d_net, schedule.d_learning_rate);
    let mut adam_g = AdamState::new(&pair.g_net, schedule.g_learning_rate);
    let mut audit = ScheduleAudit::default();
    let mut history = Vec::new();

    let total = schedule.pretrain_iters + schedule.finetune_iters;
    for t in 1..=total {
        let phase = if t <= schedule.pretrain_iters {
            Phase::Pretrain
        } else {
            Phase::Finetune
        };
        for _ in 0..schedule.d_steps {
            let y = pick_rows(synthesised, schedule.batch, rng);
            let z = pick_rows(&noise, schedule.batch, rng);
            let x = match phase {
                Phase::Pretrain => {
                    audit.pretrain_real_rows_from_synth += schedule.batch;
                    None
                }
                Phase::Finetune => {
                    audit.finetune_real_rows_from_seeds += schedule.batch;
                    Some(pick_rows(seeds, schedule.batch, rng))
                }
            };
            let grads =
                adversarial_gradients(phase, &pair, x.as_ref(), &y, &z, &dropout, rng)?;
            check_value(t, phase, grads.value, &history)?;
            history.push(LossRecord {
                iteration: t,
                phase,
                step: StepKind::Discriminator,
                value: grads.value,
            });
            // Ascent on the discriminator: Adam steps along -gradient.
            let mut ascent = grads.d;
            ascent.scale(-1.0);
            adam_d.step(&mut pair.d_net, &ascent)?;
            audit.d_updates += 1;
        }
        for _ in 0..schedule.g_steps {
            let z = pick_rows(&noise, schedule.batch, rng);
            let g_input = match phase {
                Phase::Pretrain => z,
                Phase::Finetune => pick_rows(synthesised, schedule.batch, rng) + z,
            };
            let fake = fake_side(&pair, &g_input, &dropout, rng)?;
            check_value(t, phase, fake.value, &history)?;
            history.push(LossRecord {
                iteration: t,
                phase,
                step: StepKind::Generator,
                value: fake.value,
            });
            adam_g.step(&mut pair.g_net, &fake.g_grad)?;
            audit.g_updates += 1;
        }
    }
    Ok(TrainedGan {
        pair,
        audit,
        history,
    })
}

fn check_value(
    iteration: usize,
    phase: Phase,
    value: f64,
    history: &[LossRecord],
) -> Result<(), DgnnError> {
    if !value.is_finite() || value.abs() > DIVERGENCE_LIMIT {
        return Err(DgnnError::Diverged {
            iteration,
            phase,
            value,
            history_len: history.len(),
            history: history.to_vec(),
        });
    }
    Ok(())
}

/// Select rows uniformly with replacement.
fn pick_rows(pool: &Array2<f64>, count: usize, rng: &mut RandomSource) -> Array2<f64> {
    let mut out = Array2::zeros((count, pool.ncols()));
    for i in 0..count {
        let row = rng.below(pool.nrows());
        out.row_mut(i).assign(&pool.row(row));
    }
    out
}

/// Refined records from a trained generator.
#[derive(Debug, Clone)]
pub struct AugmentedSet {
    /// Rows are samples in raw feature space, clamped non-negative.
    pub samples: Array2<f64>,
    /// SHA-256 of the generator checkpoint that produced the samples.
    pub generator_checkpoint: String,
}

/// Generate `count` refined samples. Each is `G(y + z)` with `y` drawn
/// uniformly with replacement from the synthesised pool and `z` fresh unit
/// Gaussian noise, evaluated at inference (no dropout) in the same
/// standardized coordinates the pair was trained in (refit from the pool,
/// so pass the training pool). Outputs are mapped back to raw feature space
/// and clamped non-negative.
pub fn generate_augmented(
    rng: &mut RandomSource,
    pair: &GanPair,
    synthesised: &Array2<f64>,
    count: usize,
) -> Result<AugmentedSet, DgnnError> {
    if synthesised.nrows() == 0 {
        return Err(DgnnError::EmptyPool("synthesised"));
    }
    let k = pair.g_net.input_dim();
    if synthesised.ncols() != k {
        return Err(DgnnError::Neural(NeuralError::InputDim {
            expected: k,
            found: synthesised.ncols(),
        }));
    }
    let scaling = FeatureScaling::fit(synthesised);
    let pool = scaling.forward(synthesised);
    let mut input = Array2::zeros((count, k));
    for i in 0..count {
        let row = rng.below(pool.nrows());
        for j in 0..k {
            input[(i, j)] =
                pool[(row, j)] + rng.sample_gaussian(0.0, 1.0).expect("unit sigma is valid");
        }
    }
    let samples = if count == 0 {
        Array2::zeros((0, k))
    } else {
        let (out, _) = pair
            .g_net
            .forward(&input, &DropoutPlan::inference(), None)?;
        scaling.inverse(&out).mapv(|v| v.max(0.0))
    };
    let checkpoint = {
        let mut hasher = Sha256::new();
        hasher.update(pair.g_net.to_checkpoint_json().as_bytes());
        format!("{:x}", hasher.finalize())
    };
    Ok(AugmentedSet {
        samples,
        generator_checkpoint: checkpoint,
    })
}
