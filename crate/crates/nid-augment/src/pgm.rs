//! Poisson-Gamma joint probabilistic model.
//!
//! Each feature column of a seed set is modeled independently: a Poisson
//! likelihood whose mean carries a Gamma prior, moment-matched to the seed
//! data (`shape = mean^2 / var`, `rate = mean / var`, rate parameterization
//! throughout). Conjugacy gives the posterior in closed form: the shape grows
//! by the column sum and the rate by the record count. A Gibbs sampler then
//! alternates a posterior draw of the mean with a Poisson draw of the value,
//! discarding a burn-in prefix, to synthesise new records.
//!
//! Columns that are exactly constant in the seeds carry no rate information;
//! they are pinned and reproduced verbatim in the output rather than run
//! through the moment equations, which would divide by zero.

use ndarray::Array2;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{RandomSource, RngError};

/// Variance floor for near-constant (but not exactly constant) columns.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("cannot estimate a prior from an empty seed set")]
    EmptySeeds,
    #[error("seed matrix contains a value that is not finite and non-negative: {0}")]
    InvalidSeedValue(f64),
    #[error("dimension mismatch: seeds have {seeds} features, prior has {prior}")]
    DimensionMismatch { seeds: usize, prior: usize },
    #[error(transparent)]
    Sampler(#[from] RngError),
}

/// Moment-matched Gamma prior, one (shape, rate) pair per feature.
/// `pinned[i]` is the constant value of feature `i` when the seed column is
/// degenerate (zero variance).
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPrior {
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
    pub pinned: Vec<Option<f64>>,
}

impl GammaPrior {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }
}

/// Closed-form conjugate posterior: `shape + column sums` and
/// `rate + record count` per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPosterior {
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
    pub evidence: usize,
    pub pinned: Vec<Option<f64>>,
}

impl GammaPosterior {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Posterior mean of the Poisson rate per feature, which is also the
    /// posterior-predictive mean of generated values.
    pub fn mean(&self) -> Vec<f64> {
        self.shape
            .iter()
            .zip(&self.rate)
            .map(|(a, b)| a / b)
            .collect()
    }
}

/// Synthesised records plus the provenance needed to reproduce them.
#[derive(Debug, Clone)]
pub struct SynthesisedSet {
    /// Rows are records; all entries are non-negative integers stored as f64
    /// (pinned columns reproduce their constant, which may be fractional).
    pub samples: Array2<f64>,
    pub provenance: Provenance,
}

/// Identifies the exact generation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    /// SHA-256 over the seed matrix bytes (row-major little-endian f64).
    pub seed_hash: String,
    pub burn_in: usize,
    pub count: usize,
}

fn validate_seeds(seeds: &Array2<f64>) -> Result<(), PgmError> {
    if seeds.nrows() == 0 {
        return Err(PgmError::EmptySeeds);
    }
    for &v in seeds.iter() {
        if !v.is_finite() || v < 0.0 {
            return Err(PgmError::InvalidSeedValue(v));
        }
    }
    Ok(())
}

/// Moment-match a Gamma prior to the seed columns (population moments).
/// Constant columns are pinned; near-constant ones get the variance floor.
pub fn estimate_prior(seeds: &Array2<f64>) -> Result<GammaPrior, PgmError> {
    validate_seeds(seeds)?;
    let m = seeds.nrows() as f64;
    let dim = seeds.ncols();
    let mut shape = Vec::with_capacity(dim);
    let mut rate = Vec::with_capacity(dim);
    let mut pinned = Vec::with_capacity(dim);
    for col in seeds.columns() {
        let mean = col.sum() / m;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        if var == 0.0 {
            // Degenerate column: record the constant and keep a steep prior
            // concentrated on it so the (shape, rate) pair stays valid.
            pinned.push(Some(mean));
            if mean > 0.0 {
                shape.push(mean * mean / VARIANCE_FLOOR);
                rate.push(mean / VARIANCE_FLOOR);
            } else {
                shape.push(VARIANCE_FLOOR);
                rate.push(1.0 / VARIANCE_FLOOR);
            }
            continue;
        }
        pinned.push(None);
        let var = var.max(VARIANCE_FLOOR);
        shape.push(mean * mean / var);
        rate.push(mean / var);
    }
    Ok(GammaPrior {
        shape,
        rate,
        pinned,
    })
}

/// Conjugate update: add per-feature column sums to the shape and the record
/// count to the rate. An empty seed matrix returns the prior unchanged.
pub fn compute_posterior(
    seeds: &Array2<f64>,
    prior: &GammaPrior,
) -> Result<GammaPosterior, PgmError> {
    if seeds.nrows() > 0 && seeds.ncols() != prior.dim() {
        return Err(PgmError::DimensionMismatch {
            seeds: seeds.ncols(),
            prior: prior.dim(),
        });
    }
    for &v in seeds.iter() {
        if !v.is_finite() || v < 0.0 {
            return Err(PgmError::InvalidSeedValue(v));
        }
    }
    let m = seeds.nrows();
    let mut shape = prior.shape.clone();
    let mut rate = prior.rate.clone();
    if m > 0 {
        for (i, col) in seeds.columns().into_iter().enumerate() {
            shape[i] += col.sum();
            rate[i] += m as f64;
        }
    }
    Ok(GammaPosterior {
        shape,
        rate,
        evidence: m,
        pinned: prior.pinned.clone(),
    })
}

fn seed_hash(seeds: &Array2<f64>) -> String {
    let mut hasher = Sha256::new();
    for &v in seeds.iter() {
        hasher.update(v.to_le_bytes());
    }
    format!("{:x}", hasher.finalize())
}

/// Gibbs-sample `count` synthesised records from the posterior fitted to
/// `seeds`. Runs `burn_in + count` iterations, drawing a fresh Poisson rate
/// vector from the posterior each time and emitting a Poisson record only
/// after the burn-in prefix. Pinned columns emit their constant.
pub fn gibbs_generate(
    rng: &mut RandomSource,
    seeds: &Array2<f64>,
    count: usize,
    burn_in: usize,
) -> Result<SynthesisedSet, PgmError> {
    let prior = estimate_prior(seeds)?;
    let posterior = compute_posterior(seeds, &prior)?;
    gibbs_generate_from(rng, &posterior, count, burn_in, seed_hash(seeds))
}

/// Gibbs sampling against an explicit posterior.
pub fn gibbs_generate_from(
    rng: &mut RandomSource,
    posterior: &GammaPosterior,
    count: usize,
    burn_in: usize,
    seed_hash: String,
) -> Result<SynthesisedSet, PgmError> {
    let dim = posterior.dim();
    let mut samples = Array2::zeros((count, dim));
    let mut emitted = 0usize;
    for t in 0..(burn_in + count) {
        let mut rates = Vec::with_capacity(dim);
        for i in 0..dim {
            if posterior.pinned[i].is_some() {
                rates.push(0.0);
            } else {
                rates.push(rng.sample_gamma(posterior.shape[i], posterior.rate[i])?);
            }
        }
        if t >= burn_in {
            for i in 0..dim {
                samples[(emitted, i)] = match posterior.pinned[i] {
                    Some(constant) => constant,
                    None => rng.sample_poisson(rates[i])? as f64,
                };
            }
            emitted += 1;
        }
    }
    Ok(SynthesisedSet {
        samples,
        provenance: Provenance {
            seed_hash,
            burn_in,
            count,
        },
    })
}
