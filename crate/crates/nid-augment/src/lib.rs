//! Data-augmentation-enhanced network intrusion detection.
//!
//! The crate turns a handful of intrusion records into a balanced training
//! set in two stages and then trains and scores supervised detectors on the
//! result:
//!
//! 1. [`pgm`] fits a per-feature Poisson-Gamma model to the seed records and
//!    Gibbs-samples synthesised intrusion data from the conjugate posterior.
//! 2. [`dgnn`] pre-trains a generator/discriminator pair on the synthesised
//!    data and fine-tunes it against the real seeds, producing refined
//!    augmented records.
//! 3. [`classifiers`] and [`eval`] train logistic-regression, linear-SVM and
//!    DNN detectors on the balanced set and report per-class metrics over
//!    repeated trials.
//!
//! [`kdd`] handles the KDD-Cup-99 wire format (parsing, 38-feature encoding,
//! normalization, small-sample partitioning) and [`pipeline`] wires the whole
//! flow behind the `nid` command-line tool. Every stochastic step draws from
//! the seeded [`rng::RandomSource`], so identical configuration and seed
//! reproduce identical artifacts.
//!
//! See the crate `examples/` directory for one runnable example per stage.

pub mod classifiers;
pub mod dgnn;
pub mod eval;
pub mod kdd;
pub mod neural;
pub mod pgm;
pub mod pipeline;
pub mod rng;
