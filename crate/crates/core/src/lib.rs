//! Schema-driven applicant triage.
//!
//! The pipeline loads delimited application records against a declared
//! schema, featurizes them (numeric imputation with missingness indicators,
//! one-hot encoding with rare-category merging, TF-IDF text features), fits a
//! gradient-boosted tree model of admission probability, organizes applicants
//! into probability-ranked pools and evaluates the result (pool recall,
//! two-proportion χ² tests, subgroup composition, ablations and exact-interval
//! calibration).
//!
//! The numerical core ([`gbdt`], [`pooling`], [`stats`] and the matrices
//! produced by [`featurize`]) is generic over a [`Scalar`] type; `f64` and
//! `f32` aliases are provided at the crate root.

pub mod ablation;
pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod featurize;
pub mod gbdt;
pub mod pooling;
pub mod report;
pub mod scalar;
pub mod schema;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FeatureMatrix64 = featurize::FeatureMatrix<f64>;
pub type FeatureMatrix32 = featurize::FeatureMatrix<f32>;
pub type GbdtModel64 = gbdt::GbdtModel<f64>;
pub type GbdtModel32 = gbdt::GbdtModel<f32>;
pub type TrainConfig64 = gbdt::TrainConfig<f64>;
pub type TrainConfig32 = gbdt::TrainConfig<f32>;
pub type PoolAssignment64 = pooling::PoolAssignment<f64>;
pub type PoolSummary64 = pooling::PoolSummary<f64>;
pub type ChiSqResult64 = stats::ChiSqResult<f64>;
pub type ExactInterval64 = stats::ExactInterval<f64>;
pub type RecallCurve64 = stats::RecallCurve<f64>;
pub type ScoreHistogram64 = stats::ScoreHistogram<f64>;
