//! Desk-scale research engine for post-earnings-announcement drift (PEAD).
//!
//! The pipeline runs end to end on synthetic or user-supplied CSV bundles:
//!
//! 1. [`bundle`] ingests prices, fundamentals, estimates, and short interest;
//! 2. [`market`] resolves announcement timing and computes cumulative
//!    abnormal-return labels against a market-proxy index;
//! 3. [`features`] engineers per-event feature vectors, winsorizes and
//!    standardizes them per company, and stacks the training matrix;
//! 4. [`gbt`] trains second-order gradient-boosted regression trees with
//!    exact greedy split finding and missing-value default directions;
//! 5. [`ga`] tunes the tree hyperparameters with a genetic algorithm scored
//!    by k-fold cross-validation;
//! 6. [`backtest`] runs walk-forward direction, portfolio-ranking,
//!    feature-occurrence, and delayed-entry studies;
//! 7. [`synth`] generates datasets with a planted, recoverable drift signal
//!    so every claim above is testable without proprietary data.
//!
//! Numeric kernels are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix `f64` for ordinary use.

pub mod backtest;
pub mod bundle;
pub mod calendar;
pub mod features;
pub mod ga;
pub mod gbt;
pub mod market;
pub mod scalar;
pub mod synth;

pub use calendar::TradingCalendar;
pub use scalar::Scalar;

/// Feature matrix in the default `f64` precision.
pub type Matrix = features::FeatureMatrix<f64>;
/// Trained ensemble in the default `f64` precision.
pub type Model = gbt::Ensemble<f64>;
/// Validated dataset in the default `f64` precision.
pub type Dataset = market::RawDataset<f64>;
/// Price series in the default `f64` precision.
pub type Prices = market::PriceSeries<f64>;
/// CAR label in the default `f64` precision.
pub type Label = market::CarLabel<f64>;
/// Backtest study context in the default `f64` precision.
pub type Study = backtest::StudySet<f64>;
