//! Counterfactual evaluation of black-box abstaining classifiers.
//!
//! An abstaining classifier withholds some of its predictions, so its score
//! on the withheld inputs is missing from the evaluation log. Treating those
//! scores as missing at random, this crate estimates the score the classifier
//! would have attained had it never abstained, and the difference of that
//! score between two classifiers, with doubly robust estimators built on
//! cross-fitted nuisance functions.
//!
//! The estimator and data-model layers are generic over the scalar type
//! ([`Scalar`], implemented for `f32` and `f64`). The learners, simulation
//! and study harness work in `f64`; the aliases at the crate root name the
//! `f64` instantiations used throughout the pipeline.

pub mod crossfit;
pub mod error;
pub mod estimators;
pub mod io;
pub mod model;
pub mod normal;
pub mod nuisance;
pub mod scalar;
pub mod scoring;
pub mod seed;
pub mod simulation;
pub mod studies;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type EvalRecord = model::EvalRecord<f64>;
pub type EvalDataset = model::EvalDataset<f64>;
pub type PairedDataset = model::PairedDataset<f64>;
pub type DatasetSummary = model::DatasetSummary<f64>;
pub type ScoreRange = model::ScoreRange<f64>;
pub type ProbPrediction = scoring::ProbPrediction<f64>;
pub type NuisanceEstimates = crossfit::NuisanceEstimates<f64>;
pub type EstimateReport = estimators::EstimateReport<f64>;
pub type ComparisonReport = estimators::ComparisonReport<f64>;
pub type CondessaReport = estimators::CondessaReport<f64>;
pub type Interval = estimators::Interval<f64>;
