//! Learners for the two nuisance functions: the abstention propensity
//! `π(x) = P(R = 1 | X = x)` and the selective score regression
//! `μ₀(x) = E[S | R = 0, X = x]`.
//!
//! Every learner is fitted from a row-major feature matrix and real targets
//! and is deterministic given its seed.

mod forest;
mod knn;
mod linear;
mod stack;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{RandomForest, RegressionTree};
pub use knn::KnnRegressor;
pub use linear::{LogisticRegression, RidgeRegression, Standardizer};
pub use stack::{fit_super_learner, simplex_weights, SuperLearner};

/// Learner family with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    /// L2-regularized least squares on standardized features, intercept unpenalized.
    Ridge { lambda: f64 },
    /// L2-regularized logistic regression fitted by Newton's method.
    Logistic { lambda: f64, max_iter: usize, tol: f64 },
    /// Mean of the `k` nearest training targets in z-scored Euclidean distance.
    Knn { k: usize },
    /// Bagged variance-reduction regression trees.
    RandomForest {
        n_trees: usize,
        min_leaf: usize,
        /// Features tried per split; `None` means `ceil(sqrt(d))`.
        max_features: Option<usize>,
    },
    /// Convex combination of base learners fitted on out-of-fold predictions.
    SuperLearner { bases: Vec<LearnerKind>, folds: usize },
}

impl LearnerKind {
    pub fn ridge() -> Self {
        LearnerKind::Ridge { lambda: 1.0 }
    }

    pub fn logistic() -> Self {
        LearnerKind::Logistic { lambda: 1.0, max_iter: 100, tol: 1e-8 }
    }

    pub fn knn() -> Self {
        LearnerKind::Knn { k: 10 }
    }

    pub fn random_forest() -> Self {
        LearnerKind::RandomForest { n_trees: 100, min_leaf: 5, max_features: None }
    }

    /// k-NN, random forest and a linear model; `binary` selects logistic
    /// over ridge for the linear member.
    pub fn super_learner(binary: bool) -> Self {
        let linear = if binary { Self::logistic() } else { Self::ridge() };
        LearnerKind::SuperLearner { bases: vec![Self::knn(), Self::random_forest(), linear], folds: 5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Ridge { .. } => "ridge",
            LearnerKind::Logistic { .. } => "logistic",
            LearnerKind::Knn { .. } => "knn",
            LearnerKind::RandomForest { .. } => "random_forest",
            LearnerKind::SuperLearner { .. } => "super_learner",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { kind: self.kind.clone(), seed }
    }
}

/// Nuisance learner pairings used by the studies and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceProfile {
    /// Logistic regression for π̂, ridge regression for μ̂₀.
    Linear,
    RandomForest,
    SuperLearner,
}

impl NuisanceProfile {
    pub const ALL: [NuisanceProfile; 3] =
        [NuisanceProfile::Linear, NuisanceProfile::RandomForest, NuisanceProfile::SuperLearner];

    pub fn propensity(self) -> LearnerKind {
        match self {
            NuisanceProfile::Linear => LearnerKind::logistic(),
            NuisanceProfile::RandomForest => LearnerKind::random_forest(),
            NuisanceProfile::SuperLearner => LearnerKind::super_learner(true),
        }
    }

    pub fn regression(self) -> LearnerKind {
        match self {
            NuisanceProfile::Linear => LearnerKind::ridge(),
            NuisanceProfile::RandomForest => LearnerKind::random_forest(),
            NuisanceProfile::SuperLearner => LearnerKind::super_learner(false),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NuisanceProfile::Linear => "linear",
            NuisanceProfile::RandomForest => "random_forest",
            NuisanceProfile::SuperLearner => "super_learner",
        }
    }
}

impl std::str::FromStr for NuisanceProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(NuisanceProfile::Linear),
            "random_forest" => Ok(NuisanceProfile::RandomForest),
            "super_learner" => Ok(NuisanceProfile::SuperLearner),
            other => Err(Error::InvalidLearner(format!("unknown nuisance profile {other:?}"))),
        }
    }
}

/// A fitted nuisance model. Immutable; prediction is deterministic.
#[derive(Debug, Clone)]
pub enum FittedPredictor {
    Constant(f64),
    Ridge(RidgeRegression),
    Logistic(LogisticRegression),
    Knn(KnnRegressor),
    Forest(RandomForest),
    Stack(SuperLearner),
}

impl FittedPredictor {
    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        match self {
            FittedPredictor::Constant(c) => *c,
            FittedPredictor::Ridge(m) => m.predict_row(x),
            FittedPredictor::Logistic(m) => m.predict_row(x),
            FittedPredictor::Knn(m) => m.predict_row(x),
            FittedPredictor::Forest(m) => m.predict_row(x),
            FittedPredictor::Stack(m) => m.predict_row(x),
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|row| self.predict_row(row)).collect()
    }
}

pub(crate) fn check_training_data(x: ArrayView2<f64>, y: &[f64], min: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidLearner(format!("{} feature rows but {} targets", x.nrows(), y.len())));
    }
    if y.len() < min {
        return Err(Error::TooFewSamples { needed: min, got: y.len() });
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidLearner("no features".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidLearner("non-finite training data".into()));
    }
    Ok(())
}

/// Fits one learner. Requires at least two rows.
pub fn fit_learner(spec: &LearnerSpec, x: ArrayView2<f64>, y: &[f64]) -> Result<FittedPredictor> {
    check_training_data(x, y, 2)?;
    match &spec.kind {
        LearnerKind::Ridge { lambda } => RidgeRegression::fit(x, y, *lambda).map(FittedPredictor::Ridge),
        LearnerKind::Logistic { lambda, max_iter, tol } => {
            LogisticRegression::fit(x, y, *lambda, *max_iter, *tol).map(FittedPredictor::Logistic)
        }
        LearnerKind::Knn { k } => KnnRegressor::fit(x, y, *k).map(FittedPredictor::Knn),
        LearnerKind::RandomForest { n_trees, min_leaf, max_features } => {
            RandomForest::fit(x, y, *n_trees, *min_leaf, *max_features, spec.seed).map(FittedPredictor::Forest)
        }
        LearnerKind::SuperLearner { bases, folds } => {
            let specs: Vec<LearnerSpec> = bases
                .iter()
                .enumerate()
                .map(|(i, k)| LearnerSpec::new(k.clone(), crate::seed::derive(spec.seed, i as u64)))
                .collect();
            fit_super_learner(&specs, x, y, *folds, spec.seed).map(FittedPredictor::Stack)
        }
    }
}

/// Bounds applied to propensity predictions, `0 ≤ lo < hi ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    pub lo: f64,
    pub hi: f64,
}

impl ClipBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidClipBounds { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Caps the propensity at `1 - epsilon`, keeping the default floor.
    pub fn positivity(epsilon: f64) -> Result<Self> {
        Self::new(0.01_f64.min(1.0 - epsilon - 1e-12).max(0.0), 1.0 - epsilon)
    }

    pub fn contains(&self, p: f64) -> bool {
        p >= self.lo && p <= self.hi
    }
}

impl Default for ClipBounds {
    fn default() -> Self {
        Self { lo: 0.01, hi: 0.99 }
    }
}

pub fn clip_propensity(p: f64, b: ClipBounds) -> f64 {
    p.max(b.lo).min(b.hi)
}
