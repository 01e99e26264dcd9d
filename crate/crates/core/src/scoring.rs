//! Positively oriented scoring rules for probabilistic predictions.
//!
//! Class labels are 0-based indices into the probability vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ScoreRange;
use crate::scalar::Scalar;

const SIMPLEX_TOL: f64 = 1e-9;

/// A probability vector over `C` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbPrediction<T> {
    probs: Vec<T>,
}

impl<T: Scalar> ProbPrediction<T> {
    /// Rejects (rather than renormalizes) vectors off the simplex by more than 1e-9.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        let sum: T = probs.iter().copied().sum();
        let bad = probs.is_empty()
            || probs.iter().any(|p| !p.is_finite() || *p < T::zero())
            || (sum - T::one()).abs() > T::lit(SIMPLEX_TOL).max(T::epsilon() * T::lit(4.0));
        if bad {
            return Err(Error::InvalidProbabilities { sum: sum.to_f64_lossy() });
        }
        Ok(Self { probs })
    }

    /// Binary prediction `(1 - p, p)` where `p` is the probability of class 1.
    pub fn binary(p1: T) -> Result<Self> {
        Self::new(vec![T::one() - p1, p1])
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, p) in self.probs.iter().enumerate().skip(1) {
            if *p > self.probs[best] {
                best = c;
            }
        }
        best
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.classes() {
            return Err(Error::LabelOutOfRange { label: y, classes: self.classes() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreRule {
    Accuracy,
    Brier,
}

impl ScoreRule {
    pub fn score<T: Scalar>(self, p: &ProbPrediction<T>, y: usize) -> Result<T> {
        match self {
            ScoreRule::Accuracy => accuracy_score(p, y),
            ScoreRule::Brier => brier_score(p, y),
        }
    }

    pub fn range<T: Scalar>(self) -> ScoreRange<T> {
        match self {
            ScoreRule::Accuracy => ScoreRange::unit(),
            ScoreRule::Brier => ScoreRange::brier(),
        }
    }
}

/// 1 if the predicted class is `y`, else 0.
pub fn accuracy_score<T: Scalar>(p: &ProbPrediction<T>, y: usize) -> Result<T> {
    p.check_label(y)?;
    Ok(if p.argmax() == y { T::one() } else { T::zero() })
}

/// `1 - Σ_c (p_c - 1{y = c})²`, in `[-1, 1]`.
pub fn brier_score<T: Scalar>(p: &ProbPrediction<T>, y: usize) -> Result<T> {
    p.check_label(y)?;
    let loss: T = p
        .probs
        .iter()
        .enumerate()
        .map(|(c, &pc)| {
            let d = if c == y { pc - T::one() } else { pc };
            d * d
        })
        .sum();
    Ok(T::one() - loss)
}
