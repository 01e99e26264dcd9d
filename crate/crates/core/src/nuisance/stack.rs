use ndarray::{ArrayView1, ArrayView2, Axis};

use super::{check_training_data, fit_learner, FittedPredictor, LearnerSpec};
use crate::crossfit::make_folds;
use crate::error::{Error, Result};
use crate::seed;

const EG_STEP: f64 = 0.1;
const EG_ITERATIONS: usize = 500;

/// Stacked ensemble: convex weights over base learners refitted on all data.
#[derive(Debug, Clone)]
pub struct SuperLearner {
    weights: Vec<f64>,
    bases: Vec<FittedPredictor>,
    oof_mse: Vec<f64>,
    ensemble_oof_mse: f64,
}

impl SuperLearner {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Out-of-fold mean squared error of each base learner.
    pub fn base_oof_mse(&self) -> &[f64] {
        &self.oof_mse
    }

    pub fn ensemble_oof_mse(&self) -> f64 {
        self.ensemble_oof_mse
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        self.weights.iter().zip(&self.bases).filter(|(w, _)| **w > 0.0).map(|(w, b)| w * b.predict_row(x)).sum()
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

fn mix(columns: &[Vec<f64>], w: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (col, &wb) in columns.iter().zip(w) {
        for (o, p) in out.iter_mut().zip(col) {
            *o += wb * p;
        }
    }
}

/// Convex weights minimizing the mean squared error of `Σ_b w_b · columns[b]`
/// against `y`: exponentiated gradient from the uniform point, followed by a
/// comparison against the simplex vertices so the result is never worse
/// than the best single column.
pub fn simplex_weights(columns: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let b = columns.len();
    let n = y.len() as f64;
    let mut w = vec![1.0 / b as f64; b];
    let mut pred = vec![0.0; y.len()];
    let mut grad = vec![0.0; b];
    for _ in 0..EG_ITERATIONS {
        mix(columns, &w, &mut pred);
        for (g, col) in grad.iter_mut().zip(columns) {
            *g = 2.0 / n * col.iter().zip(pred.iter().zip(y)).map(|(c, (p, t))| (p - t) * c).sum::<f64>();
        }
        let shift = grad.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (wb, g) in w.iter_mut().zip(&grad) {
            *wb *= (-EG_STEP * (g - shift)).exp();
            total += *wb;
        }
        w.iter_mut().for_each(|v| *v /= total);
    }
    mix(columns, &w, &mut pred);
    let mixed = mse(&pred, y);
    let (best, best_mse) =
        columns
            .iter()
            .map(|c| mse(c, y))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, m)| if m < acc.1 { (i, m) } else { acc });
    if best_mse < mixed {
        let mut vertex = vec![0.0; b];
        vertex[best] = 1.0;
        return vertex;
    }
    w
}

/// Fits the stacked ensemble with `folds`-fold out-of-fold predictions.
pub fn fit_super_learner(
    bases: &[LearnerSpec],
    x: ArrayView2<f64>,
    y: &[f64],
    folds: usize,
    seed: u64,
) -> Result<SuperLearner> {
    if bases.len() < 2 {
        return Err(Error::InvalidLearner("super learner needs at least two base learners".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidLearner("super learner needs at least two folds".into()));
    }
    check_training_data(x, y, folds.max(2))?;
    let n = y.len();
    let assignment = make_folds(n, folds, seed::derive(seed, 0x51))?;
    let mut oof = vec![vec![0.0; n]; bases.len()];
    for fold in 0..folds {
        let (train, test) = assignment.split(fold);
        let xt = x.select(Axis(0), &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let xh = x.select(Axis(0), &test);
        for (b, spec) in bases.iter().enumerate() {
            let fitted = fit_learner(&spec.with_seed(seed::derive(spec.seed, fold as u64)), xt.view(), &yt)?;
            for (&i, p) in test.iter().zip(fitted.predict(xh.view())) {
                oof[b][i] = p;
            }
        }
    }
    let weights = simplex_weights(&oof, y);
    let oof_mse: Vec<f64> = oof.iter().map(|c| mse(c, y)).collect();
    let mut pred = vec![0.0; n];
    mix(&oof, &weights, &mut pred);
    let ensemble_oof_mse = mse(&pred, y);
    let bases = bases
        .iter()
        .zip(&weights)
        .map(|(spec, &w)| if w > 0.0 { fit_learner(spec, x, y) } else { Ok(FittedPredictor::Constant(0.0)) })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuperLearner { weights, bases, oof_mse, ensemble_oof_mse })
}
