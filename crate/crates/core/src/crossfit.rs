//! K-fold cross-fitting of the nuisance functions.
//!
//! For every fold, `π̂` is fitted on `(X, R)` of the remaining folds and
//! `μ̂₀` on `(X, S)` of the remaining folds' non-abstained rows; both are
//! then evaluated on the held-out fold only.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EvalDataset;
use crate::nuisance::{clip_propensity, fit_learner, ClipBounds, LearnerSpec};
use crate::scalar::Scalar;
use crate::seed;

/// Balanced partition of `0..n` into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    k: usize,
    fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(training complement, held-out rows)` of `fold`, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..self.fold_of.len()).partition(|&i| self.fold_of[i] == fold);
        (train, test)
    }
}

/// Uniformly random balanced fold assignment, deterministic given `seed`.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::BadFoldCount { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldDiagnostics {
    pub fold: usize,
    pub held_out: usize,
    pub held_out_observed: usize,
    pub train_observed: usize,
}

/// Per-row nuisance values used by the estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceEstimates<T> {
    pi_hat: Vec<T>,
    mu0_hat: Vec<T>,
    clip: ClipBounds,
    folds: Option<FoldAssignment>,
    diagnostics: Vec<FoldDiagnostics>,
}

impl<T: Scalar> NuisanceEstimates<T> {
    /// Nuisance values supplied directly (oracle or fixed functions). Every
    /// propensity must already lie within `clip`.
    pub fn from_values(pi_hat: Vec<T>, mu0_hat: Vec<T>, clip: ClipBounds) -> Result<Self> {
        if pi_hat.len() != mu0_hat.len() {
            return Err(Error::NuisanceLengthMismatch { nuisance: pi_hat.len(), data: mu0_hat.len() });
        }
        if let Some(bad) = pi_hat.iter().find(|p| !clip.contains(p.to_f64_lossy())) {
            return Err(Error::InvalidParameter(format!(
                "propensity {bad} outside clip bounds [{}, {}]",
                clip.lo, clip.hi
            )));
        }
        if mu0_hat.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("non-finite score regression value".into()));
        }
        Ok(Self { pi_hat, mu0_hat, clip, folds: None, diagnostics: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.pi_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_hat.is_empty()
    }

    pub fn pi_hat(&self) -> &[T] {
        &self.pi_hat
    }

    pub fn mu0_hat(&self) -> &[T] {
        &self.mu0_hat
    }

    pub fn clip(&self) -> ClipBounds {
        self.clip
    }

    pub fn folds(&self) -> Option<&FoldAssignment> {
        self.folds.as_ref()
    }

    pub fn diagnostics(&self) -> &[FoldDiagnostics] {
        &self.diagnostics
    }

    /// Replaces every propensity by `value`, widening the clip bounds to
    /// include it.
    pub fn with_constant_propensity(mut self, value: T) -> Result<Self> {
        let v = value.to_f64_lossy();
        let clip = ClipBounds::new(self.clip.lo.min(v), self.clip.hi.max(v))?;
        if v >= 1.0 {
            return Err(Error::InvalidParameter("constant propensity must be below 1".into()));
        }
        self.pi_hat.iter_mut().for_each(|p| *p = value);
        self.clip = clip;
        Ok(self)
    }
}

pub fn feature_matrix(ds: &EvalDataset<f64>) -> Array2<f64> {
    let d = ds.dim();
    let flat: Vec<f64> = ds.iter().flat_map(|r| r.x.iter().copied()).collect();
    Array2::from_shape_vec((ds.len(), d), flat).expect("validated dataset is rectangular")
}

struct FoldFit {
    test: Vec<usize>,
    pi: Vec<f64>,
    mu0: Vec<f64>,
    diag: FoldDiagnostics,
}

/// Cross-fits `π̂` and `μ̂₀` with `k` folds.
pub fn crossfit_nuisances(
    ds: &EvalDataset<f64>,
    pi_spec: &LearnerSpec,
    mu_spec: &LearnerSpec,
    k: usize,
    clip: ClipBounds,
    seed: u64,
) -> Result<NuisanceEstimates<f64>> {
    let n = ds.len();
    let folds = make_folds(n, k, seed::derive(seed, 0))?;
    let x = feature_matrix(ds);
    let r: Vec<f64> = ds.abstention_flags().map(|a| if a { 1.0 } else { 0.0 }).collect();

    let fits = (0..k)
        .into_par_iter()
        .map(|fold| -> Result<FoldFit> {
            let (train, test) = folds.split(fold);
            let observed: Vec<usize> = train.iter().copied().filter(|&i| r[i] == 0.0).collect();
            if observed.len() < 2 {
                return Err(Error::InsufficientObservedRows { fold, got: observed.len() });
            }
            let fold_seed = seed::derive(seed, fold as u64 + 1);
            let pi_spec = pi_spec.with_seed(seed::derive(fold_seed, pi_spec.seed ^ 0x9191));
            let mu_spec = mu_spec.with_seed(seed::derive(fold_seed, mu_spec.seed ^ 0x3737));

            let x_train = x.select(Axis(0), &train);
            let r_train: Vec<f64> = train.iter().map(|&i| r[i]).collect();
            let pi_model = fit_learner(&pi_spec, x_train.view(), &r_train)?;

            let x_obs = x.select(Axis(0), &observed);
            let s_obs: Vec<f64> =
                observed.iter().map(|&i| ds.records()[i].score.expect("validated: r = 0 carries a score")).collect();
            let mu_model = fit_learner(&mu_spec, x_obs.view(), &s_obs)?;

            let x_test = x.select(Axis(0), &test);
            let pi = pi_model.predict(x_test.view()).into_iter().map(|p| clip_propensity(p, clip)).collect();
            let mu0 = mu_model.predict(x_test.view());
            let diag = FoldDiagnostics {
                fold,
                held_out: test.len(),
                held_out_observed: test.iter().filter(|&&i| r[i] == 0.0).count(),
                train_observed: observed.len(),
            };
            Ok(FoldFit { test, pi, mu0, diag })
        })
        .collect::<Vec<_>>();

    let mut pi_hat = vec![0.0; n];
    let mut mu0_hat = vec![0.0; n];
    let mut diagnostics = Vec::with_capacity(k);
    for fit in fits {
        let fit = fit?;
        for (j, &i) in fit.test.iter().enumerate() {
            pi_hat[i] = fit.pi[j];
            mu0_hat[i] = fit.mu0[j];
        }
        diagnostics.push(fit.diag);
    }
    debug_assert!(pi_hat.iter().all(|p| clip.contains(*p)));
    Ok(NuisanceEstimates { pi_hat, mu0_hat, clip, folds: Some(folds), diagnostics })
}
