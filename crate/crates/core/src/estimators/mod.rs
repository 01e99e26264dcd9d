//! Estimators of the counterfactual score `ψ = E[S]` and of the score
//! difference between two abstaining classifiers.
//!
//! All three estimators are empirical means of a per-row term:
//!
//! | method  | per-row term                                   |
//! |---------|------------------------------------------------|
//! | plug-in | `μ̂₀(Xᵢ)`                                       |
//! | IPW     | `(1 − Rᵢ) Sᵢ / (1 − π̂(Xᵢ))`                    |
//! | DR      | `μ̂₀(Xᵢ) + (1 − Rᵢ)(Sᵢ − μ̂₀(Xᵢ)) / (1 − π̂(Xᵢ))` |
//!
//! Variances are the population-style (divide by `n`) empirical variance of
//! the per-row terms, and intervals are `ψ̂ ± z_{α/2} √(Var/n)`.

mod asympcs;
mod condessa;

use serde::{Deserialize, Serialize};

use crate::crossfit::NuisanceEstimates;
use crate::error::{Error, Result};
use crate::model::{Arm, EvalDataset, PairedDataset};
use crate::normal;
use crate::scalar::Scalar;

pub use asympcs::{
    asympcs_boundary, asympcs_half_width, choose_rho, watch_asympcs, watch_asympcs_paired, AsympCSParams, WatchConfig,
    WatchPoint,
};
pub use condessa::{estimate_condessa, CondessaReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plugin,
    Ipw,
    Dr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Plugin, Method::Ipw, Method::Dr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Plugin => "plugin",
            Method::Ipw => "ipw",
            Method::Dr => "dr",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plugin" => Ok(Method::Plugin),
            "ipw" => Ok(Method::Ipw),
            "dr" => Ok(Method::Dr),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn centered(center: T, half_width: T) -> Self {
        Self { lo: center - half_width, hi: center + half_width }
    }

    pub fn contains(&self, v: T) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn half_width(&self) -> T {
        self.width() / T::lit(2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport<T> {
    pub method: Method,
    pub psi_hat: T,
    pub if_variance: T,
    pub n: usize,
    pub alpha: T,
    pub ci: Interval<T>,
    /// Set when the per-row terms have exactly zero variance; the interval
    /// then collapses to the point estimate.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport<T> {
    pub method: Method,
    pub delta_hat: T,
    pub if_variance: T,
    pub n: usize,
    pub alpha: T,
    pub ci: Interval<T>,
    pub reject_null: bool,
    pub degenerate: bool,
    pub arm_a: EstimateReport<T>,
    pub arm_b: EstimateReport<T>,
}

/// Outcome of the two-sided test of `H₀: ψ^A = ψ^B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestDecision<T> {
    pub reject: bool,
    pub p_value: T,
    pub statistic: T,
}

/// The uncentered efficient influence function at one row; a missing
/// score on an abstained row contributes only `μ₀`.
pub fn eif_uncentered<T: Scalar>(mu0: T, pi: T, abstained: bool, s: Option<T>) -> Result<T> {
    if abstained {
        return Ok(mu0);
    }
    let s = s.ok_or(Error::MissingScore { row: 0 })?;
    Ok(mu0 + (s - mu0) / (T::one() - pi))
}

/// Mean and population variance. Bitwise-constant input gives exactly
/// `(value, 0)`.
pub fn mean_and_variance<T: Scalar>(values: &[T]) -> (T, T) {
    let first = values[0];
    if values.iter().all(|v| v.to_f64_lossy().to_bits() == first.to_f64_lossy().to_bits()) {
        return (first, T::zero());
    }
    let n = T::from_count(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
    (mean, var)
}

/// `ψ̂ ± z_{α/2} √(Var/n)`.
pub fn confidence_interval<T: Scalar>(psi_hat: T, if_variance: T, n: usize, alpha: T) -> Interval<T> {
    let z = normal::z_two_sided(alpha);
    Interval::centered(psi_hat, z * (if_variance / T::from_count(n)).sqrt())
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Per-row terms whose mean is the estimate for `method`.
pub fn influence_terms<T: Scalar>(method: Method, ds: &EvalDataset<T>, nuis: &NuisanceEstimates<T>) -> Result<Vec<T>> {
    if ds.len() != nuis.len() {
        return Err(Error::NuisanceLengthMismatch { nuisance: nuis.len(), data: ds.len() });
    }
    ds.iter()
        .zip(nuis.pi_hat().iter().zip(nuis.mu0_hat()))
        .enumerate()
        .map(|(row, (rec, (&pi, &mu0)))| {
            let missing = || Error::MissingScore { row };
            match method {
                Method::Plugin => Ok(mu0),
                Method::Ipw => {
                    if rec.abstained {
                        Ok(T::zero())
                    } else {
                        Ok(rec.score.ok_or_else(missing)? / (T::one() - pi))
                    }
                }
                Method::Dr => eif_uncentered(mu0, pi, rec.abstained, rec.score).map_err(|_| missing()),
            }
        })
        .collect()
}

fn report_from_terms<T: Scalar>(method: Method, terms: &[T], alpha: T) -> EstimateReport<T> {
    let n = terms.len();
    let (psi_hat, if_variance) = mean_and_variance(terms);
    EstimateReport {
        method,
        psi_hat,
        if_variance,
        n,
        alpha,
        ci: confidence_interval(psi_hat, if_variance, n, alpha),
        degenerate: if_variance == T::zero(),
    }
}

pub fn estimate<T: Scalar>(
    method: Method,
    ds: &EvalDataset<T>,
    nuis: &NuisanceEstimates<T>,
    alpha: T,
) -> Result<EstimateReport<T>> {
    check_alpha(alpha)?;
    let terms = influence_terms(method, ds, nuis)?;
    Ok(report_from_terms(method, &terms, alpha))
}

/// Plug-in estimate: the mean of `μ̂₀`. Biased in general; reported for comparison.
pub fn estimate_plugin<T: Scalar>(
    ds: &EvalDataset<T>,
    nuis: &NuisanceEstimates<T>,
    alpha: T,
) -> Result<EstimateReport<T>> {
    estimate(Method::Plugin, ds, nuis, alpha)
}

pub fn estimate_ipw<T: Scalar>(
    ds: &EvalDataset<T>,
    nuis: &NuisanceEstimates<T>,
    alpha: T,
) -> Result<EstimateReport<T>> {
    estimate(Method::Ipw, ds, nuis, alpha)
}

/// Doubly robust estimate: the empirical mean of the estimated EIF.
pub fn estimate_dr<T: Scalar>(ds: &EvalDataset<T>, nuis: &NuisanceEstimates<T>, alpha: T) -> Result<EstimateReport<T>> {
    estimate(Method::Dr, ds, nuis, alpha)
}

/// Inference on `Δ = ψ^A − ψ^B` from the row-wise difference of the two
/// arms' influence terms.
pub fn estimate_difference<T: Scalar>(
    method: Method,
    pds: &PairedDataset<T>,
    nuis_a: &NuisanceEstimates<T>,
    nuis_b: &NuisanceEstimates<T>,
    alpha: T,
) -> Result<ComparisonReport<T>> {
    check_alpha(alpha)?;
    let terms_a = influence_terms(method, &pds.arm(Arm::A), nuis_a)?;
    let terms_b = influence_terms(method, &pds.arm(Arm::B), nuis_b)?;
    let diff: Vec<T> = terms_a.iter().zip(&terms_b).map(|(a, b)| *a - *b).collect();
    let d = report_from_terms(method, &diff, alpha);
    Ok(ComparisonReport {
        method,
        delta_hat: d.psi_hat,
        if_variance: d.if_variance,
        n: d.n,
        alpha,
        ci: d.ci,
        reject_null: !d.ci.contains(T::zero()),
        degenerate: d.degenerate,
        arm_a: report_from_terms(method, &terms_a, alpha),
        arm_b: report_from_terms(method, &terms_b, alpha),
    })
}

pub fn estimate_difference_dr<T: Scalar>(
    pds: &PairedDataset<T>,
    nuis_a: &NuisanceEstimates<T>,
    nuis_b: &NuisanceEstimates<T>,
    alpha: T,
) -> Result<ComparisonReport<T>> {
    estimate_difference(Method::Dr, pds, nuis_a, nuis_b, alpha)
}

/// Wald test obtained by inverting the interval. A degenerate report
/// rejects exactly when the point estimate is nonzero.
pub fn two_sided_test<T: Scalar>(cr: &ComparisonReport<T>) -> TestDecision<T> {
    let se = (cr.if_variance / T::from_count(cr.n)).sqrt();
    let (statistic, p_value) = if se > T::zero() {
        let z = cr.delta_hat.abs() / se;
        (z, T::lit(2.0) * (T::one() - normal::cdf(z)))
    } else if cr.delta_hat == T::zero() {
        (T::zero(), T::one())
    } else {
        (T::infinity(), T::zero())
    };
    TestDecision { reject: !cr.ci.contains(T::zero()), p_value, statistic }
}
