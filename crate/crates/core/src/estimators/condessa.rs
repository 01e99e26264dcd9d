//! Classification quality score `θ = E[S | R=0] P(R=0) + E[1 − S | R=1] P(R=1)`
//! and its expert-deferral variant `θ^E`.
//!
//! `θ + ψ = 2 E[(1 − R) S] + P(R = 1)` is directly observable, so any
//! estimate of `ψ` yields one of `θ` by subtraction.

use serde::{Deserialize, Serialize};

use super::EstimateReport;
use crate::error::{Error, Result};
use crate::model::EvalDataset;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondessaReport<T> {
    pub theta_hat: T,
    /// `θ^E`, present when expert scores were supplied.
    pub theta_expert_hat: Option<T>,
    pub psi_report: EstimateReport<T>,
}

/// `expert`, when given, is aligned with the rows and holds a value exactly
/// on the abstained rows. All scores must lie in `[0, 1]`.
pub fn estimate_condessa<T: Scalar>(
    ds: &EvalDataset<T>,
    psi_report: &EstimateReport<T>,
    expert: Option<&[Option<T>]>,
) -> Result<CondessaReport<T>> {
    let range = ds.score_range();
    if range.lo < T::zero() || range.hi > T::one() {
        return Err(Error::ScoreRangeViolation(format!(
            "classification quality score needs scores in [0, 1], dataset declares [{}, {}]",
            range.lo, range.hi
        )));
    }
    let n = T::from_count(ds.len());
    let mut revealed_sum = T::zero();
    let mut abstained = T::zero();
    for rec in ds.iter() {
        match rec.score {
            Some(s) if !rec.abstained => {
                if s < T::zero() || s > T::one() {
                    return Err(Error::ScoreRangeViolation(format!("score {s} outside [0, 1]")));
                }
                revealed_sum = revealed_sum + s;
            }
            _ => abstained = abstained + T::one(),
        }
    }
    let observable = T::lit(2.0) * revealed_sum / n + abstained / n;
    let theta_hat = observable - psi_report.psi_hat;

    let theta_expert_hat = match expert {
        None => None,
        Some(e) => {
            if e.len() != ds.len() {
                return Err(Error::ExpertAlignmentError { row: e.len().min(ds.len()) });
            }
            let mut correction = T::zero();
            for (row, (rec, ev)) in ds.iter().zip(e).enumerate() {
                match (rec.abstained, ev) {
                    (true, Some(v)) => correction = correction + (*v - T::one()),
                    (false, None) => {}
                    _ => return Err(Error::ExpertAlignmentError { row }),
                }
            }
            Some(theta_hat + correction / n)
        }
    };
    Ok(CondessaReport { theta_hat, theta_expert_hat, psi_report: *psi_report })
}
