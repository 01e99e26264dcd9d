//! Asymptotic confidence sequences: intervals that remain valid when the
//! estimate is recomputed and inspected after every new batch of data.

use serde::{Deserialize, Serialize};

use super::{estimate_dr, Interval};
use crate::crossfit::crossfit_nuisances;
use crate::error::{Error, Result};
use crate::model::{Arm, EvalDataset, PairedDataset};
use crate::nuisance::{ClipBounds, LearnerSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsympCSParams<T> {
    pub rho: T,
    pub alpha: T,
}

impl<T: Scalar> AsympCSParams<T> {
    pub fn new(rho: T, alpha: T) -> Result<Self> {
        if !(rho > T::zero() && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Self { rho, alpha })
    }

    /// Tuned so the boundary is tightest at `n_opt` samples.
    pub fn tuned(n_opt: usize, alpha: T) -> Result<Self> {
        Self::new(choose_rho(n_opt, alpha), alpha)
    }
}

/// `√Var · √( (2nρ² + 1)/(n²ρ²) · log(√(nρ² + 1)/α) )`.
pub fn asympcs_half_width<T: Scalar>(if_variance: T, n: usize, params: AsympCSParams<T>) -> T {
    let n = T::from_count(n);
    let r2 = params.rho * params.rho;
    let two = T::lit(2.0);
    let scale = (two * n * r2 + T::one()) / (n * n * r2);
    let log_term = ((n * r2 + T::one()).sqrt() / params.alpha).ln();
    if_variance.sqrt() * (scale * log_term).sqrt()
}

pub fn asympcs_boundary<T: Scalar>(psi_hat: T, if_variance: T, n: usize, params: AsympCSParams<T>) -> Interval<T> {
    Interval::centered(psi_hat, asympcs_half_width(if_variance, n, params))
}

/// Golden-section search over `log ρ ∈ [-6, 2]` for the `ρ` minimizing the
/// half-width at `n_opt` (the variance factor does not affect the argmin).
pub fn choose_rho<T: Scalar>(n_opt: usize, alpha: T) -> T {
    let width = |log_rho: f64| {
        let params = AsympCSParams { rho: log_rho.exp(), alpha: alpha.to_f64_lossy() };
        asympcs_half_width(1.0, n_opt.max(1), params)
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-6.0f64, 2.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (width(c), width(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = width(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = width(d);
        }
    }
    T::lit((0.5 * (a + b)).exp())
}

/// Nuisance configuration shared by every snapshot of a watch stream.
#[derive(Debug, Clone, PartialEq)]
pub struct WatchConfig {
    pub pi_spec: LearnerSpec,
    pub mu_spec: LearnerSpec,
    pub folds: usize,
    pub clip: ClipBounds,
    pub seed: u64,
    pub params: AsympCSParams<f64>,
}

/// One emission of a watch stream. `interval` is `None` when the snapshot
/// could not be estimated; `error` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatchPoint {
    pub n: usize,
    pub estimate: Option<f64>,
    pub interval: Option<Interval<f64>>,
    pub error: Option<String>,
}

impl WatchPoint {
    fn skipped(n: usize, e: Error) -> Self {
        Self { n, estimate: None, interval: None, error: Some(e.to_string()) }
    }
}

fn dr_on(ds: &EvalDataset<f64>, cfg: &WatchConfig) -> Result<(f64, f64)> {
    let nuis = crossfit_nuisances(ds, &cfg.pi_spec, &cfg.mu_spec, cfg.folds, cfg.clip, cfg.seed)?;
    let r = estimate_dr(ds, &nuis, cfg.params.alpha)?;
    Ok((r.psi_hat, r.if_variance))
}

/// Recomputes the cross-fitted DR estimate from scratch on each snapshot
/// and emits the confidence-sequence interval with the same `ρ` throughout.
pub fn watch_asympcs<I>(snapshots: I, cfg: &WatchConfig) -> Vec<WatchPoint>
where
    I: IntoIterator<Item = EvalDataset<f64>>,
{
    snapshots
        .into_iter()
        .map(|ds| {
            let n = ds.len();
            match dr_on(&ds, cfg) {
                Ok((psi, var)) => WatchPoint {
                    n,
                    estimate: Some(psi),
                    interval: Some(asympcs_boundary(psi, var, n, cfg.params)),
                    error: None,
                },
                Err(e) => WatchPoint::skipped(n, e),
            }
        })
        .collect()
}

/// Confidence sequence for `Δ = ψ^A − ψ^B`: each arm gets a `(1 − α/2)`
/// sequence and the difference interval is `(L^A − U^B, U^A − L^B)`.
pub fn watch_asympcs_paired<I>(snapshots: I, cfg: &WatchConfig) -> Vec<WatchPoint>
where
    I: IntoIterator<Item = PairedDataset<f64>>,
{
    let half = AsympCSParams { rho: cfg.params.rho, alpha: cfg.params.alpha / 2.0 };
    snapshots
        .into_iter()
        .map(|pds| {
            let n = pds.len();
            let arms = dr_on(&pds.arm(Arm::A), cfg).and_then(|a| dr_on(&pds.arm(Arm::B), cfg).map(|b| (a, b)));
            match arms {
                Ok(((psi_a, var_a), (psi_b, var_b))) => {
                    let ia = asympcs_boundary(psi_a, var_a, n, half);
                    let ib = asympcs_boundary(psi_b, var_b, n, half);
                    WatchPoint {
                        n,
                        estimate: Some(psi_a - psi_b),
                        interval: Some(Interval { lo: ia.lo - ib.hi, hi: ia.hi - ib.lo }),
                        error: None,
                    }
                }
                Err(e) => WatchPoint::skipped(n, e),
            }
        })
        .collect()
}
