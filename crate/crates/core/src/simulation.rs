//! Synthetic evaluation data for two abstaining binary classifiers.
//!
//! Inputs are uniform on the unit square and the label is
//! `1{x₀ + x₁ ≥ 1}`, flipped independently with probability `noise`.
//! Each classifier abstains with probability `1 − ε` inside a band around
//! its own decision boundary and with probability `ε` elsewhere, so the
//! abstentions are missing at random but not completely at random.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArmObservation, PairedDataset};
use crate::scoring::{ProbPrediction, ScoreRule};
use crate::seed;

/// Minimum Monte Carlo size accepted for ground truth.
pub const MIN_TRUTH_DRAWS: usize = 100_000;
pub const DEFAULT_TRUTH_DRAWS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// A: logistic model on the optimal boundary. B: curved boundary
    /// `x₀² + x₁² = 0.8`, abstaining within `0.8δ` of it.
    PaperAb,
    /// B is A's boundary shifted to `x₀ + x₁ = 1 + μ`; both arms use A's
    /// abstention band.
    PowerLinear,
    /// Both arms share A's base classifier (so `Δ = 0`) but abstain through
    /// different mechanisms.
    SharedBaseNull,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::PaperAb => "paper_ab",
            Scenario::PowerLinear => "power_linear",
            Scenario::SharedBaseNull => "shared_base_null",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_ab" => Ok(Scenario::PaperAb),
            "power_linear" => Ok(Scenario::PowerLinear),
            "shared_base_null" => Ok(Scenario::SharedBaseNull),
            other => Err(Error::InvalidParameter(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: usize,
    /// Label flip probability.
    pub noise: f64,
    /// Positivity level: abstention probabilities are `ε` or `1 − ε`.
    pub epsilon: f64,
    /// Half-width of classifier A's abstention band (Euclidean distance).
    pub delta_band: f64,
    /// Boundary shift of classifier B in the power scenario.
    pub mu_shift: f64,
    pub scenario: Scenario,
    pub score_rule: ScoreRule,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            noise: 0.15,
            epsilon: 0.2,
            delta_band: 0.17,
            mu_shift: 0.0,
            scenario: Scenario::PaperAb,
            score_rule: ScoreRule::Accuracy,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1]");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return bad("epsilon must lie in (0, 0.5]");
        }
        if !(self.delta_band > 0.0 && self.delta_band.is_finite()) {
            return bad("delta_band must be positive");
        }
        if !(self.mu_shift >= 0.0 && self.mu_shift.is_finite()) {
            return bad("mu_shift must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMethod {
    Analytic,
    MonteCarlo,
}

/// Counterfactual scores of both base classifiers and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub psi_a: f64,
    pub psi_b: f64,
    pub delta: f64,
    pub method: TruthMethod,
    pub mc_n: Option<usize>,
}

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Probability of class 1 under classifier A.
pub fn prob_a(x0: f64, x1: f64) -> f64 {
    sigmoid(x0 + x1 - 1.0)
}

/// Probability of class 1 under classifier B for the scenario.
pub fn prob_b(cfg: &SimConfig, x0: f64, x1: f64) -> f64 {
    match cfg.scenario {
        Scenario::PaperAb => (0.5 * (x0 * x0 + x1 * x1) + 0.1).clamp(0.0, 1.0),
        Scenario::PowerLinear => sigmoid(x0 + x1 - (1.0 + cfg.mu_shift)),
        Scenario::SharedBaseNull => prob_a(x0, x1),
    }
}

/// Abstention probability of classifier A: inside the band around
/// `x₀ + x₁ = 1` it is `1 − ε`.
pub fn propensity_a(cfg: &SimConfig, x0: f64, x1: f64) -> f64 {
    let distance = (x0 + x1 - 1.0).abs() / std::f64::consts::SQRT_2;
    if distance < cfg.delta_band {
        1.0 - cfg.epsilon
    } else {
        cfg.epsilon
    }
}

/// Abstention probability of classifier B for the scenario.
pub fn propensity_b(cfg: &SimConfig, x0: f64, x1: f64) -> f64 {
    match cfg.scenario {
        Scenario::PaperAb => {
            let distance = ((x0 * x0 + x1 * x1).sqrt() - 0.8f64.sqrt()).abs();
            if distance < 0.8 * cfg.delta_band {
                1.0 - cfg.epsilon
            } else {
                cfg.epsilon
            }
        }
        Scenario::PowerLinear => propensity_a(cfg, x0, x1),
        Scenario::SharedBaseNull => {
            // One minus twice the Gini impurity of A's prediction: (2p - 1)².
            let p = prob_a(x0, x1);
            let gini = 2.0 * p * (1.0 - p);
            (1.0 - 2.0 * gini).clamp(cfg.epsilon, 1.0 - cfg.epsilon)
        }
    }
}

fn true_label(x0: f64, x1: f64, flip: bool) -> usize {
    let clean = (x0 + x1 >= 1.0) as usize;
    if flip {
        1 - clean
    } else {
        clean
    }
}

fn score(rule: ScoreRule, p1: f64, y: usize) -> f64 {
    let pred = ProbPrediction::binary(p1).expect("classifier outputs lie in [0, 1]");
    rule.score(&pred, y).expect("binary label")
}

const STREAM_X: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_RA: u64 = 3;
const STREAM_RB: u64 = 4;
const STREAM_TRUTH_X: u64 = 5;
const STREAM_TRUTH_NOISE: u64 = 6;

/// Draws the paired evaluation set. Inputs, label noise and each arm's
/// abstentions come from separate seeded streams.
pub fn generate_paired(cfg: &SimConfig) -> Result<PairedDataset<f64>> {
    cfg.validate()?;
    let mut rng_x = seed::rng(seed::derive(cfg.seed, STREAM_X));
    let mut rng_noise = seed::rng(seed::derive(cfg.seed, STREAM_NOISE));
    let mut rng_ra = seed::rng(seed::derive(cfg.seed, STREAM_RA));
    let mut rng_rb = seed::rng(seed::derive(cfg.seed, STREAM_RB));

    let mut x = Vec::with_capacity(cfg.n);
    let mut arm_a = Vec::with_capacity(cfg.n);
    let mut arm_b = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let (x0, x1): (f64, f64) = (rng_x.gen(), rng_x.gen());
        let flip = rng_noise.gen::<f64>() < cfg.noise;
        let y = true_label(x0, x1, flip);
        let s_a = score(cfg.score_rule, prob_a(x0, x1), y);
        let s_b = match cfg.scenario {
            Scenario::SharedBaseNull => s_a,
            _ => score(cfg.score_rule, prob_b(cfg, x0, x1), y),
        };
        let r_a = rng_ra.gen::<f64>() < propensity_a(cfg, x0, x1);
        let r_b = rng_rb.gen::<f64>() < propensity_b(cfg, x0, x1);
        x.push(vec![x0, x1]);
        arm_a.push(ArmObservation { abstained: r_a, score: (!r_a).then_some(s_a) });
        arm_b.push(ArmObservation { abstained: r_b, score: (!r_b).then_some(s_b) });
    }
    PairedDataset::from_parts(x, arm_a, arm_b, cfg.score_rule.range())
}

/// Monte Carlo ground truth: both base classifiers scored on `mc_n` fresh
/// draws with no abstention. Abstention settings do not enter.
pub fn true_delta(cfg: &SimConfig, mc_n: usize) -> Result<SimTruth> {
    cfg.validate()?;
    if mc_n < MIN_TRUTH_DRAWS {
        return Err(Error::InvalidParameter(format!(
            "ground truth needs at least {MIN_TRUTH_DRAWS} draws, got {mc_n}"
        )));
    }
    let mut rng_x = seed::rng(seed::derive(cfg.seed, STREAM_TRUTH_X));
    let mut rng_noise = seed::rng(seed::derive(cfg.seed, STREAM_TRUTH_NOISE));
    let (mut sum_a, mut sum_diff) = (0.0f64, 0.0f64);
    for _ in 0..mc_n {
        let (x0, x1): (f64, f64) = (rng_x.gen(), rng_x.gen());
        let flip = rng_noise.gen::<f64>() < cfg.noise;
        let y = true_label(x0, x1, flip);
        let s_a = score(cfg.score_rule, prob_a(x0, x1), y);
        let s_b = score(cfg.score_rule, prob_b(cfg, x0, x1), y);
        sum_a += s_a;
        sum_diff += s_a - s_b;
    }
    let m = mc_n as f64;
    let psi_a = sum_a / m;
    let delta = sum_diff / m;
    Ok(SimTruth { psi_a, psi_b: psi_a - delta, delta, method: TruthMethod::MonteCarlo, mc_n: Some(mc_n) })
}

/// Draws a paired set together with its Monte Carlo truth.
pub fn simulate_paired(cfg: &SimConfig, mc_n: usize) -> Result<(PairedDataset<f64>, SimTruth)> {
    Ok((generate_paired(cfg)?, true_delta(cfg, mc_n)?))
}

/// The shared-base null scenario: identical scores on both arms, different
/// abstention mechanisms, `Δ = 0` exactly.
pub fn shared_base_null(cfg: &SimConfig) -> Result<(PairedDataset<f64>, SimTruth)> {
    let cfg = SimConfig { scenario: Scenario::SharedBaseNull, ..*cfg };
    let data = generate_paired(&cfg)?;
    let psi = match cfg.score_rule {
        ScoreRule::Accuracy => 1.0 - cfg.noise,
        ScoreRule::Brier => true_delta(&cfg, DEFAULT_TRUTH_DRAWS)?.psi_a,
    };
    let method = match cfg.score_rule {
        ScoreRule::Accuracy => TruthMethod::Analytic,
        ScoreRule::Brier => TruthMethod::MonteCarlo,
    };
    let mc_n = (method == TruthMethod::MonteCarlo).then_some(DEFAULT_TRUTH_DRAWS);
    Ok((data, SimTruth { psi_a: psi, psi_b: psi, delta: 0.0, method, mc_n }))
}
