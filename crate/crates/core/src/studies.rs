//! Monte Carlo study harness: coverage and width of difference intervals,
//! power of the inverted-interval test, and sensitivity to positivity.
//!
//! Run `j` of every study cell draws its data from `derive(base_seed, j)`,
//! so cells of a sweep share their random inputs. Runs execute in parallel
//! and are reduced in run order, which keeps results bitwise reproducible
//! for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossfit::crossfit_nuisances;
use crate::error::{Error, Result};
use crate::estimators::{estimate_difference, Method};
use crate::model::Arm;
use crate::nuisance::{ClipBounds, LearnerSpec, NuisanceProfile};
use crate::seed;
use crate::simulation::{generate_paired, true_delta, Scenario, SimConfig, SimTruth, TruthMethod, DEFAULT_TRUTH_DRAWS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Miscoverage,
    Power,
    Positivity,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Miscoverage => "miscoverage",
            StudyKind::Power => "power",
            StudyKind::Positivity => "positivity",
        }
    }
}

impl std::str::FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "miscoverage" => Ok(StudyKind::Miscoverage),
            "power" => Ok(StudyKind::Power),
            "positivity" => Ok(StudyKind::Positivity),
            other => Err(Error::InvalidParameter(format!("unknown study kind {other:?}"))),
        }
    }
}

/// Where the true difference comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSource {
    MonteCarlo { mc_n: usize },
    Given { delta: f64 },
}

impl Default for TruthSource {
    fn default() -> Self {
        TruthSource::MonteCarlo { mc_n: DEFAULT_TRUTH_DRAWS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Repetitions per cell.
    pub m: usize,
    /// Per-run sample size (the power study takes sizes from `n_grid`).
    pub n: usize,
    pub estimators: Vec<Method>,
    pub profiles: Vec<NuisanceProfile>,
    pub folds: usize,
    pub alpha: f64,
    pub sim: SimConfig,
    pub truth: TruthSource,
    /// Propensity clip; defaults to `[0.01, 1 − ε]` for the simulated `ε`.
    pub clip: Option<ClipBounds>,
    pub base_seed: u64,
    pub mu_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub epsilon_grid: Vec<f64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            m: 200,
            n: 2000,
            estimators: Method::ALL.to_vec(),
            profiles: NuisanceProfile::ALL.to_vec(),
            folds: 2,
            alpha: 0.05,
            sim: SimConfig::default(),
            truth: TruthSource::default(),
            clip: None,
            base_seed: 0,
            mu_grid: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.5],
            n_grid: vec![400, 800, 1600, 3200],
            epsilon_grid: vec![0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if self.estimators.is_empty() || self.profiles.is_empty() {
            return bad("estimator and profile sets must be nonempty".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let TruthSource::MonteCarlo { mc_n } = self.truth {
            if mc_n < crate::simulation::MIN_TRUTH_DRAWS {
                return bad(format!("truth.mc_n must be at least {}", crate::simulation::MIN_TRUTH_DRAWS));
            }
        }
        self.sim.validate()
    }

    fn clip_for(&self, sim: &SimConfig) -> Result<ClipBounds> {
        match self.clip {
            Some(c) => Ok(c),
            None => ClipBounds::positivity(sim.epsilon),
        }
    }

    fn truth_for(&self, sim: &SimConfig) -> Result<SimTruth> {
        match self.truth {
            TruthSource::Given { delta } => {
                Ok(SimTruth { psi_a: f64::NAN, psi_b: f64::NAN, delta, method: TruthMethod::Analytic, mc_n: None })
            }
            TruthSource::MonteCarlo { mc_n } => true_delta(sim, mc_n),
        }
    }
}

/// Location of a cell in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub mu_shift: f64,
    pub epsilon: f64,
}

/// Aggregates over `m` runs for one (estimator, profile, sweep point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub estimator: Method,
    pub profile: NuisanceProfile,
    pub point: SweepPoint,
    pub m: usize,
    pub delta_true: f64,
    pub miscoverage: f64,
    pub miscoverage_se: f64,
    pub mean_width: f64,
    pub width_se: f64,
    pub rejection_rate: f64,
    pub rejection_se: f64,
}

/// One run's interval for one (estimator, profile, sweep point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub estimator: Method,
    pub profile: NuisanceProfile,
    pub point: SweepPoint,
    pub delta_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub covered: bool,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub kind: StudyKind,
    pub cells: Vec<CellResult>,
    pub runs: Vec<RunRecord>,
}

impl StudyResult {
    fn extend(&mut self, (cells, runs): (Vec<CellResult>, Vec<RunRecord>)) {
        self.cells.extend(cells);
        self.runs.extend(runs);
    }

    pub fn cell(&self, estimator: Method, profile: NuisanceProfile) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.estimator == estimator && c.profile == profile)
    }

    /// Per-run records of one (estimator, profile) pair, in run order.
    pub fn runs_of(&self, estimator: Method, profile: NuisanceProfile) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.estimator == estimator && r.profile == profile)
    }

    /// Per-run records as CSV, one row per (run, estimator, profile, point).
    pub fn write_runs_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        wtr.write_record([
            "study",
            "run",
            "estimator",
            "profile",
            "n",
            "mu_shift",
            "epsilon",
            "delta_hat",
            "ci_lo",
            "ci_hi",
            "covered",
            "rejected",
        ])?;
        for r in &self.runs {
            wtr.write_record([
                self.kind.name().to_string(),
                r.run.to_string(),
                r.estimator.name().to_string(),
                r.profile.name().to_string(),
                r.point.n.to_string(),
                r.point.mu_shift.to_string(),
                r.point.epsilon.to_string(),
                r.delta_hat.to_string(),
                r.ci_lo.to_string(),
                r.ci_hi.to_string(),
                (r.covered as u8).to_string(),
                (r.rejected as u8).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        wtr.write_record([
            "study",
            "estimator",
            "profile",
            "n",
            "mu_shift",
            "epsilon",
            "m",
            "delta_true",
            "miscoverage",
            "miscoverage_se",
            "mean_width",
            "width_se",
            "rejection_rate",
            "rejection_se",
        ])?;
        for c in &self.cells {
            wtr.write_record([
                self.kind.name().to_string(),
                c.estimator.name().to_string(),
                c.profile.name().to_string(),
                c.point.n.to_string(),
                c.point.mu_shift.to_string(),
                c.point.epsilon.to_string(),
                c.m.to_string(),
                c.delta_true.to_string(),
                c.miscoverage.to_string(),
                c.miscoverage_se.to_string(),
                c.mean_width.to_string(),
                c.width_se.to_string(),
                c.rejection_rate.to_string(),
                c.rejection_se.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `√(p̂(1 − p̂)/m)`.
pub fn binomial_se(rate: f64, m: usize) -> f64 {
    (rate * (1.0 - rate) / m as f64).sqrt()
}

/// Outcome of one run for one (estimator, profile) pair.
#[derive(Debug, Clone, Copy)]
struct RunOutcome {
    delta_hat: f64,
    lo: f64,
    hi: f64,
    covered: bool,
    rejected: bool,
}

impl RunOutcome {
    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Outcomes of run `j`, indexed `[profile][estimator]`.
fn one_run(cfg: &StudyConfig, sim: &SimConfig, clip: ClipBounds, delta: f64, j: usize) -> Result<Vec<Vec<RunOutcome>>> {
    let run_seed = seed::derive(cfg.base_seed, j as u64);
    let data = generate_paired(&SimConfig { seed: run_seed, ..*sim })?;
    let nuisance_seed = seed::derive(run_seed, 0xC0FF);
    let (arm_a, arm_b) = (data.arm(Arm::A), data.arm(Arm::B));
    cfg.profiles
        .iter()
        .map(|profile| {
            let pi_spec = LearnerSpec::new(profile.propensity(), 0);
            let mu_spec = LearnerSpec::new(profile.regression(), 0);
            let na = crossfit_nuisances(&arm_a, &pi_spec, &mu_spec, cfg.folds, clip, nuisance_seed)?;
            let nb = crossfit_nuisances(&arm_b, &pi_spec, &mu_spec, cfg.folds, clip, nuisance_seed)?;
            cfg.estimators
                .iter()
                .map(|&method| {
                    let cr = estimate_difference(method, &data, &na, &nb, cfg.alpha)?;
                    Ok(RunOutcome {
                        delta_hat: cr.delta_hat,
                        lo: cr.ci.lo,
                        hi: cr.ci.hi,
                        covered: cr.ci.contains(delta),
                        rejected: cr.reject_null,
                    })
                })
                .collect()
        })
        .collect()
}

/// Runs `m` repetitions at one sweep point and aggregates per pair.
fn run_cell(cfg: &StudyConfig, sim: &SimConfig, truth: &SimTruth) -> Result<(Vec<CellResult>, Vec<RunRecord>)> {
    let clip = cfg.clip_for(sim)?;
    let outcomes: Vec<Result<Vec<Vec<RunOutcome>>>> =
        (0..cfg.m).into_par_iter().map(|j| one_run(cfg, sim, clip, truth.delta, j)).collect();
    let mut runs = Vec::with_capacity(cfg.m);
    for (run, o) in outcomes.into_iter().enumerate() {
        runs.push(o.map_err(|e| Error::StudyRunFailed { run, source: Box::new(e) })?);
    }
    let m = cfg.m as f64;
    let point = SweepPoint { n: sim.n, mu_shift: sim.mu_shift, epsilon: sim.epsilon };
    let mut cells = Vec::new();
    for (p, &profile) in cfg.profiles.iter().enumerate() {
        for (e, &estimator) in cfg.estimators.iter().enumerate() {
            let mut missed = 0usize;
            let mut rejected = 0usize;
            let mut width_sum = 0.0;
            for run in &runs {
                let o = run[p][e];
                missed += !o.covered as usize;
                rejected += o.rejected as usize;
                width_sum += o.width();
            }
            let mean_width = width_sum / m;
            let width_var = runs.iter().map(|r| (r[p][e].width() - mean_width).powi(2)).sum::<f64>() / (m - 1.0);
            let miscoverage = missed as f64 / m;
            let rejection_rate = rejected as f64 / m;
            cells.push(CellResult {
                estimator,
                profile,
                point,
                m: cfg.m,
                delta_true: truth.delta,
                miscoverage,
                miscoverage_se: binomial_se(miscoverage, cfg.m),
                mean_width,
                width_se: (width_var / m).sqrt(),
                rejection_rate,
                rejection_se: binomial_se(rejection_rate, cfg.m),
            });
        }
    }
    let mut records = Vec::with_capacity(runs.len() * cells.len());
    for (run, outcomes) in runs.iter().enumerate() {
        for (p, &profile) in cfg.profiles.iter().enumerate() {
            for (e, &estimator) in cfg.estimators.iter().enumerate() {
                let o = outcomes[p][e];
                records.push(RunRecord {
                    run,
                    estimator,
                    profile,
                    point,
                    delta_hat: o.delta_hat,
                    ci_lo: o.lo,
                    ci_hi: o.hi,
                    covered: o.covered,
                    rejected: o.rejected,
                });
            }
        }
    }
    Ok((cells, records))
}

/// Coverage and width of every (estimator, profile) pair at `cfg.sim`.
pub fn run_miscoverage_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let sim = SimConfig { n: cfg.n, ..cfg.sim };
    let truth = cfg.truth_for(&sim)?;
    let (cells, runs) = run_cell(cfg, &sim, &truth)?;
    Ok(StudyResult { kind: StudyKind::Miscoverage, cells, runs })
}

/// Rejection rates over a grid of boundary shifts and sample sizes in the
/// linear-shift scenario.
pub fn run_power_study(cfg: &StudyConfig, mu_grid: &[f64], n_grid: &[usize]) -> Result<StudyResult> {
    cfg.validate()?;
    if mu_grid.is_empty() || n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::InvalidParameter("power grids must be nonempty with positive sizes".into()));
    }
    let mut result = StudyResult { kind: StudyKind::Power, cells: Vec::new(), runs: Vec::new() };
    for &mu in mu_grid {
        let base = SimConfig { scenario: Scenario::PowerLinear, mu_shift: mu, ..cfg.sim };
        base.validate()?;
        let truth = cfg.truth_for(&base)?;
        for &n in n_grid {
            result.extend(run_cell(cfg, &SimConfig { n, ..base }, &truth)?);
        }
    }
    Ok(result)
}

/// Miscoverage across positivity levels. The truth depends only on the
/// base classifiers, so it is computed once and checked at every level.
pub fn run_positivity_study(cfg: &StudyConfig, epsilon_grid: &[f64]) -> Result<StudyResult> {
    cfg.validate()?;
    if epsilon_grid.is_empty() || epsilon_grid.iter().any(|&e| !(e > 0.0 && e <= 0.5)) {
        return Err(Error::InvalidParameter("epsilon grid must be nonempty within (0, 0.5]".into()));
    }
    let base = SimConfig { n: cfg.n, ..cfg.sim };
    let truth = cfg.truth_for(&base)?;
    let mut result = StudyResult { kind: StudyKind::Positivity, cells: Vec::new(), runs: Vec::new() };
    for &epsilon in epsilon_grid {
        let sim = SimConfig { epsilon, ..base };
        let here = cfg.truth_for(&sim)?;
        if here.delta.to_bits() != truth.delta.to_bits() {
            return Err(Error::InvalidParameter(format!(
                "true difference changed with epsilon = {epsilon}: {} vs {}",
                here.delta, truth.delta
            )));
        }
        result.extend(run_cell(cfg, &sim, &truth)?);
    }
    Ok(result)
}

/// Dispatches on `kind`, taking grids from the config.
pub fn run_study(kind: StudyKind, cfg: &StudyConfig) -> Result<StudyResult> {
    match kind {
        StudyKind::Miscoverage => run_miscoverage_study(cfg),
        StudyKind::Power => run_power_study(cfg, &cfg.mu_grid, &cfg.n_grid),
        StudyKind::Positivity => run_positivity_study(cfg, &cfg.epsilon_grid),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> StudyConfig {
        StudyConfig {
            m: 4,
            n: 300,
            profiles: vec![NuisanceProfile::Linear],
            truth: TruthSource::MonteCarlo { mc_n: 100_000 },
            ..Default::default()
        }
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let cfg: StudyConfig = serde_json::from_str(r#"{"m": 10, "sim": {"epsilon": 0.3}}"#).unwrap();
        assert_eq!(cfg.m, 10);
        assert_eq!(cfg.sim.epsilon, 0.3);
        assert_eq!(cfg.sim.noise, 0.15);
        assert!(serde_json::from_str::<StudyConfig>(r#"{"m": 10, "bogus": 1}"#).is_err());
        assert!(serde_json::from_str::<StudyConfig>(r#"{"sim": {"bogus": 1}}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(StudyConfig { m: 1, ..small() }.validate().is_err());
        assert!(StudyConfig { estimators: vec![], ..small() }.validate().is_err());
        assert!(StudyConfig { truth: TruthSource::MonteCarlo { mc_n: 10 }, ..small() }.validate().is_err());
    }

    #[test]
    fn rates_follow_binomial_se() {
        let res = run_miscoverage_study(&small()).unwrap();
        assert_eq!(res.cells.len(), 3);
        for c in &res.cells {
            assert!((0.0..=1.0).contains(&c.miscoverage));
            assert_eq!(c.miscoverage_se, binomial_se(c.miscoverage, c.m));
            assert_eq!(c.rejection_se, binomial_se(c.rejection_rate, c.m));
            assert!(c.mean_width > 0.0);
            let runs: Vec<_> = res.runs_of(c.estimator, c.profile).collect();
            assert_eq!(runs.len(), c.m);
            let missed = runs.iter().filter(|r| !r.covered).count();
            assert_eq!(missed as f64 / c.m as f64, c.miscoverage);
        }
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let cfg = small();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_miscoverage_study(&cfg))
        };
        assert_eq!(run(1).unwrap(), run(3).unwrap());
    }

    #[test]
    fn failed_run_aborts_with_index() {
        // Two folds over three rows leave too few observed training rows.
        let cfg = StudyConfig { n: 3, ..small() };
        match run_miscoverage_study(&cfg) {
            Err(Error::StudyRunFailed { .. }) => {}
            other => panic!("expected a failed run, got {other:?}"),
        }
    }

    #[test]
    fn positivity_sweep_points() {
        let cfg = StudyConfig { estimators: vec![Method::Dr], ..small() };
        let res = run_positivity_study(&cfg, &[0.2, 0.5]).unwrap();
        assert_eq!(res.cells.len(), 2);
        assert_eq!(res.cells[0].delta_true, res.cells[1].delta_true);
        assert_eq!(res.cells[1].point.epsilon, 0.5);
        assert!(run_positivity_study(&cfg, &[0.6]).is_err());
    }

    #[test]
    fn power_grid_shape_and_csv() {
        let cfg = StudyConfig { estimators: vec![Method::Dr], ..small() };
        let res = run_power_study(&cfg, &[0.0, 0.3], &[200, 400]).unwrap();
        assert_eq!(res.cells.len(), 4);
        assert_eq!(res.cells[0].delta_true, 0.0);
        let mut out = Vec::new();
        res.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("study,estimator,profile,n,"));
        assert_eq!(res.runs.len(), 4 * cfg.m);
        let mut out = Vec::new();
        res.write_runs_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 4 * cfg.m + 1);
    }
}
