use std::path::PathBuf;

use abstain_core::estimators::Method;
use abstain_core::nuisance::NuisanceProfile;
use abstain_core::scoring::ScoreRule;
use abstain_core::simulation::Scenario;
use abstain_core::studies::StudyKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "abstain", version, about = "Counterfactual evaluation of abstaining classifiers")]
pub struct Cli {
    /// Worker threads (default: all available cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic paired evaluation set and its ground truth.
    Simulate(SimulateArgs),
    /// Estimate the counterfactual score of one abstaining classifier.
    Evaluate(EvaluateArgs),
    /// Estimate and test the score difference between two classifiers.
    Compare(CompareArgs),
    /// Run a Monte Carlo study from a JSON configuration.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum ScenarioArg {
    PaperAb,
    PowerLinear,
    SharedBaseNull,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::PaperAb => Scenario::PaperAb,
            ScenarioArg::PowerLinear => Scenario::PowerLinear,
            ScenarioArg::SharedBaseNull => Scenario::SharedBaseNull,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum ScoreArg {
    Accuracy,
    Brier,
}

impl From<ScoreArg> for ScoreRule {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::Accuracy => ScoreRule::Accuracy,
            ScoreArg::Brier => ScoreRule::Brier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum ProfileArg {
    Linear,
    RandomForest,
    SuperLearner,
}

impl From<ProfileArg> for NuisanceProfile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Linear => NuisanceProfile::Linear,
            ProfileArg::RandomForest => NuisanceProfile::RandomForest,
            ProfileArg::SuperLearner => NuisanceProfile::SuperLearner,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Plugin,
    Ipw,
    Dr,
    All,
}

impl MethodArg {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Plugin => vec![Method::Plugin],
            MethodArg::Ipw => vec![Method::Ipw],
            MethodArg::Dr => vec![Method::Dr],
            MethodArg::All => Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum StudyKindArg {
    Miscoverage,
    Power,
    Positivity,
}

impl From<StudyKindArg> for StudyKind {
    fn from(k: StudyKindArg) -> Self {
        match k {
            StudyKindArg::Miscoverage => StudyKind::Miscoverage,
            StudyKindArg::Power => StudyKind::Power,
            StudyKindArg::Positivity => StudyKind::Positivity,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "paper_ab")]
    pub scenario: ScenarioArg,
    /// Number of evaluation points.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Boundary shift of classifier B in the power scenario.
    #[arg(long = "mu", default_value_t = 0.0)]
    pub mu_shift: f64,
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.2)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.17)]
    pub delta_band: f64,
    #[arg(long, value_enum, default_value = "accuracy")]
    pub score: ScoreArg,
    /// Monte Carlo draws for the ground truth.
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_n: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Options shared by `evaluate` and `compare`.
#[derive(Debug, Args, Serialize)]
pub struct EstimationArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Cross-fitting folds.
    #[arg(long, default_value_t = 2)]
    pub folds: usize,
    #[arg(long, value_enum, default_value = "super_learner")]
    pub nuisance: ProfileArg,
    #[arg(long, default_value_t = 0.01)]
    pub clip_lo: f64,
    #[arg(long, default_value_t = 0.99)]
    pub clip_hi: f64,
    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodArg,
    /// Use this constant abstention propensity instead of a fitted one.
    #[arg(long)]
    pub pi_override: Option<f64>,
    /// Lower end of the declared score range.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub score_lo: f64,
    /// Upper end of the declared score range.
    #[arg(long, default_value_t = 1.0)]
    pub score_hi: f64,
    /// Emit a confidence-sequence interval after every batch of rows.
    #[arg(long)]
    pub watch: bool,
    /// Rows per batch in watch mode.
    #[arg(long, default_value_t = 500, requires = "watch")]
    pub batch: usize,
    /// Sample size at which the confidence sequence is tightest.
    #[arg(long, default_value_t = 1000)]
    pub rho_n: usize,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Single-classifier CSV: `x0,…,r,s[,e]`.
    pub input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub est: EstimationArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Paired CSV: `x0,…,r_a,s_a,r_b,s_b`.
    pub input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub est: EstimationArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct StudyArgs {
    #[arg(long, value_enum)]
    pub kind: StudyKindArg,
    /// JSON study configuration; omitted fields take their defaults.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for `results.csv`, `runs.csv` and `manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}
