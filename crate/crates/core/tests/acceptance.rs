//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per check and exits
//! non-zero if any check fails. Set `ACCEPTANCE_ONLY=1,5,7` to run a subset
//! of criteria.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use abstain_core::crossfit::{crossfit_nuisances, NuisanceEstimates};
use abstain_core::estimators::{
    asympcs_half_width, confidence_interval, estimate, estimate_condessa, watch_asympcs, AsympCSParams, Method,
    WatchConfig,
};
use abstain_core::model::{validate_dataset, Arm, EvalDataset, RawRow, ScoreRange};
use abstain_core::nuisance::{ClipBounds, LearnerSpec, NuisanceProfile};
use abstain_core::seed;
use abstain_core::simulation::{generate_paired, propensity_a, propensity_b, true_delta, Scenario, SimConfig};
use abstain_core::studies::{
    binomial_se, run_miscoverage_study, run_positivity_study, run_power_study, StudyConfig, StudyResult, TruthSource,
};

const BASE_SEED: u64 = 0;
const M: usize = 200;
const TRUTH_DRAWS: usize = 1_000_000;

/// Difference of the linear-shift scenario at each boundary shift, as
/// tabulated in the published reference results.
const POWER_TABLE: [(f64, f64); 11] = [
    (0.00, 0.0),
    (0.05, 0.045),
    (0.10, 0.069),
    (0.15, 0.088),
    (0.20, 0.123),
    (0.25, 0.152),
    (0.30, 0.180),
    (0.35, 0.181),
    (0.40, 0.219),
    (0.45, 0.248),
    (0.50, 0.271),
];

struct Suite {
    only: Option<BTreeSet<u32>>,
    passed: usize,
    failed: usize,
    started: Instant,
}

impl Suite {
    fn new() -> Self {
        let only =
            std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|c| c.trim().parse().ok()).collect());
        Self { only, passed: 0, failed: 0, started: Instant::now() }
    }

    fn wants(&self, criterion: u32) -> bool {
        self.only.as_ref().is_none_or(|set| set.contains(&criterion))
    }

    fn check(&mut self, criterion: u32, what: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {criterion}: {what} ({detail})");
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }

    fn note(&self, text: &str) {
        println!("       {text} [{:.0}s]", self.started.elapsed().as_secs_f64());
    }
}

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

fn study_config(profiles: Vec<NuisanceProfile>, estimators: Vec<Method>, sim: SimConfig) -> StudyConfig {
    StudyConfig {
        m: M,
        n: 2000,
        estimators,
        profiles,
        sim,
        truth: TruthSource::MonteCarlo { mc_n: TRUTH_DRAWS },
        base_seed: BASE_SEED,
        ..StudyConfig::default()
    }
}

fn random_dataset(rng: &mut impl Rng, n: usize) -> (EvalDataset<f64>, NuisanceEstimates<f64>) {
    let mut rows = Vec::with_capacity(n);
    let (mut pi, mut mu0) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let r = rng.gen_bool(0.4);
        let s = (!r).then(|| rng.gen::<f64>());
        rows.push(RawRow::new(vec![rng.gen(), rng.gen()], r as i64, s));
        pi.push(rng.gen_range(0.01..0.99));
        mu0.push(rng.gen());
    }
    let ds = validate_dataset(rows, ScoreRange::unit()).unwrap();
    let nuis = NuisanceEstimates::from_values(pi, mu0, ClipBounds::new(0.01, 0.99).unwrap()).unwrap();
    (ds, nuis)
}

/// Oracle `E[S | X = x]` under the accuracy score: the probability that the
/// classifier's hard prediction matches the noisy label.
fn oracle_mu0(cfg: &SimConfig, arm: Arm, x0: f64, x1: f64) -> f64 {
    let clean = x0 + x1 >= 1.0;
    let predicted = match arm {
        Arm::A => clean,
        Arm::B => x0 * x0 + x1 * x1 >= 0.8,
    };
    if predicted == clean {
        1.0 - cfg.noise
    } else {
        cfg.noise
    }
}

fn oracle_pi(cfg: &SimConfig, arm: Arm, x0: f64, x1: f64) -> f64 {
    match arm {
        Arm::A => propensity_a(cfg, x0, x1),
        Arm::B => propensity_b(cfg, x0, x1),
    }
}

fn identities(suite: &mut Suite) {
    let mut rng = seed::rng(seed::derive(BASE_SEED, 501));
    let (mut worst_dr, mut worst_theta) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.gen_range(1..500);
        let (ds, nuis) = random_dataset(&mut rng, n);
        let dr = estimate(Method::Dr, &ds, &nuis, 0.05).unwrap();
        let plugin = estimate(Method::Plugin, &ds, &nuis, 0.05).unwrap();
        let correction: f64 = ds
            .iter()
            .zip(nuis.pi_hat().iter().zip(nuis.mu0_hat()))
            .filter_map(|(rec, (&p, &m))| rec.score.map(|s| (s - m) / (1.0 - p)))
            .sum::<f64>()
            / n as f64;
        worst_dr = worst_dr.max((dr.psi_hat - (plugin.psi_hat + correction)).abs());

        let c = estimate_condessa(&ds, &dr, None).unwrap();
        let revealed: f64 = ds.iter().filter_map(|r| r.score).sum::<f64>() / n as f64;
        let abstained = ds.iter().filter(|r| r.abstained).count() as f64 / n as f64;
        worst_theta = worst_theta.max((c.theta_hat + dr.psi_hat - (2.0 * revealed + abstained)).abs());
    }
    if suite.wants(5) {
        suite.check(
            5,
            "DR decomposition identity on 200 random datasets",
            worst_dr <= 1e-12,
            format!("max error {worst_dr:.1e}"),
        );
    }
    if suite.wants(7) {
        suite.check(
            7,
            "quality score identity on 200 random datasets",
            worst_theta <= 1e-12,
            format!("max error {worst_theta:.1e}"),
        );
    }
}

fn condessa_example(suite: &mut Suite) {
    // Left half: 50 revealed, all correct. Right half: 10 revealed with 8
    // correct, and 40 abstentions that would have been 80% correct.
    let mut rows = Vec::new();
    let mut mu0 = Vec::new();
    for i in 0..50 {
        rows.push(RawRow::new(vec![-0.5, i as f64], 0, Some(1.0)));
        mu0.push(1.0);
    }
    for i in 0..10 {
        rows.push(RawRow::new(vec![0.5, i as f64], 0, Some(if i < 8 { 1.0 } else { 0.0 })));
        mu0.push(0.8);
    }
    for i in 0..40 {
        rows.push(RawRow::new(vec![0.5, i as f64], 1, None));
        mu0.push(0.8);
    }
    let ds = validate_dataset(rows, ScoreRange::unit()).unwrap();
    let nuis = NuisanceEstimates::from_values(vec![0.0; 100], mu0, ClipBounds::new(0.0, 0.99).unwrap()).unwrap();
    let psi = estimate(Method::Plugin, &ds, &nuis, 0.05).unwrap();
    let c = estimate_condessa(&ds, &psi, None).unwrap();
    let pass = (psi.psi_hat - 0.9).abs() < 1e-12 && (c.theta_hat - 0.66).abs() < 1e-12;
    suite.check(
        7,
        "worked example psi = 0.9, theta = 0.66",
        pass,
        format!("psi {:.6}, theta {:.6}", psi.psi_hat, c.theta_hat),
    );
}

fn mcar_equivalence(suite: &mut Suite) {
    let cfg = SimConfig { n: 20_000, epsilon: 0.5, seed: seed::derive(BASE_SEED, 502), ..SimConfig::default() };
    let data = generate_paired(&cfg).unwrap();
    let truth = true_delta(&cfg, TRUTH_DRAWS).unwrap();
    // Logistic propensities are correctly specified when abstention ignores
    // the input. Clipping at 1 − ε would cut at the true propensity here.
    let profile = NuisanceProfile::Linear;
    let (pi_spec, mu_spec) = (LearnerSpec::new(profile.propensity(), 0), LearnerSpec::new(profile.regression(), 0));
    let clip = ClipBounds::new(0.01, 0.99).unwrap();
    for (arm, psi_true) in [(Arm::A, 1.0 - cfg.noise), (Arm::B, truth.psi_b)] {
        let ds = data.arm(arm);
        let n = ds.len() as f64;
        let nuis = crossfit_nuisances(&ds, &pi_spec, &mu_spec, 2, clip, seed::derive(cfg.seed, 0xC0FF)).unwrap();

        // With the propensity fixed at the abstention rate, DR − IPW equals
        // the full-sample plug-in minus the plug-in over revealed rows.
        let rate = ds.iter().filter(|r| r.abstained).count() as f64 / n;
        let fixed = NuisanceEstimates::from_values(
            vec![rate; ds.len()],
            nuis.mu0_hat().to_vec(),
            ClipBounds::new(0.01, 0.99).unwrap(),
        )
        .unwrap();
        let [plugin, ipw, dr] =
            [Method::Plugin, Method::Ipw, Method::Dr].map(|m| estimate(m, &ds, &fixed, 0.05).unwrap().psi_hat);
        let revealed: Vec<f64> =
            ds.iter().zip(fixed.mu0_hat()).filter(|(r, _)| !r.abstained).map(|(_, &m)| m).collect();
        let revealed_plugin = revealed.iter().sum::<f64>() / revealed.len() as f64;
        let gap = ((dr - ipw) - (plugin - revealed_plugin)).abs();
        suite.check(
            5,
            &format!("MCAR arm {arm:?}: dr - ipw = plugin - revealed plugin"),
            gap <= 1e-12,
            format!("gap {gap:.1e}"),
        );

        let reports = [Method::Plugin, Method::Ipw, Method::Dr].map(|m| estimate(m, &ds, &nuis, 0.05).unwrap());
        let se = (reports[2].if_variance / n).sqrt();
        let worst = reports.iter().map(|r| (r.psi_hat - psi_true).abs()).fold(0.0, f64::max);
        suite.check(
            5,
            &format!("MCAR arm {arm:?}, n = 20000: plugin, ipw, dr within 3 SE of truth"),
            worst <= 3.0 * se,
            format!(
                "truth {psi_true:.4}, estimates {:.4} / {:.4} / {:.4}, 3 SE {:.4}",
                reports[0].psi_hat,
                reports[1].psi_hat,
                reports[2].psi_hat,
                3.0 * se
            ),
        );
    }
}

fn double_robustness(suite: &mut Suite) {
    let n = 40_000;
    let truth_cfg = SimConfig::default();
    let truth = true_delta(&truth_cfg, TRUTH_DRAWS).unwrap();
    let clip = ClipBounds::new(0.01, 0.99).unwrap();
    for (label, epsilon) in [("MCAR", 0.5), ("MAR", 0.2)] {
        let cfg = SimConfig { n, epsilon, seed: seed::derive(BASE_SEED, 503), ..SimConfig::default() };
        let data = generate_paired(&cfg).unwrap();
        for (arm, psi_true) in [(Arm::A, 1.0 - cfg.noise), (Arm::B, truth.psi_b)] {
            let ds = data.arm(arm);
            let xs: Vec<(f64, f64)> = ds.iter().map(|r| (r.x[0], r.x[1])).collect();
            let mu_oracle: Vec<f64> = xs.iter().map(|&(a, b)| oracle_mu0(&cfg, arm, a, b)).collect();
            let pi_oracle: Vec<f64> = xs.iter().map(|&(a, b)| oracle_pi(&cfg, arm, a, b)).collect();
            let cases = [
                ("oracle mu0, pi fixed at 0.5", vec![0.5; n], mu_oracle),
                ("oracle pi, mu0 fixed at 0", pi_oracle, vec![0.0; n]),
            ];
            for (case, pi, mu0) in cases {
                let nuis = NuisanceEstimates::from_values(pi, mu0, clip).unwrap();
                let r = estimate(Method::Dr, &ds, &nuis, 0.05).unwrap();
                let bound = 3.0 * (r.if_variance / n as f64).sqrt();
                let err = (r.psi_hat - psi_true).abs();
                suite.check(
                    5,
                    &format!("double robustness, {label} arm {arm:?}, {case}"),
                    err <= bound,
                    format!("|error| {err:.4}, 3 SE {bound:.4}"),
                );
            }
        }
    }
}

fn asympcs_dominance(suite: &mut Suite) {
    let mut rng = seed::rng(seed::derive(BASE_SEED, 504));
    let mut worst_ratio = f64::INFINITY;
    for _ in 0..1000 {
        let var = 10f64.powf(rng.gen_range(-4.0..1.0));
        let n = 10f64.powf(rng.gen_range(0.0..6.0)).round() as usize;
        let rho = rng.gen_range(-6.0f64..2.0).exp();
        let cs = asympcs_half_width(var, n, AsympCSParams::new(rho, 0.05).unwrap());
        let ci = confidence_interval(0.0, var, n, 0.05).half_width();
        worst_ratio = worst_ratio.min(cs / ci);
    }
    suite.check(
        5,
        "AsympCS wider than the fixed-n interval on 1000 triples",
        worst_ratio > 1.0,
        format!("min ratio {worst_ratio:.4}"),
    );
}

fn asympcs_coverage(suite: &mut Suite) {
    let streams = 200;
    let psi_true = 1.0 - SimConfig::default().noise;
    let profile = NuisanceProfile::Linear;
    let ends: Vec<usize> = (1..=10).map(|k| 500 * k).collect();
    let mut covered = 0;
    for j in 0..streams {
        let cfg = SimConfig {
            n: 5000,
            epsilon: 0.5,
            seed: seed::derive(seed::derive(BASE_SEED, 505), j),
            ..SimConfig::default()
        };
        let ds = generate_paired(&cfg).unwrap().arm(Arm::A);
        let watch = WatchConfig {
            pi_spec: LearnerSpec::new(profile.propensity(), 0),
            mu_spec: LearnerSpec::new(profile.regression(), 0),
            folds: 2,
            clip: ClipBounds::positivity(0.5).unwrap(),
            seed: seed::derive(cfg.seed, 0xC0FF),
            params: AsympCSParams::tuned(1000, 0.05).unwrap(),
        };
        let points = watch_asympcs(ends.iter().map(|&k| ds.prefix(k).unwrap()), &watch);
        if points.iter().all(|p| p.interval.is_some_and(|i| i.contains(psi_true))) {
            covered += 1;
        }
    }
    let rate = covered as f64 / streams as f64;
    suite.check(5, "AsympCS time-uniform coverage over 200 MCAR streams", rate >= 0.93, format!("coverage {rate:.3}"));
}

fn power_oracle(suite: &mut Suite) {
    for (mu, tabulated) in POWER_TABLE {
        let cfg = SimConfig { scenario: Scenario::PowerLinear, mu_shift: mu, ..SimConfig::default() };
        let delta = true_delta(&cfg, TRUTH_DRAWS).unwrap().delta;
        suite.check(
            3,
            &format!("oracle difference at mu = {mu:.2} matches the table within 0.005"),
            (delta - tabulated).abs() <= 0.005,
            format!("oracle {delta:.4}, table {tabulated:.3}"),
        );
    }
}

fn table_one(suite: &mut Suite) -> Option<StudyResult> {
    let cfg = study_config(NuisanceProfile::ALL.to_vec(), Method::ALL.to_vec(), SimConfig::default());
    let result = run_miscoverage_study(&cfg).unwrap();
    suite.note(&format!("miscoverage study done, true difference {:.6}", result.cells[0].delta_true));
    for c in &result.cells {
        suite.note(&format!(
            "{:>6} {:>13}: miscoverage {:.3} ± {:.3}, width {:.4}, rejection {:.3}",
            c.estimator.name(),
            c.profile.name(),
            c.miscoverage,
            c.miscoverage_se,
            c.mean_width,
            c.rejection_rate
        ));
    }
    let cell = |m, p| *result.cell(m, p).unwrap();
    if suite.wants(1) {
        for p in [NuisanceProfile::RandomForest, NuisanceProfile::SuperLearner] {
            let dr = cell(Method::Dr, p);
            suite.check(
                1,
                &format!("DR + {} miscoverage in [0.01, 0.10]", p.name()),
                in_range(dr.miscoverage, 0.01, 0.10),
                format!("{:.3}", dr.miscoverage),
            );
        }
        let plugin = cell(Method::Plugin, NuisanceProfile::SuperLearner);
        suite.check(
            1,
            "plug-in + super_learner miscoverage >= 0.5",
            plugin.miscoverage >= 0.5,
            format!("{:.3}", plugin.miscoverage),
        );
        for p in [NuisanceProfile::RandomForest, NuisanceProfile::SuperLearner] {
            let ratio = cell(Method::Ipw, p).mean_width / cell(Method::Dr, p).mean_width;
            suite.check(
                1,
                &format!("IPW / DR mean width with {} in [1.5, 2.7]", p.name()),
                in_range(ratio, 1.5, 2.7),
                format!("{ratio:.3}"),
            );
        }
        let linear = cell(Method::Dr, NuisanceProfile::Linear);
        suite.check(
            1,
            "DR + linear miscoverage >= 0.9",
            linear.miscoverage >= 0.9,
            format!("{:.3}", linear.miscoverage),
        );
    }
    if suite.wants(2) {
        let first: Vec<_> = result.runs_of(Method::Dr, NuisanceProfile::SuperLearner).take(100).collect();
        let covered = first.iter().filter(|r| r.covered).count();
        let width = first.iter().map(|r| r.ci_hi - r.ci_lo).sum::<f64>() / first.len() as f64;
        suite.check(
            2,
            "DR + super_learner covers the true difference in >= 90 of 100 runs",
            covered >= 90,
            format!("{covered}/100"),
        );
        suite.check(2, "mean DR interval width in [0.05, 0.09]", in_range(width, 0.05, 0.09), format!("{width:.4}"));
    }
    Some(result)
}

fn power(suite: &mut Suite) {
    let sim = SimConfig { scenario: Scenario::PowerLinear, ..SimConfig::default() };
    let cfg = study_config(vec![NuisanceProfile::SuperLearner], vec![Method::Dr], sim);
    let result = run_power_study(&cfg, &[0.0, 0.2, 0.5], &[3200]).unwrap();
    let targets = [(0.0, "<= 0.10"), (0.2, ">= 0.80"), (0.5, ">= 0.95")];
    for (mu, rule) in targets {
        let c = result.cells.iter().find(|c| c.point.mu_shift == mu).unwrap();
        let pass = match rule {
            "<= 0.10" => c.rejection_rate <= 0.10,
            ">= 0.80" => c.rejection_rate >= 0.80,
            _ => c.rejection_rate >= 0.95,
        };
        suite.check(
            3,
            &format!("rejection at mu = {mu}, n = 3200 {rule}"),
            pass,
            format!("{:.3} ± {:.3}, true difference {:.4}", c.rejection_rate, c.rejection_se, c.delta_true),
        );
    }
}

fn positivity(suite: &mut Suite, table: Option<&StudyResult>) {
    let cfg = study_config(vec![NuisanceProfile::SuperLearner], vec![Method::Dr], SimConfig::default());
    let result = run_positivity_study(&cfg, &[0.1, 0.3, 0.5]).unwrap();
    let mut rates: Vec<(f64, f64)> = result.cells.iter().map(|c| (c.point.epsilon, c.miscoverage)).collect();
    // ε = 0.2 is the default setting; its cell is the one computed for the
    // miscoverage study with the same seeds.
    let at_default = match table {
        Some(t) => t.cell(Method::Dr, NuisanceProfile::SuperLearner).unwrap().miscoverage,
        None => run_positivity_study(&cfg, &[0.2]).unwrap().cells[0].miscoverage,
    };
    rates.push((0.2, at_default));
    rates.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (epsilon, rate) in rates {
        if epsilon == 0.1 {
            suite.check(4, "miscoverage at epsilon = 0.1 > 0.10", rate > 0.10, format!("{rate:.3}"));
        } else {
            suite.check(
                4,
                &format!("miscoverage at epsilon = {epsilon} in [0.02, 0.09]"),
                in_range(rate, 0.02, 0.09),
                format!("{rate:.3}"),
            );
        }
    }
}

fn null_calibration(suite: &mut Suite) {
    let sim = SimConfig { scenario: Scenario::SharedBaseNull, ..SimConfig::default() };
    let cfg = StudyConfig {
        truth: TruthSource::Given { delta: 0.0 },
        ..study_config(vec![NuisanceProfile::SuperLearner], vec![Method::Dr], sim)
    };
    let result = run_miscoverage_study(&cfg).unwrap();
    let rate = result.cells[0].rejection_rate;
    let bound = 0.05 + 3.0 * binomial_se(0.05, M);
    suite.check(6, "shared-base null rejection <= 0.05 + 3 SE", rate <= bound, format!("{rate:.3}, bound {bound:.4}"));
}

fn main() -> ExitCode {
    let mut suite = Suite::new();
    if suite.wants(5) || suite.wants(7) {
        identities(&mut suite);
    }
    if suite.wants(7) {
        condessa_example(&mut suite);
    }
    if suite.wants(5) {
        mcar_equivalence(&mut suite);
        double_robustness(&mut suite);
        asympcs_dominance(&mut suite);
        asympcs_coverage(&mut suite);
        suite.note("property suites done");
    }
    if suite.wants(3) {
        power_oracle(&mut suite);
    }
    let table = if suite.wants(1) || suite.wants(2) { table_one(&mut suite) } else { None };
    if suite.wants(6) {
        null_calibration(&mut suite);
        suite.note("null calibration done");
    }
    if suite.wants(4) {
        positivity(&mut suite, table.as_ref());
        suite.note("positivity sweep done");
    }
    if suite.wants(3) {
        power(&mut suite);
        suite.note("power study done");
    }
    println!("acceptance: {} passed, {} failed", suite.passed, suite.failed);
    if suite.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
