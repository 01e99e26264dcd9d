use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use abstain_core::crossfit::{crossfit_nuisances, FoldDiagnostics};
use abstain_core::estimators::{
    estimate, estimate_condessa, estimate_difference, two_sided_test, watch_asympcs, watch_asympcs_paired,
    AsympCSParams, WatchConfig, WatchPoint,
};
use abstain_core::io::{read_paired_path, read_single_path, write_paired, write_single};
use abstain_core::model::{summarize, Arm};
use abstain_core::nuisance::{ClipBounds, LearnerSpec, NuisanceProfile};
use abstain_core::simulation::{generate_paired, shared_base_null, true_delta, Scenario, SimConfig};
use abstain_core::studies::{run_study, StudyConfig, StudyKind};
use abstain_core::{EvalDataset, NuisanceEstimates, ScoreRange};

use crate::args::{CompareArgs, EstimationArgs, EvaluateArgs, SimulateArgs, StudyArgs};
use crate::manifest::RunManifest;
use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Writes to `--out` when given, else to standard output.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_err(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = SimConfig {
        n: args.n,
        noise: args.noise,
        epsilon: args.epsilon,
        delta_band: args.delta_band,
        mu_shift: args.mu_shift,
        scenario: args.scenario.into(),
        score_rule: args.score.into(),
        seed: args.seed,
    };
    cfg.validate()?;
    let data = generate_paired(&cfg)?;
    let truth = match cfg.scenario {
        Scenario::SharedBaseNull => shared_base_null(&cfg)?.1,
        _ => true_delta(&cfg, args.mc_n)?,
    };
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let paired = args.out.join("paired.csv");
    write_paired(create(&paired)?, &data).map_err(|e| io_err(&paired, e))?;
    for (arm, name) in [(Arm::A, "arm_a.csv"), (Arm::B, "arm_b.csv")] {
        let path = args.out.join(name);
        write_single(create(&path)?, &data.arm(arm), None).map_err(|e| io_err(&path, e))?;
    }
    let manifest = RunManifest::new("simulate", &json!({ "args": args, "sim": cfg }), cfg.seed, &[])?;
    write_json(&args.out.join("truth.json"), &json!({ "manifest": manifest, "truth": truth }))
}

struct Setup {
    profile: NuisanceProfile,
    clip: ClipBounds,
    range: ScoreRange,
}

fn setup(est: &EstimationArgs) -> Result<Setup, CliError> {
    if !(est.alpha > 0.0 && est.alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {}", est.alpha)));
    }
    if est.watch && est.batch == 0 {
        return Err(CliError::Usage("--batch must be positive".into()));
    }
    Ok(Setup {
        profile: est.nuisance.into(),
        clip: ClipBounds::new(est.clip_lo, est.clip_hi)?,
        range: ScoreRange::new(est.score_lo, est.score_hi)?,
    })
}

fn specs(profile: NuisanceProfile) -> (LearnerSpec, LearnerSpec) {
    (LearnerSpec::new(profile.propensity(), 0), LearnerSpec::new(profile.regression(), 0))
}

fn nuisances(ds: &EvalDataset, est: &EstimationArgs, s: &Setup) -> Result<NuisanceEstimates, CliError> {
    let (pi_spec, mu_spec) = specs(s.profile);
    let nuis = crossfit_nuisances(ds, &pi_spec, &mu_spec, est.folds, s.clip, est.seed)?;
    Ok(match est.pi_override {
        Some(v) => nuis.with_constant_propensity(v)?,
        None => nuis,
    })
}

#[derive(Serialize)]
struct NuisanceSummary<'a> {
    profile: NuisanceProfile,
    folds: usize,
    clip: ClipBounds,
    pi_override: Option<f64>,
    pi_min: f64,
    pi_mean: f64,
    pi_max: f64,
    pi_at_clip: usize,
    mu0_mean: f64,
    fold_diagnostics: &'a [FoldDiagnostics],
}

fn nuisance_summary<'a>(nuis: &'a NuisanceEstimates, est: &EstimationArgs, s: &Setup) -> NuisanceSummary<'a> {
    let pi = nuis.pi_hat();
    let n = pi.len() as f64;
    let clip = nuis.clip();
    NuisanceSummary {
        profile: s.profile,
        folds: est.folds,
        clip,
        pi_override: est.pi_override,
        pi_min: pi.iter().copied().fold(f64::INFINITY, f64::min),
        pi_mean: pi.iter().sum::<f64>() / n,
        pi_max: pi.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        pi_at_clip: pi.iter().filter(|&&p| p == clip.lo || p == clip.hi).count(),
        mu0_mean: nuis.mu0_hat().iter().sum::<f64>() / n,
        fold_diagnostics: nuis.diagnostics(),
    }
}

fn watch_config(est: &EstimationArgs, s: &Setup) -> Result<WatchConfig, CliError> {
    let (pi_spec, mu_spec) = specs(s.profile);
    Ok(WatchConfig {
        pi_spec,
        mu_spec,
        folds: est.folds,
        clip: s.clip,
        seed: est.seed,
        params: AsympCSParams::tuned(est.rho_n, est.alpha)?,
    })
}

/// Snapshot sizes `batch, 2·batch, …`, always ending at `n`.
fn batch_ends(n: usize, batch: usize) -> Vec<usize> {
    let mut ends: Vec<usize> = (1..=n / batch).map(|k| k * batch).collect();
    if ends.last() != Some(&n) {
        ends.push(n);
    }
    ends
}

/// JSON Lines: the manifest, then one interval per batch.
fn watch_lines(manifest: &RunManifest, rho: f64, points: &[WatchPoint]) -> String {
    let mut text = serde_json::to_string(&json!({ "manifest": manifest, "rho": rho })).expect("serializable") + "\n";
    for p in points {
        text += &(serde_json::to_string(p).expect("serializable") + "\n");
    }
    text
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let est = &args.est;
    let s = setup(est)?;
    let log = read_single_path(&args.input, s.range)?;
    let manifest = RunManifest::new("evaluate", args, est.seed, &[&args.input])?;
    let ds = &log.data;

    if est.watch {
        let cfg = watch_config(est, &s)?;
        let snapshots =
            batch_ends(ds.len(), est.batch).into_iter().map(|k| ds.prefix(k)).collect::<Result<Vec<_>, _>>()?;
        let points = watch_asympcs(snapshots, &cfg);
        return emit(est.out.as_deref(), &watch_lines(&manifest, cfg.params.rho, &points));
    }

    let nuis = nuisances(ds, est, &s)?;
    let reports =
        est.method.methods().into_iter().map(|m| estimate(m, ds, &nuis, est.alpha)).collect::<Result<Vec<_>, _>>()?;
    let condessa = if s.range.lo >= 0.0 && s.range.hi <= 1.0 {
        let dr = estimate(abstain_core::estimators::Method::Dr, ds, &nuis, est.alpha)?;
        Some(estimate_condessa(ds, &dr, log.expert.as_deref())?)
    } else {
        None
    };
    let report = json!({
        "manifest": manifest,
        "summary": summarize(ds),
        "estimates": reports,
        "condessa": condessa,
        "nuisance": nuisance_summary(&nuis, est, &s),
    });
    emit(est.out.as_deref(), &to_json(&report))
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let est = &args.est;
    let s = setup(est)?;
    let data = read_paired_path(&args.input, s.range)?;
    let manifest = RunManifest::new("compare", args, est.seed, &[&args.input])?;

    if est.watch {
        let cfg = watch_config(est, &s)?;
        let snapshots =
            batch_ends(data.len(), est.batch).into_iter().map(|k| data.prefix(k)).collect::<Result<Vec<_>, _>>()?;
        let points = watch_asympcs_paired(snapshots, &cfg);
        return emit(est.out.as_deref(), &watch_lines(&manifest, cfg.params.rho, &points));
    }

    let (arm_a, arm_b) = (data.arm(Arm::A), data.arm(Arm::B));
    // Both arms share the nuisance seed, so identical arms give identical fits.
    let na = nuisances(&arm_a, est, &s)?;
    let nb = nuisances(&arm_b, est, &s)?;
    let comparisons = est
        .method
        .methods()
        .into_iter()
        .map(|m| {
            let report = estimate_difference(m, &data, &na, &nb, est.alpha)?;
            Ok(json!({ "report": report, "decision": two_sided_test(&report) }))
        })
        .collect::<Result<Vec<_>, abstain_core::Error>>()?;
    let report = json!({
        "manifest": manifest,
        "summary": { "a": summarize(&arm_a), "b": summarize(&arm_b) },
        "comparisons": comparisons,
        "nuisance": { "a": nuisance_summary(&na, est, &s), "b": nuisance_summary(&nb, est, &s) },
    });
    emit(est.out.as_deref(), &to_json(&report))
}

pub fn study(args: &StudyArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| io_err(&args.config, e))?;
    let cfg: StudyConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: invalid study configuration: {e}", args.config.display())))?;
    let kind: StudyKind = args.kind.into();
    let result = run_study(kind, &cfg)?;

    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let results = args.out.join("results.csv");
    result.write_csv(create(&results)?).map_err(|e| io_err(&results, e))?;
    let runs = args.out.join("runs.csv");
    result.write_runs_csv(create(&runs)?).map_err(|e| io_err(&runs, e))?;
    let manifest = RunManifest::new("study", &json!({ "kind": kind, "config": cfg }), cfg.base_seed, &[&args.config])?;
    write_json(&args.out.join("manifest.json"), &manifest)
}
