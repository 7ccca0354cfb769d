use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{load_data, ExperimentConfig, LearnerConfig};
use super::cycle::{run_trial, Experiment, TrialLog};
use super::learner::{BuiltinLearner, Learner};
use super::preset::{Arm, ProtocolPreset};
use super::summary::{summarize, write_plot_data, Summary, TrialFailure};
use crate::adapter::AdapterFactory;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::model::{Dataset, ExperimentRecord};

/// Builds a fresh learner for each (arm, trial).
pub trait LearnerFactory: Sync {
    fn make(&self, arm: &Arm, trial: usize, seed: u64) -> Result<Box<dyn Learner>>;
}

/// Factory for the in-process learners.
pub struct BuiltinFactory {
    pub pool: Arc<Dataset>,
    pub test: Arc<Dataset>,
    pub learner: LearnerConfig,
    pub ssl: crate::learners::SslConfig,
}

impl LearnerFactory for BuiltinFactory {
    fn make(&self, _arm: &Arm, _trial: usize, _seed: u64) -> Result<Box<dyn Learner>> {
        match &self.learner {
            LearnerConfig::Builtin {
                model,
                train,
                ensemble,
                loss_head,
            } => Ok(Box::new(BuiltinLearner::new(
                self.pool.clone(),
                self.test.clone(),
                model.clone(),
                train.clone(),
                ensemble.clone(),
                loss_head.clone(),
                self.ssl.clone(),
            ))),
            LearnerConfig::Adapter { .. } => {
                Err(Error::Config("builtin factory given an adapter learner".into()))
            }
        }
    }
}

/// Everything one experiment produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub preset: ProtocolPreset,
    pub records: Vec<ExperimentRecord>,
    pub logs: Vec<TrialLog>,
    pub summary: Summary,
}

/// Runs every (arm, trial) of the preset, concurrently across trials.
/// A failing trial is recorded in the summary; the others still complete.
pub fn run_experiment(exp: &Experiment, factory: &dyn LearnerFactory) -> Result<ExperimentOutput> {
    let arms = exp.preset.arms();
    for arm in &arms {
        let probe = factory.make(arm, 0, exp.trial_seed(0))?;
        exp.check_arm(arm, probe.as_ref())?;
    }
    let jobs: Vec<(&Arm, usize)> = arms
        .iter()
        .flat_map(|a| (0..exp.preset.trials_for(&a.strategy)).map(move |t| (a, t)))
        .collect();
    let results: Vec<Result<(ExperimentRecord, TrialLog)>> = jobs
        .par_iter()
        .map(|&(arm, trial)| {
            let mut learner = factory.make(arm, trial, exp.trial_seed(trial))?;
            run_trial(exp, arm, trial, learner.as_mut())
        })
        .collect();
    let mut records = Vec::new();
    let mut logs = Vec::new();
    let mut failures = Vec::new();
    for (&(arm, trial), res) in jobs.iter().zip(results) {
        match res {
            Ok((r, l)) => {
                records.push(r);
                logs.push(l);
            }
            Err(e) => {
                log::error!("{} trial {trial} failed: {e}", arm.id);
                failures.push(TrialFailure {
                    strategy: arm.id.clone(),
                    trial,
                    error: e.to_string(),
                });
            }
        }
    }
    let mut summary = summarize(&records).map_err(|e| {
        let detail: Vec<String> = failures
            .iter()
            .map(|f| format!("{} trial {}: {}", f.strategy, f.trial, f.error))
            .collect();
        if detail.is_empty() {
            e
        } else {
            Error::InvalidParam(format!("{e}; failed trials: {}", detail.join("; ")))
        }
    })?;
    summary.failures = failures;
    Ok(ExperimentOutput {
        preset: exp.preset.clone(),
        records,
        logs,
        summary,
    })
}

fn trial_file(strategy: &str, trial: usize) -> String {
    format!("{strategy}-trial{trial}.json")
}

/// Writes `records/`, `logs/`, `preset.json`, `summary.json` and
/// `summary.csv` under `dir`.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("records"))?;
    fs::create_dir_all(dir.join("logs"))?;
    for r in &out.records {
        write_json(&dir.join("records").join(trial_file(&r.strategy, r.trial)), r)?;
    }
    for l in &out.logs {
        write_json(&dir.join("logs").join(trial_file(&l.arm, l.trial)), l)?;
    }
    write_json(&dir.join("preset.json"), &out.preset)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    out.summary.write_csv(fs::File::create(dir.join("summary.csv"))?)?;
    Ok(())
}

/// Every record under `dir/records`, sorted by (strategy, trial).
pub fn read_records(dir: &Path) -> Result<Vec<ExperimentRecord>> {
    let rec_dir = dir.join("records");
    let mut out: Vec<ExperimentRecord> = Vec::new();
    let entries = fs::read_dir(&rec_dir).map_err(|e| Error::Dataset {
        path: rec_dir.clone(),
        message: e.to_string(),
    })?;
    for entry in entries {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "json") {
            out.push(read_json(&p)?);
        }
    }
    out.sort_by(|a, b| (&a.strategy, a.trial).cmp(&(&b.strategy, b.trial)));
    Ok(out)
}

/// Re-summarizes the records of a finished run, rewriting the summary files.
pub fn summarize_dir(dir: &Path) -> Result<Summary> {
    let mut records = read_records(dir)?;
    if let Ok(preset) = read_json::<ProtocolPreset>(&dir.join("preset.json")) {
        let order: Vec<String> = preset.arms().into_iter().map(|a| a.id).collect();
        records.sort_by_key(|r| {
            (
                order.iter().position(|id| *id == r.strategy).unwrap_or(order.len()),
                r.trial,
            )
        });
    }
    let mut summary = summarize(&records)?;
    if let Ok(previous) = read_json::<Summary>(&dir.join("summary.json")) {
        summary.failures = previous.failures;
    }
    write_json(&dir.join("summary.json"), &summary)?;
    summary.write_csv(fs::File::create(dir.join("summary.csv"))?)?;
    Ok(summary)
}

/// Writes `curves.csv` for external plotting and returns its path.
pub fn plot_data_dir(dir: &Path) -> Result<std::path::PathBuf> {
    let records = read_records(dir)?;
    let path = dir.join("curves.csv");
    write_plot_data(&records, fs::File::create(&path)?)?;
    Ok(path)
}

/// Command-line overrides of a config.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOverrides {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

/// Loads data, builds the learner factory, runs and writes outputs.
pub fn run_config(cfg: &ExperimentConfig, overrides: RunOverrides) -> Result<ExperimentOutput> {
    let mut preset = cfg.validate()?;
    if let Some(t) = overrides.trials {
        if t == 0 {
            return Err(Error::Config("--trials must be positive".into()));
        }
        preset.trials = t;
        preset.ensemble_trials = t;
    }
    let seed = overrides.seed.unwrap_or(cfg.seed);
    let data = Arc::new(load_data(cfg)?);
    let pool = Arc::new(data.pool.clone());
    let exp = Experiment::new(
        preset,
        pool.clone(),
        &data.test,
        cfg.annotation.tolerance,
        cfg.annotation.threshold,
        seed,
    )?;
    let out = match &cfg.learner {
        LearnerConfig::Builtin { .. } => run_experiment(
            &exp,
            &BuiltinFactory {
                pool,
                test: Arc::new(data.test.clone()),
                learner: cfg.learner.clone(),
                ssl: cfg.ssl.clone(),
            },
        )?,
        LearnerConfig::Adapter { .. } => {
            run_experiment(&exp, &AdapterFactory::from_config(cfg, data.clone())?)?
        }
    };
    write_outputs(&out, &cfg.output_dir())?;
    Ok(out)
}
