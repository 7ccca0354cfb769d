use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExperimentRecord, Metric};

pub const BASELINE: &str = "random";

/// A trial that did not complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub strategy: String,
    pub trial: usize,
    pub error: String,
}

/// Mean learning curve of one strategy over its trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub trials: usize,
    pub cycles: Vec<usize>,
    pub mean_spent: Vec<f64>,
    pub mean_labeled: Vec<f64>,
    pub mean: Vec<f64>,
    /// Population standard deviation over trials.
    pub std: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_approx_gt: Option<Vec<f64>>,
    /// Mean metric minus the baseline's, per cycle.
    pub delta_vs_random: Vec<f64>,
    pub final_mean: f64,
    pub final_delta_vs_random: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub preset: String,
    pub metric: Metric,
    pub baseline: String,
    pub strategies: Vec<StrategySummary>,
    #[serde(default)]
    pub failures: Vec<TrialFailure>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Mean curves per strategy (in first-appearance order, baseline first)
/// and deltas against the random baseline.
pub fn summarize(records: &[ExperimentRecord]) -> Result<Summary> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidParam("no records to summarize".into()))?;
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.strategy.as_str()) {
            order.push(&r.strategy);
        }
    }
    if let Some(p) = order.iter().position(|s| *s == BASELINE) {
        let b = order.remove(p);
        order.insert(0, b);
    } else {
        return Err(Error::InvalidParam(format!(
            "records contain no `{BASELINE}` baseline"
        )));
    }
    if let Some(r) = records.iter().find(|r| r.metric != first.metric) {
        return Err(Error::InvalidParam(format!(
            "strategy `{}` reports a different metric",
            r.strategy
        )));
    }
    let mut strategies = Vec::with_capacity(order.len());
    for name in order {
        let mut trials: Vec<&ExperimentRecord> =
            records.iter().filter(|r| r.strategy == name).collect();
        trials.sort_by_key(|r| r.trial);
        let cycles: Vec<usize> = trials[0].points.iter().map(|p| p.cycle).collect();
        for t in &trials[1..] {
            let c: Vec<usize> = t.points.iter().map(|p| p.cycle).collect();
            if c != cycles {
                return Err(Error::CycleMismatch {
                    strategy: name.to_string(),
                    expected: cycles.len(),
                    found: c.len(),
                });
            }
        }
        if cycles.is_empty() {
            return Err(Error::InvalidParam(format!("strategy `{name}` has empty curves")));
        }
        let column = |k: usize, f: &dyn Fn(&crate::model::CurvePoint) -> f64| -> Vec<f64> {
            trials.iter().map(|t| f(&t.points[k])).collect()
        };
        let n = cycles.len();
        let mut s = StrategySummary {
            strategy: name.to_string(),
            trials: trials.len(),
            cycles: cycles.clone(),
            mean_spent: (0..n).map(|k| mean(&column(k, &|p| p.spent as f64))).collect(),
            mean_labeled: (0..n).map(|k| mean(&column(k, &|p| p.labeled as f64))).collect(),
            mean: (0..n).map(|k| mean(&column(k, &|p| p.value))).collect(),
            std: (0..n).map(|k| std(&column(k, &|p| p.value))).collect(),
            mean_approx_gt: None,
            delta_vs_random: Vec::new(),
            final_mean: 0.0,
            final_delta_vs_random: 0.0,
        };
        if trials.iter().all(|t| t.points.iter().all(|p| p.value_approx_gt.is_some())) {
            s.mean_approx_gt = Some(
                (0..n)
                    .map(|k| mean(&column(k, &|p| p.value_approx_gt.unwrap_or(0.0))))
                    .collect(),
            );
        }
        s.final_mean = *s.mean.last().expect("non-empty curve");
        strategies.push(s);
    }
    let base_mean = strategies[0].mean.clone();
    let base_final = strategies[0].final_mean;
    for s in &mut strategies {
        s.delta_vs_random = s
            .mean
            .iter()
            .enumerate()
            .map(|(k, m)| m - base_mean.get(k).copied().unwrap_or(f64::NAN))
            .collect();
        s.final_delta_vs_random = s.final_mean - base_final;
    }
    Ok(Summary {
        preset: first.preset.clone(),
        metric: first.metric,
        baseline: BASELINE.into(),
        strategies,
        failures: Vec::new(),
    })
}

impl Summary {
    /// One row per (strategy, cycle).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "strategy",
            "trials",
            "cycle",
            "mean_spent",
            "mean_labeled",
            "mean",
            "std",
            "mean_approx_gt",
            "delta_vs_random",
        ])?;
        for s in &self.strategies {
            for k in 0..s.cycles.len() {
                w.write_record([
                    s.strategy.clone(),
                    s.trials.to_string(),
                    s.cycles[k].to_string(),
                    format!("{:.3}", s.mean_spent[k]),
                    format!("{:.3}", s.mean_labeled[k]),
                    format!("{:.6}", s.mean[k]),
                    format!("{:.6}", s.std[k]),
                    s.mean_approx_gt
                        .as_ref()
                        .map(|v| format!("{:.6}", v[k]))
                        .unwrap_or_default(),
                    format!("{:.6}", s.delta_vs_random[k]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn strategy(&self, name: &str) -> Option<&StrategySummary> {
        self.strategies.iter().find(|s| s.strategy == name)
    }
}

/// Long-format per-trial curve points for external plotting.
pub fn write_plot_data<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "strategy",
        "learner",
        "trial",
        "cycle",
        "spent",
        "labeled",
        "value",
        "value_approx_gt",
    ])?;
    for r in records {
        for p in &r.points {
            w.write_record([
                r.strategy.clone(),
                r.learner.clone(),
                r.trial.to_string(),
                p.cycle.to_string(),
                p.spent.to_string(),
                p.labeled.to_string(),
                format!("{:.6}", p.value),
                p.value_approx_gt.map(|v| format!("{v:.6}")).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
