use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::init::{init_class_balanced, init_random_samples};
use super::learner::{training_needs, Learner, Split, TrainJob};
use super::preset::{Arm, ProtocolPreset};
use crate::annotation::{
    rasterize, select_polygon, ClickMeter, ConfusionMatrix, LabelMask, Polygon, PolygonSet,
    Regime, TracedMask,
};
use crate::error::{Error, Result};
use crate::learners::argmax;
use crate::model::{
    BudgetUnit, BundleField, CurvePoint, Dataset, ExperimentRecord, Metric, PoolState, SampleId,
    Task,
};
use crate::seed::derive;
use crate::strategies::{rank, select_random_from, QueryContext, Ranking, StrategyKind};

/// Polygon annotations of every pool image at the experiment tolerance,
/// computed once and shared by all trials.
#[derive(Clone, Debug)]
pub struct Annotator {
    pub tolerance: f64,
    image_polygons: Vec<PolygonSet>,
    components: Vec<Vec<crate::annotation::Component>>,
    component_polygons: Vec<Vec<Polygon>>,
}

impl Annotator {
    pub fn new(pool: &Dataset, tolerance: f64) -> Result<Self> {
        let per_image = (0..pool.len())
            .into_par_iter()
            .map(|i| {
                let mask = pool.mask_of(i).ok_or(Error::IndexOutOfRange {
                    index: i,
                    len: pool.len(),
                })?;
                let traced = TracedMask::new(mask);
                let polys = (0..traced.components.len())
                    .map(|c| traced.component_polygon(c, tolerance))
                    .collect::<Result<Vec<_>>>()?;
                Ok((traced.polygonize(tolerance), traced.components, polys))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut a = Annotator {
            tolerance,
            image_polygons: Vec::with_capacity(per_image.len()),
            components: Vec::with_capacity(per_image.len()),
            component_polygons: Vec::with_capacity(per_image.len()),
        };
        for (set, comps, polys) in per_image {
            a.image_polygons.push(set);
            a.components.push(comps);
            a.component_polygons.push(polys);
        }
        Ok(a)
    }

    pub fn image_cost(&self, index: SampleId) -> u64 {
        self.image_polygons[index].clicks()
    }

    pub fn image_polygons(&self, index: SampleId) -> &PolygonSet {
        &self.image_polygons[index]
    }
}

/// Held-out targets, computed once per experiment.
#[derive(Clone, Debug)]
pub enum Evaluator {
    Accuracy { classes: Vec<usize> },
    MIoU {
        num_classes: usize,
        gt: Vec<LabelMask>,
        approx: Vec<LabelMask>,
    },
}

impl Evaluator {
    pub fn new(test: &Dataset, tolerance: f64) -> Result<Self> {
        if test.is_empty() {
            return Err(Error::Config("the held-out test split is empty".into()));
        }
        match test.task {
            Task::Classification => Ok(Evaluator::Accuracy {
                classes: (0..test.len())
                    .map(|i| test.class_of(i).expect("classification target"))
                    .collect(),
            }),
            Task::Segmentation => {
                let gt: Vec<LabelMask> = (0..test.len())
                    .map(|i| test.mask_of(i).expect("segmentation target").clone())
                    .collect();
                let approx = gt
                    .par_iter()
                    .map(|m| approximate_mask(m, tolerance))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Evaluator::MIoU {
                    num_classes: test.num_classes,
                    gt,
                    approx,
                })
            }
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            Evaluator::Accuracy { .. } => Metric::Accuracy,
            Evaluator::MIoU { .. } => Metric::MIoU,
        }
    }

    /// Metric of the learner's reporting model, and for segmentation the
    /// same metric against polygon-approximated ground truth.
    pub fn evaluate(&self, learner: &mut dyn Learner) -> Result<(f64, Option<f64>)> {
        match self {
            Evaluator::Accuracy { classes } => {
                let ids: Vec<SampleId> = (0..classes.len()).collect();
                let bundle = learner.predict(Split::Test, &ids, &[BundleField::Probs])?;
                bundle.validate(None)?;
                let probs = bundle.probs.ok_or(Error::MissingField(BundleField::Probs))?;
                let correct = probs
                    .iter()
                    .zip(classes)
                    .filter(|(p, &c)| argmax(p) == c)
                    .count();
                Ok((correct as f64 / classes.len() as f64, None))
            }
            Evaluator::MIoU {
                num_classes,
                gt,
                approx,
            } => {
                let ids: Vec<SampleId> = (0..gt.len()).collect();
                let pred = learner.predict_masks(&ids)?;
                if pred.len() != gt.len() {
                    return Err(Error::SizeMismatch(format!(
                        "{} predicted masks for {} test images",
                        pred.len(),
                        gt.len()
                    )));
                }
                let mut a = ConfusionMatrix::new(*num_classes);
                let mut b = ConfusionMatrix::new(*num_classes);
                for ((p, g), ap) in pred.iter().zip(gt).zip(approx) {
                    a.accumulate(p, g)?;
                    b.accumulate(p, ap)?;
                }
                Ok((a.miou(), Some(b.miou())))
            }
        }
    }
}

/// Rasterized polygon approximation of `mask`; void pixels stay void.
pub fn approximate_mask(mask: &LabelMask, tolerance: f64) -> Result<LabelMask> {
    let set = crate::annotation::polygonize(mask, tolerance);
    let mut out = rasterize(&set, mask.width, mask.height, mask.void_id.unwrap_or(0))?;
    if let Some(v) = mask.void_id {
        for (o, &g) in out.pixels.iter_mut().zip(&mask.pixels) {
            if g == v {
                *o = v;
            }
        }
    }
    out.void_id = mask.void_id;
    Ok(out)
}

/// Shared, read-only inputs of every trial.
pub struct Experiment {
    pub preset: ProtocolPreset,
    pub pool: std::sync::Arc<Dataset>,
    pub annotator: Option<Annotator>,
    pub evaluator: Evaluator,
    /// Entropy threshold for choosing polygons.
    pub threshold: f64,
    pub seed: u64,
}

impl Experiment {
    pub fn new(
        preset: ProtocolPreset,
        pool: std::sync::Arc<Dataset>,
        test: &Dataset,
        tolerance: f64,
        threshold: f64,
        seed: u64,
    ) -> Result<Self> {
        preset.validate()?;
        if pool.task == Task::Classification && preset.budget.unit == BudgetUnit::Clicks {
            return Err(Error::Config("click budgets need segmentation data".into()));
        }
        if pool.task == Task::Classification && preset.regime == Regime::Polygon {
            return Err(Error::Config("the polygon regime needs segmentation data".into()));
        }
        let annotator = match pool.task {
            Task::Segmentation => Some(Annotator::new(&pool, tolerance)?),
            Task::Classification => None,
        };
        Ok(Experiment {
            evaluator: Evaluator::new(test, tolerance)?,
            preset,
            pool,
            annotator,
            threshold,
            seed,
        })
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive(self.seed, &["trial", &trial.to_string()])
    }

    fn annotator(&self) -> Result<&Annotator> {
        self.annotator
            .as_ref()
            .ok_or_else(|| Error::Config("annotation needs segmentation data".into()))
    }

    /// Fields the arm will request from the learner.
    pub fn needed_fields(&self, arm: &Arm) -> Vec<BundleField> {
        let mut out = Vec::new();
        if let Some(f) = arm.strategy.kind.required_field() {
            out.push(f);
        }
        if self.preset.regime == Regime::Polygon
            && arm.strategy.kind != StrategyKind::Random
            && !out.contains(&BundleField::EntropyMaps)
        {
            out.push(BundleField::EntropyMaps);
        }
        out
    }

    /// Configuration checks that must pass before any training.
    pub fn check_arm(&self, arm: &Arm, learner: &dyn Learner) -> Result<()> {
        arm.strategy.validate(self.pool.num_classes)?;
        let have = learner.fields(arm);
        for f in self.needed_fields(arm) {
            if !have.contains(&f) {
                return Err(Error::Config(format!(
                    "strategy `{}` needs field `{f}`, which learner `{}` cannot produce",
                    arm.id,
                    learner.id()
                )));
            }
        }
        Ok(())
    }
}

/// One unit acquired in a cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub index: SampleId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    pub cost: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleLog {
    pub cycle: usize,
    /// Cumulative allowance the acquisitions were charged against.
    pub allowance: u64,
    pub spent: u64,
    pub acquired: Vec<Acquisition>,
}

/// Pool partition plus which ground-truth components of partially labeled
/// images are already annotated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub pool: PoolState,
    #[serde(default)]
    pub done_components: BTreeMap<SampleId, BTreeSet<usize>>,
}

impl TrialState {
    pub fn spent(&self, unit: BudgetUnit) -> u64 {
        match unit {
            BudgetUnit::Samples => self.pool.labeled.len() as u64,
            BudgetUnit::Clicks => self.pool.total_clicks(),
        }
    }
}

/// Full audit trail of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub arm: String,
    pub trial: usize,
    pub seed: u64,
    pub cycles: Vec<CycleLog>,
    pub final_state: TrialState,
}

/// Cycle 0 labeled set: class-balanced for classification, random whole
/// images for segmentation.
pub fn initial_state(exp: &Experiment, trial_seed: u64) -> Result<(TrialState, CycleLog)> {
    let n = exp.pool.len();
    let budget = exp.preset.budget;
    let seed = derive(trial_seed, &["init"]);
    let pool = PoolState::new(n);
    let all: Vec<SampleId> = (0..n).collect();
    let (chosen, costs): (BTreeSet<SampleId>, BTreeMap<SampleId, u64>) =
        match (exp.pool.task, budget.unit) {
            (Task::Classification, BudgetUnit::Samples) => (
                init_class_balanced(&exp.pool, budget.initial as usize, seed)?
                    .into_iter()
                    .collect(),
                BTreeMap::new(),
            ),
            (Task::Segmentation, BudgetUnit::Samples) => (
                init_random_samples(&all, (budget.initial as usize).min(n), seed)?
                    .into_iter()
                    .collect(),
                BTreeMap::new(),
            ),
            (Task::Segmentation, BudgetUnit::Clicks) => {
                let a = exp.annotator()?;
                let costs = super::init::init_random_images(&all, budget.initial, seed, |i| {
                    Ok(a.image_cost(i))
                })?;
                (costs.keys().copied().collect(), costs)
            }
            (Task::Classification, BudgetUnit::Clicks) => {
                return Err(Error::Config("click budgets need segmentation data".into()))
            }
        };
    let pool = pool.apply_acquisition(&chosen, &costs)?;
    let state = TrialState {
        pool,
        done_components: BTreeMap::new(),
    };
    let log = CycleLog {
        cycle: 0,
        allowance: budget.allowance(0),
        spent: state.spent(budget.unit),
        acquired: chosen
            .iter()
            .map(|&i| Acquisition {
                index: i,
                component: None,
                cost: costs.get(&i).copied().unwrap_or(1),
            })
            .collect(),
    };
    Ok((state, log))
}

fn train_job(exp: &Experiment, arm: &Arm, state: &TrialState, seed: u64) -> Result<TrainJob> {
    let (ensemble, loss_head) = training_needs(arm);
    let polygons = match &exp.annotator {
        Some(a) => state
            .pool
            .labeled
            .iter()
            .map(|&i| (i, a.image_polygons(i).clone()))
            .chain(state.pool.partial_labels.iter().map(|(&i, p)| (i, p.clone())))
            .collect(),
        None => Vec::new(),
    };
    Ok(TrainJob {
        labeled: state.pool.labeled.iter().copied().collect(),
        polygons,
        unlabeled: state.pool.unlabeled.iter().copied().collect(),
        mode: arm.mode,
        ensemble,
        loss_head,
        seed,
    })
}

/// Train on the current labeled set, evaluate, and (unless this is the last
/// cycle) acquire the next batch under the cumulative allowance.
pub fn run_cycle(
    exp: &Experiment,
    arm: &Arm,
    learner: &mut dyn Learner,
    state: &TrialState,
    cycle: usize,
    trial_seed: u64,
) -> Result<(TrialState, CurvePoint, Option<CycleLog>)> {
    let unit = exp.preset.budget.unit;
    let job = train_job(exp, arm, state, derive(trial_seed, &["train", &cycle.to_string()]))?;
    learner.train(&job)?;
    let (value, value_approx_gt) = exp.evaluator.evaluate(learner)?;
    let spent = state.spent(unit);
    let point = CurvePoint {
        cycle,
        spent,
        labeled: state.pool.labeled.len(),
        value,
        value_approx_gt,
    };
    if cycle >= exp.preset.budget.cycles {
        return Ok((state.clone(), point, None));
    }
    let allowance = exp.preset.budget.allowance(cycle + 1);
    let remaining = allowance.saturating_sub(spent);
    let qseed = derive(trial_seed, &["query", &arm.id, &cycle.to_string()]);
    let (next, acquired) = match (unit, exp.preset.regime) {
        (BudgetUnit::Samples, _) => acquire_samples(exp, arm, learner, state, remaining, qseed)?,
        (BudgetUnit::Clicks, Regime::Image) => acquire_images(exp, arm, learner, state, remaining, qseed)?,
        (BudgetUnit::Clicks, Regime::Polygon) => {
            acquire_polygons(exp, arm, learner, state, remaining, qseed)?
        }
    };
    let log = CycleLog {
        cycle: cycle + 1,
        allowance,
        spent: next.spent(unit),
        acquired,
    };
    Ok((next, point, Some(log)))
}

/// Full ranking of `candidates` by the arm's strategy.
fn full_ranking(
    exp: &Experiment,
    arm: &Arm,
    learner: &mut dyn Learner,
    state: &TrialState,
    candidates: &[SampleId],
    k: usize,
    qseed: u64,
) -> Result<(Ranking, Option<crate::model::PredictionBundle>)> {
    if arm.strategy.kind == StrategyKind::Random {
        return Ok((select_random_from(candidates, k, qseed)?, None));
    }
    let fields = exp.needed_fields(arm);
    let bundle = learner.predict(Split::Pool, candidates, &fields)?;
    if bundle.indices != candidates {
        return Err(Error::InvalidParam("bundle rows do not follow the request order".into()));
    }
    bundle.validate(Some(exp.pool.num_classes))?;
    let labeled_features = if arm.strategy.kind == StrategyKind::Coreset {
        let centers: Vec<SampleId> = state
            .pool
            .labeled
            .iter()
            .chain(state.pool.partial_labels.keys())
            .copied()
            .collect();
        let b = learner.predict(Split::Pool, &centers, &[BundleField::Features])?;
        b.validate(None)?;
        b.features
    } else {
        None
    };
    let ctx = QueryContext {
        labeled_features: labeled_features.as_deref(),
        seed: qseed,
    };
    Ok((rank(&arm.strategy, &bundle, ctx, k)?, Some(bundle)))
}

fn acquire_samples(
    exp: &Experiment,
    arm: &Arm,
    learner: &mut dyn Learner,
    state: &TrialState,
    remaining: u64,
    qseed: u64,
) -> Result<(TrialState, Vec<Acquisition>)> {
    let candidates: Vec<SampleId> = state.pool.unlabeled.iter().copied().collect();
    let k = (remaining as usize).min(candidates.len());
    if k == 0 {
        return Ok((state.clone(), Vec::new()));
    }
    let (ranking, _) = full_ranking(exp, arm, learner, state, &candidates, k, qseed)?;
    let chosen: BTreeSet<SampleId> = ranking.ids().into_iter().collect();
    let pool = state.pool.apply_acquisition(&chosen, &BTreeMap::new())?;
    let acquired = ranking
        .ids()
        .into_iter()
        .map(|i| Acquisition {
            index: i,
            component: None,
            cost: 1,
        })
        .collect();
    Ok((
        TrialState {
            pool,
            done_components: state.done_components.clone(),
        },
        acquired,
    ))
}

fn acquire_images(
    exp: &Experiment,
    arm: &Arm,
    learner: &mut dyn Learner,
    state: &TrialState,
    remaining: u64,
    qseed: u64,
) -> Result<(TrialState, Vec<Acquisition>)> {
    let a = exp.annotator()?;
    let candidates: Vec<SampleId> = state.pool.unlabeled.iter().copied().collect();
    if candidates.is_empty() || remaining == 0 {
        return Ok((state.clone(), Vec::new()));
    }
    let (ranking, _) = full_ranking(exp, arm, learner, state, &candidates, candidates.len(), qseed)?;
    let mut meter = ClickMeter::new(remaining);
    let mut costs = BTreeMap::new();
    let mut acquired = Vec::new();
    for i in ranking.ids() {
        let cost = a.image_cost(i);
        if meter.try_charge(cost) {
            costs.insert(i, cost);
            acquired.push(Acquisition {
                index: i,
                component: None,
                cost,
            });
        }
    }
    let chosen: BTreeSet<SampleId> = costs.keys().copied().collect();
    let pool = state.pool.apply_acquisition(&chosen, &costs)?;
    Ok((
        TrialState {
            pool,
            done_components: state.done_components.clone(),
        },
        acquired,
    ))
}

/// Polygon regime: repeated passes over the image ranking, annotating one
/// component per image per pass, until a pass acquires nothing.
fn acquire_polygons(
    exp: &Experiment,
    arm: &Arm,
    learner: &mut dyn Learner,
    state: &TrialState,
    remaining: u64,
    qseed: u64,
) -> Result<(TrialState, Vec<Acquisition>)> {
    let a = exp.annotator()?;
    let candidates: Vec<SampleId> = state
        .pool
        .candidates()
        .into_iter()
        .filter(|i| !a.components[*i].is_empty())
        .collect();
    if candidates.is_empty() || remaining == 0 {
        return Ok((state.clone(), Vec::new()));
    }
    let (ranking, bundle) =
        full_ranking(exp, arm, learner, state, &candidates, candidates.len(), qseed)?;
    let rows: BTreeMap<SampleId, usize> = candidates.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(qseed, &["components"]));
    let mut meter = ClickMeter::new(remaining);
    let mut next = state.clone();
    let mut acquired = Vec::new();
    loop {
        let mut progress = false;
        for i in ranking.ids() {
            if next.pool.labeled.contains(&i) {
                continue;
            }
            let done = next.done_components.get(&i);
            let open: Vec<usize> = (0..a.components[i].len())
                .filter(|c| done.is_none_or(|d| !d.contains(c)))
                .collect();
            if open.is_empty() {
                continue;
            }
            let comp = match &bundle {
                None => open[rng.random_range(0..open.len())],
                Some(b) => {
                    let maps = b
                        .entropy_maps
                        .as_ref()
                        .ok_or(Error::MissingField(BundleField::EntropyMaps))?;
                    select_polygon(&maps[rows[&i]], &a.components[i], &open, exp.threshold)?
                }
            };
            let polygon = a.component_polygons[i][comp].clone();
            let cost = polygon.clicks();
            if !meter.try_charge(cost) {
                continue;
            }
            next.pool = next.pool.apply_polygon(i, polygon, cost, a.tolerance, open.len() == 1)?;
            let entry = next.done_components.entry(i).or_default();
            entry.insert(comp);
            if open.len() == 1 {
                next.done_components.remove(&i);
            }
            acquired.push(Acquisition {
                index: i,
                component: Some(comp),
                cost,
            });
            progress = true;
        }
        if !progress {
            break;
        }
    }
    Ok((next, acquired))
}

/// Runs the whole cycle loop of one (arm, trial).
pub fn run_trial(
    exp: &Experiment,
    arm: &Arm,
    trial: usize,
    learner: &mut dyn Learner,
) -> Result<(ExperimentRecord, TrialLog)> {
    exp.check_arm(arm, learner)?;
    let trial_seed = exp.trial_seed(trial);
    let learner_id = format!("{}/{}", learner.id(), arm.mode.id());
    let mut record = ExperimentRecord::new(
        exp.preset.name.clone(),
        arm.id.clone(),
        learner_id,
        trial,
        trial_seed,
        exp.evaluator.metric(),
    );
    let (mut state, init_log) = initial_state(exp, trial_seed)?;
    let mut logs = vec![init_log];
    for cycle in 0..=exp.preset.budget.cycles {
        let (next, point, log) = run_cycle(exp, arm, learner, &state, cycle, trial_seed)?;
        log::info!(
            "{} trial {trial} cycle {cycle}: spent {} value {:.4}",
            arm.id,
            point.spent,
            point.value
        );
        record.push(point)?;
        logs.extend(log);
        state = next;
    }
    state.pool.check(exp.pool.len())?;
    Ok((
        record,
        TrialLog {
            arm: arm.id.clone(),
            trial,
            seed: trial_seed,
            cycles: logs,
            final_state: state,
        },
    ))
}
