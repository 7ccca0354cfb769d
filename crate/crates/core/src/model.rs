//! Shared data model: datasets, pool partitions, budgets, prediction bundles
//! and experiment records.
//!
//! Samples are identified everywhere by their stable index into
//! [`Dataset::items`]. Pool transitions return a new [`PoolState`] and leave
//! the input untouched so a trial can keep a snapshot per cycle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::annotation::{LabelMask, Polygon, PolygonSet};
use crate::error::{Error, Result};

/// Tolerance for a probability row to count as lying on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-6;

pub type SampleId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Segmentation,
}

/// An H×W×C raster with channel-interleaved values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sample {
    Vector(Vec<f64>),
    Image(Image),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Class(usize),
    Mask(LabelMask),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<Sample>,
    pub targets: Vec<Target>,
    pub num_classes: usize,
    pub task: Task,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_of(&self, index: SampleId) -> Option<usize> {
        match self.targets.get(index) {
            Some(Target::Class(c)) => Some(*c),
            _ => None,
        }
    }

    pub fn mask_of(&self, index: SampleId) -> Option<&LabelMask> {
        match self.targets.get(index) {
            Some(Target::Mask(m)) => Some(m),
            _ => None,
        }
    }

    pub fn vector(&self, index: SampleId) -> Option<&[f64]> {
        match self.items.get(index) {
            Some(Sample::Vector(v)) => Some(v),
            _ => None,
        }
    }

    pub fn image(&self, index: SampleId) -> Option<&Image> {
        match self.items.get(index) {
            Some(Sample::Image(img)) => Some(img),
            _ => None,
        }
    }

    /// Dimensionality of the first vector sample, if any.
    pub fn feature_dim(&self) -> Option<usize> {
        self.items.iter().find_map(|s| match s {
            Sample::Vector(v) => Some(v.len()),
            Sample::Image(_) => None,
        })
    }

    /// Returns a new dataset holding the given samples, in the given order.
    pub fn subset(&self, indices: &[SampleId]) -> Dataset {
        Dataset {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
            num_classes: self.num_classes,
            task: self.task,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    LengthMismatch { items: usize, targets: usize },
    ZeroClasses,
    FeatureDim { expected: usize, found: usize },
    ClassRange { class: usize },
    MaskClassRange { class: u8 },
    PixelRange { value: f32 },
    TargetKind,
    ImageShape,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub index: Option<SampleId>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(i) = self.index {
            write!(f, "sample {i}: ")?;
        }
        match &self.rule {
            Rule::LengthMismatch { items, targets } => {
                write!(f, "{items} items but {targets} targets")
            }
            Rule::ZeroClasses => write!(f, "num_classes must be positive"),
            Rule::FeatureDim { expected, found } => {
                write!(f, "feature dimension {found}, expected {expected}")
            }
            Rule::ClassRange { class } => write!(f, "class id {class} out of range"),
            Rule::MaskClassRange { class } => write!(f, "mask class id {class} out of range"),
            Rule::PixelRange { value } => write!(f, "pixel value {value} outside [0, 1]"),
            Rule::TargetKind => write!(f, "target kind does not match the task"),
            Rule::ImageShape => write!(f, "image and mask shapes disagree"),
        }
    }
}

/// Checks every dataset invariant and reports each violation; never aborts.
pub fn validate_dataset(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if d.items.len() != d.targets.len() {
        out.push(Violation {
            index: None,
            rule: Rule::LengthMismatch {
                items: d.items.len(),
                targets: d.targets.len(),
            },
        });
    }
    if d.num_classes == 0 {
        out.push(Violation {
            index: None,
            rule: Rule::ZeroClasses,
        });
    }
    let dim = d.feature_dim();
    for (i, item) in d.items.iter().enumerate() {
        match item {
            Sample::Vector(v) => {
                let expected = dim.unwrap_or(v.len());
                if v.len() != expected {
                    out.push(Violation {
                        index: Some(i),
                        rule: Rule::FeatureDim {
                            expected,
                            found: v.len(),
                        },
                    });
                }
            }
            Sample::Image(img) => {
                if img.data.len() != img.width * img.height * img.channels {
                    out.push(Violation {
                        index: Some(i),
                        rule: Rule::ImageShape,
                    });
                } else if let Some(&bad) = img.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    out.push(Violation {
                        index: Some(i),
                        rule: Rule::PixelRange { value: bad },
                    });
                }
            }
        }
    }
    for (i, target) in d.targets.iter().enumerate() {
        match (d.task, target) {
            (Task::Classification, Target::Class(c)) => {
                if *c >= d.num_classes {
                    out.push(Violation {
                        index: Some(i),
                        rule: Rule::ClassRange { class: *c },
                    });
                }
            }
            (Task::Segmentation, Target::Mask(m)) => {
                let bad = m
                    .pixels
                    .iter()
                    .copied()
                    .find(|&p| Some(p) != m.void_id && p as usize >= d.num_classes);
                if let Some(class) = bad {
                    out.push(Violation {
                        index: Some(i),
                        rule: Rule::MaskClassRange { class },
                    });
                }
                if let Some(Sample::Image(img)) = d.items.get(i) {
                    if img.width != m.width || img.height != m.height {
                        out.push(Violation {
                            index: Some(i),
                            rule: Rule::ImageShape,
                        });
                    }
                }
            }
            _ => out.push(Violation {
                index: Some(i),
                rule: Rule::TargetKind,
            }),
        }
    }
    out
}

/// Partition of the dataset indices into labeled, unlabeled and (polygon
/// regime only) partially labeled samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    pub labeled: BTreeSet<SampleId>,
    pub unlabeled: BTreeSet<SampleId>,
    #[serde(default)]
    pub partial_labels: BTreeMap<SampleId, PolygonSet>,
    #[serde(default)]
    pub spent_clicks: BTreeMap<SampleId, u64>,
}

impl PoolState {
    /// All `n` samples unlabeled.
    pub fn new(n: usize) -> Self {
        PoolState {
            unlabeled: (0..n).collect(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len() + self.partial_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_clicks(&self) -> u64 {
        self.spent_clicks.values().sum()
    }

    /// Samples that can still receive annotation: unlabeled plus partially labeled.
    pub fn candidates(&self) -> Vec<SampleId> {
        let mut out: Vec<_> = self
            .unlabeled
            .iter()
            .chain(self.partial_labels.keys())
            .copied()
            .collect();
        out.sort_unstable();
        out
    }

    /// Verifies disjointness and that the partition covers exactly `0..n`.
    pub fn check(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        let all = self
            .labeled
            .iter()
            .chain(self.unlabeled.iter())
            .chain(self.partial_labels.keys());
        for &i in all {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if seen[i] {
                return Err(Error::InvalidParam(format!(
                    "sample {i} appears in more than one partition"
                )));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParam(format!(
                "sample {missing} is in no partition"
            )));
        }
        Ok(())
    }

    /// Moves `chosen` from the unlabeled pool into the labeled set, recording
    /// any click costs. The receiver is left unchanged.
    pub fn apply_acquisition(
        &self,
        chosen: &BTreeSet<SampleId>,
        costs: &BTreeMap<SampleId, u64>,
    ) -> Result<PoolState> {
        for &i in chosen {
            if self.labeled.contains(&i) || self.partial_labels.contains_key(&i) {
                return Err(Error::AlreadyLabeled(i));
            }
            if !self.unlabeled.contains(&i) {
                return Err(Error::NotInPool(i));
            }
        }
        if let Some(&i) = costs.keys().find(|i| !chosen.contains(i)) {
            return Err(Error::InvalidParam(format!(
                "cost recorded for sample {i} which was not acquired"
            )));
        }
        let mut next = self.clone();
        for &i in chosen {
            next.unlabeled.remove(&i);
            next.labeled.insert(i);
        }
        for (&i, &c) in costs {
            *next.spent_clicks.entry(i).or_insert(0) += c;
        }
        Ok(next)
    }

    /// Records one annotated polygon of sample `index`. When `complete` is set
    /// the sample has no unannotated components left and moves to the labeled
    /// set.
    pub fn apply_polygon(
        &self,
        index: SampleId,
        polygon: Polygon,
        cost: u64,
        tolerance: f64,
        complete: bool,
    ) -> Result<PoolState> {
        if self.labeled.contains(&index) {
            return Err(Error::AlreadyLabeled(index));
        }
        if !self.unlabeled.contains(&index) && !self.partial_labels.contains_key(&index) {
            return Err(Error::NotInPool(index));
        }
        let mut next = self.clone();
        next.unlabeled.remove(&index);
        *next.spent_clicks.entry(index).or_insert(0) += cost;
        let mut set = next
            .partial_labels
            .remove(&index)
            .unwrap_or_else(|| PolygonSet::empty(tolerance));
        set.push(polygon);
        if complete {
            next.labeled.insert(index);
        } else {
            next.partial_labels.insert(index, set);
        }
        Ok(next)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetUnit {
    Samples,
    Clicks,
}

/// Annotation allowance: `initial` up front, then `per_cycle` for each of
/// `cycles` acquisition rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub unit: BudgetUnit,
    pub initial: u64,
    pub per_cycle: u64,
    pub cycles: usize,
}

impl Budget {
    pub fn total(&self) -> u64 {
        self.allowance(self.cycles)
    }

    /// Cumulative allowance after `cycle` acquisition rounds (cycle 0 is the
    /// initial set).
    pub fn allowance(&self, cycle: usize) -> u64 {
        self.initial + cycle as u64 * self.per_cycle
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(Error::Config("budget needs at least one cycle".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleField {
    Probs,
    Features,
    PredLoss,
    EnsembleVotes,
    EntropyMaps,
    DiscScores,
}

impl BundleField {
    pub const ALL: [BundleField; 6] = [
        BundleField::Probs,
        BundleField::Features,
        BundleField::PredLoss,
        BundleField::EnsembleVotes,
        BundleField::EntropyMaps,
        BundleField::DiscScores,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BundleField::Probs => "probs",
            BundleField::Features => "features",
            BundleField::PredLoss => "pred_loss",
            BundleField::EnsembleVotes => "ensemble_votes",
            BundleField::EntropyMaps => "entropy_maps",
            BundleField::DiscScores => "disc_scores",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

impl fmt::Display for BundleField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single-channel H×W raster of non-negative reals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Per-sample model outputs consumed by the query strategies. Row `r` of every
/// populated field belongs to sample `indices[r]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionBundle {
    pub indices: Vec<SampleId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_loss: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_votes: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_maps: Option<Vec<Raster>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_scores: Option<Vec<f64>>,
}

impl PredictionBundle {
    pub fn new(indices: Vec<SampleId>) -> Self {
        PredictionBundle {
            indices,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn has(&self, field: BundleField) -> bool {
        match field {
            BundleField::Probs => self.probs.is_some(),
            BundleField::Features => self.features.is_some(),
            BundleField::PredLoss => self.pred_loss.is_some(),
            BundleField::EnsembleVotes => self.ensemble_votes.is_some(),
            BundleField::EntropyMaps => self.entropy_maps.is_some(),
            BundleField::DiscScores => self.disc_scores.is_some(),
        }
    }

    pub fn fields(&self) -> Vec<BundleField> {
        BundleField::ALL.into_iter().filter(|f| self.has(*f)).collect()
    }

    /// Drops every field not listed in `keep`.
    pub fn restrict(mut self, keep: &[BundleField]) -> Self {
        for f in BundleField::ALL {
            if keep.contains(&f) {
                continue;
            }
            match f {
                BundleField::Probs => self.probs = None,
                BundleField::Features => self.features = None,
                BundleField::PredLoss => self.pred_loss = None,
                BundleField::EnsembleVotes => self.ensemble_votes = None,
                BundleField::EntropyMaps => self.entropy_maps = None,
                BundleField::DiscScores => self.disc_scores = None,
            }
        }
        self
    }

    /// Rows of this bundle for the given sample ids, in the given order.
    pub fn select(&self, ids: &[SampleId]) -> Result<PredictionBundle> {
        let pos: BTreeMap<SampleId, usize> =
            self.indices.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        let rows = ids
            .iter()
            .map(|i| pos.get(i).copied().ok_or(Error::NotInPool(*i)))
            .collect::<Result<Vec<_>>>()?;
        fn pick<T: Clone>(v: &Option<Vec<T>>, rows: &[usize]) -> Option<Vec<T>> {
            v.as_ref().map(|v| rows.iter().map(|&r| v[r].clone()).collect())
        }
        Ok(PredictionBundle {
            indices: ids.to_vec(),
            probs: pick(&self.probs, &rows),
            features: pick(&self.features, &rows),
            pred_loss: pick(&self.pred_loss, &rows),
            ensemble_votes: pick(&self.ensemble_votes, &rows),
            entropy_maps: pick(&self.entropy_maps, &rows),
            disc_scores: pick(&self.disc_scores, &rows),
        })
    }

    /// Checks the bundle invariants. `num_classes`, when given, also bounds
    /// the probability width and vote ids. Bundles from external processes go
    /// through this before any strategy sees them.
    pub fn validate(&self, num_classes: Option<usize>) -> Result<()> {
        let n = self.indices.len();
        if self.fields().is_empty() && n > 0 {
            return Err(Error::InvalidParam("prediction bundle has no fields".into()));
        }
        let check_len = |field, found| {
            if found != n {
                Err(Error::FieldLength {
                    field,
                    expected: n,
                    found,
                })
            } else {
                Ok(())
            }
        };
        if let Some(p) = &self.probs {
            check_len(BundleField::Probs, p.len())?;
            let width = num_classes.or_else(|| p.first().map(Vec::len));
            for (r, row) in p.iter().enumerate() {
                if Some(row.len()) != width {
                    return Err(Error::InvalidParam(format!(
                        "probability row {r} has width {}",
                        row.len()
                    )));
                }
                check_simplex(row, r)?;
            }
        }
        if let Some(f) = &self.features {
            check_len(BundleField::Features, f.len())?;
            let dim = f.first().map_or(0, Vec::len);
            for (r, row) in f.iter().enumerate() {
                if row.len() != dim {
                    return Err(Error::FeatureDim {
                        row: r,
                        expected: dim,
                        found: row.len(),
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParam(format!("feature row {r} is not finite")));
                }
            }
        }
        if let Some(l) = &self.pred_loss {
            check_len(BundleField::PredLoss, l.len())?;
            if let Some(r) = l.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidParam(format!("predicted loss {r} is not finite")));
            }
        }
        if let Some(v) = &self.ensemble_votes {
            check_len(BundleField::EnsembleVotes, v.len())?;
            let t = v.first().map_or(0, Vec::len);
            for (r, row) in v.iter().enumerate() {
                if row.len() != t {
                    return Err(Error::RaggedVotes {
                        row: r,
                        expected: t,
                        found: row.len(),
                    });
                }
                if let (Some(k), Some(&c)) = (num_classes, row.iter().find(|&&c| Some(c) >= num_classes)) {
                    return Err(Error::InvalidParam(format!(
                        "vote {c} in row {r} is not a class id below {k}"
                    )));
                }
            }
        }
        if let Some(maps) = &self.entropy_maps {
            check_len(BundleField::EntropyMaps, maps.len())?;
            for m in maps {
                if m.data.len() != m.width * m.height {
                    return Err(Error::SizeMismatch(format!(
                        "entropy map {}x{} holds {} values",
                        m.width,
                        m.height,
                        m.data.len()
                    )));
                }
                if let Some(px) = m.data.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::NegativeEntropy {
                        pixel: px,
                        value: m.data[px],
                    });
                }
            }
        }
        if let Some(s) = &self.disc_scores {
            check_len(BundleField::DiscScores, s.len())?;
            if let Some(r) = s.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::ScoreOutOfRange { row: r, score: s[r] });
            }
        }
        Ok(())
    }
}

/// Errors unless `row` is a probability vector within [`SIMPLEX_TOL`].
pub fn check_simplex(row: &[f64], index: usize) -> Result<()> {
    let sum: f64 = row.iter().sum();
    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
    let finite = row.iter().all(|v| v.is_finite());
    if !finite || row.is_empty() || (sum - 1.0).abs() > SIMPLEX_TOL || min < -SIMPLEX_TOL {
        return Err(Error::InvalidDistribution {
            row: index,
            sum,
            min,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    #[serde(rename = "miou")]
    MIoU,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub cycle: usize,
    /// Cumulative budget spent, in the budget's unit.
    pub spent: u64,
    pub labeled: usize,
    pub value: f64,
    /// Segmentation only: the same metric against polygon-approximated
    /// ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_approx_gt: Option<f64>,
}

/// One trial of one strategy: a learning curve with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub preset: String,
    pub strategy: String,
    pub learner: String,
    pub trial: usize,
    pub seed: u64,
    pub metric: Metric,
    pub points: Vec<CurvePoint>,
}

impl ExperimentRecord {
    pub fn new(
        preset: impl Into<String>,
        strategy: impl Into<String>,
        learner: impl Into<String>,
        trial: usize,
        seed: u64,
        metric: Metric,
    ) -> Self {
        ExperimentRecord {
            preset: preset.into(),
            strategy: strategy.into(),
            learner: learner.into(),
            trial,
            seed,
            metric,
            points: Vec::new(),
        }
    }

    /// Appends a point, keeping cycles strictly increasing and spend
    /// non-decreasing.
    pub fn push(&mut self, point: CurvePoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if point.cycle <= last.cycle || point.spent < last.spent {
                return Err(Error::InvalidParam(format!(
                    "curve point (cycle {}, spent {}) does not follow (cycle {}, spent {})",
                    point.cycle, point.spent, last.cycle, last.spent
                )));
            }
        }
        self.points.push(point);
        Ok(())
    }

    pub fn final_value(&self) -> Option<f64> {
        self.points.last().map(|p| p.value)
    }
}
