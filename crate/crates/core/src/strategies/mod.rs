//! Query strategies: pure functions from a prediction bundle over the pool to
//! a ranked acquisition order.
//!
//! Every ranking breaks score ties by the lower sample index, so the same
//! inputs always give the same order.

mod coreset;
mod scores;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BundleField, PoolState, PredictionBundle, SampleId};

pub use coreset::select_coreset_greedy;
pub use scores::{
    ensemble_entropy_map, modal_class, pixel_entropy_map, ranking_hinge, seg_uncertainty_score,
    shannon_entropy, variation_ratio,
};

/// Default pixel-entropy threshold, in nats.
pub const DEFAULT_ENTROPY_THRESHOLD: f64 = 0.6;
pub const DEFAULT_ENSEMBLE_SIZE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    LowerIndex,
}

/// Samples in descending priority with the score that placed them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<(SampleId, f64)>,
    #[serde(default)]
    pub tie_rule: TieRule,
}

impl Ranking {
    pub fn new(entries: Vec<(SampleId, f64)>) -> Self {
        Ranking {
            entries,
            tie_rule: TieRule::LowerIndex,
        }
    }

    pub fn ids(&self) -> Vec<SampleId> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Entropy,
    EnsVarr,
    Coreset,
    LearnLoss,
    SegEntropy,
    EnsEnt,
    DScore,
}

impl StrategyKind {
    pub fn id(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Entropy => "entropy",
            StrategyKind::EnsVarr => "ens_varr",
            StrategyKind::Coreset => "coreset",
            StrategyKind::LearnLoss => "learn_loss",
            StrategyKind::SegEntropy => "seg_entropy",
            StrategyKind::EnsEnt => "ens_ent",
            StrategyKind::DScore => "d_score",
        }
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, StrategyKind::EnsVarr | StrategyKind::EnsEnt)
    }

    pub fn required_field(self) -> Option<BundleField> {
        match self {
            StrategyKind::Random => None,
            StrategyKind::Entropy => Some(BundleField::Probs),
            StrategyKind::EnsVarr => Some(BundleField::EnsembleVotes),
            StrategyKind::Coreset => Some(BundleField::Features),
            StrategyKind::LearnLoss => Some(BundleField::PredLoss),
            StrategyKind::SegEntropy | StrategyKind::EnsEnt => Some(BundleField::EntropyMaps),
            StrategyKind::DScore => Some(BundleField::DiscScores),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    #[serde(default = "default_threshold")]
    pub entropy_threshold: f64,
    #[serde(default = "default_ensemble")]
    pub ensemble_size: usize,
    #[serde(default)]
    pub distance: Distance,
}

fn default_threshold() -> f64 {
    DEFAULT_ENTROPY_THRESHOLD
}

fn default_ensemble() -> usize {
    DEFAULT_ENSEMBLE_SIZE
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        StrategySpec {
            kind,
            entropy_threshold: DEFAULT_ENTROPY_THRESHOLD,
            ensemble_size: DEFAULT_ENSEMBLE_SIZE,
            distance: Distance::Euclidean,
        }
    }

    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if matches!(self.kind, StrategyKind::SegEntropy | StrategyKind::EnsEnt) {
            let max = (num_classes as f64).ln();
            if !(self.entropy_threshold > 0.0 && self.entropy_threshold <= max) {
                return Err(Error::Config(format!(
                    "entropy threshold {} outside (0, ln {num_classes}]",
                    self.entropy_threshold
                )));
            }
        }
        if self.kind.is_ensemble() && self.ensemble_size < 2 {
            return Err(Error::Config(format!(
                "ensemble size {} for {} must be at least 2",
                self.ensemble_size,
                self.id()
            )));
        }
        Ok(())
    }
}

/// Inputs a strategy may need beyond the candidate bundle.
#[derive(Clone, Copy, Debug)]
pub struct QueryContext<'a> {
    /// Features of the labeled set, for core-set.
    pub labeled_features: Option<&'a [Vec<f64>]>,
    pub seed: u64,
}

/// Ranks the bundle's samples with `spec`, returning the top `k`.
pub fn rank(
    spec: &StrategySpec,
    bundle: &PredictionBundle,
    ctx: QueryContext<'_>,
    k: usize,
) -> Result<Ranking> {
    match spec.kind {
        StrategyKind::Random => select_random_from(&bundle.indices, k, ctx.seed),
        StrategyKind::Entropy => select_entropy(bundle, k),
        StrategyKind::EnsVarr => select_varr(bundle, k),
        StrategyKind::Coreset => {
            let features = bundle
                .features
                .as_ref()
                .ok_or(Error::MissingField(BundleField::Features))?;
            let labeled = ctx.labeled_features.ok_or(Error::EmptySeedSet)?;
            select_coreset_greedy(&bundle.indices, features, labeled, k)
        }
        StrategyKind::LearnLoss => select_learn_loss(bundle, k),
        StrategyKind::SegEntropy | StrategyKind::EnsEnt => {
            select_seg_entropy(bundle, spec.entropy_threshold, k)
        }
        StrategyKind::DScore => select_d_score(bundle, k),
    }
}

fn check_k(k: usize, available: usize) -> Result<()> {
    if k > available {
        Err(Error::PoolTooSmall {
            requested: k,
            available,
        })
    } else {
        Ok(())
    }
}

/// Top `k` by score descending, ties to the lower sample index.
fn top_k(mut scored: Vec<(SampleId, f64)>, k: usize) -> Ranking {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ranking::new(scored)
}

/// Bottom `k` by score ascending, ties to the lower sample index.
fn bottom_k(mut scored: Vec<(SampleId, f64)>, k: usize) -> Ranking {
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ranking::new(scored)
}

/// `k` distinct unlabeled samples drawn uniformly without replacement.
pub fn select_random(pool: &PoolState, k: usize, seed: u64) -> Result<Ranking> {
    let ids: Vec<SampleId> = pool.unlabeled.iter().copied().collect();
    select_random_from(&ids, k, seed)
}

/// Uniform draw of `k` of `candidates`. The draw depends only on the sorted
/// candidate set and the seed.
pub fn select_random_from(candidates: &[SampleId], k: usize, seed: u64) -> Result<Ranking> {
    check_k(k, candidates.len())?;
    let mut ids = candidates.to_vec();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chosen, _) = ids.partial_shuffle(&mut rng, k);
    let entries = chosen
        .iter()
        .enumerate()
        .map(|(pos, &id)| (id, (k - pos) as f64))
        .collect();
    Ok(Ranking::new(entries))
}

pub fn select_entropy(bundle: &PredictionBundle, k: usize) -> Result<Ranking> {
    let probs = bundle
        .probs
        .as_ref()
        .ok_or(Error::MissingField(BundleField::Probs))?;
    check_k(k, bundle.indices.len())?;
    let scored = bundle
        .indices
        .iter()
        .zip(probs)
        .map(|(&id, p)| Ok((id, shannon_entropy(p)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(top_k(scored, k))
}

pub fn select_varr(bundle: &PredictionBundle, k: usize) -> Result<Ranking> {
    let votes = bundle
        .ensemble_votes
        .as_ref()
        .ok_or(Error::MissingField(BundleField::EnsembleVotes))?;
    check_k(k, bundle.indices.len())?;
    let width = votes.first().map_or(0, Vec::len);
    if width < 2 && !votes.is_empty() {
        return Err(Error::InvalidParam(format!(
            "variation ratio needs at least 2 ensemble members, got {width}"
        )));
    }
    let scored = bundle
        .indices
        .iter()
        .zip(votes)
        .enumerate()
        .map(|(row, (&id, v))| {
            if v.len() != width {
                return Err(Error::RaggedVotes {
                    row,
                    expected: width,
                    found: v.len(),
                });
            }
            Ok((id, variation_ratio(v)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(top_k(scored, k))
}

pub fn select_learn_loss(bundle: &PredictionBundle, k: usize) -> Result<Ranking> {
    let loss = bundle
        .pred_loss
        .as_ref()
        .ok_or(Error::MissingField(BundleField::PredLoss))?;
    check_k(k, bundle.indices.len())?;
    if let Some(r) = loss.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParam(format!("predicted loss {r} is not finite")));
    }
    Ok(top_k(bundle.indices.iter().copied().zip(loss.iter().copied()).collect(), k))
}

/// Top `k` images by count of pixels with entropy above `threshold`.
pub fn select_seg_entropy(bundle: &PredictionBundle, threshold: f64, k: usize) -> Result<Ranking> {
    let maps = bundle
        .entropy_maps
        .as_ref()
        .ok_or(Error::MissingField(BundleField::EntropyMaps))?;
    check_k(k, bundle.indices.len())?;
    let scored = bundle
        .indices
        .iter()
        .zip(maps)
        .map(|(&id, m)| Ok((id, seg_uncertainty_score(m, threshold)? as f64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(top_k(scored, k))
}

/// Bottom `k` by discriminator score: the samples the critic rates worst.
pub fn select_d_score(bundle: &PredictionBundle, k: usize) -> Result<Ranking> {
    let scores = bundle
        .disc_scores
        .as_ref()
        .ok_or(Error::MissingField(BundleField::DiscScores))?;
    check_k(k, bundle.indices.len())?;
    if let Some(r) = scores.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::ScoreOutOfRange { row: r, score: scores[r] });
    }
    Ok(bottom_k(bundle.indices.iter().copied().zip(scores.iter().copied()).collect(), k))
}
