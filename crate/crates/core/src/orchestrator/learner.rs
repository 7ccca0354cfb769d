use std::sync::Arc;

use super::preset::{Arm, LearnerMode};
use crate::annotation::{paint, LabelMask, PolygonSet};
use crate::error::{Error, Result};
use crate::learners::{
    classification_rows, fit, segmentation_rows, train_ensemble, EnsembleConfig, FitOptions,
    Fitted, unlabeled_inputs, LossHeadConfig, ModelSpec, SslConfig, TrainConfig,
};
use crate::model::{BundleField, Dataset, PredictionBundle, SampleId, Task};
use crate::strategies::StrategyKind;

/// Which split indices refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Pool,
    Test,
}

/// Everything a learner needs to train for one cycle.
#[derive(Clone, Debug)]
pub struct TrainJob {
    pub labeled: Vec<SampleId>,
    /// Segmentation: annotated polygons of every labeled or partially
    /// labeled image. Pixels outside all polygons are ignored.
    pub polygons: Vec<(SampleId, PolygonSet)>,
    pub unlabeled: Vec<SampleId>,
    pub mode: LearnerMode,
    /// Member count when the strategy needs an ensemble.
    pub ensemble: Option<usize>,
    pub loss_head: bool,
    pub seed: u64,
}

/// What a strategy arm asks of the learner.
pub fn training_needs(arm: &Arm) -> (Option<usize>, bool) {
    let ensemble = arm
        .strategy
        .kind
        .is_ensemble()
        .then_some(arm.strategy.ensemble_size);
    (ensemble, arm.strategy.kind == StrategyKind::LearnLoss)
}

/// A model the orchestrator can train, query and evaluate. Indices are
/// local to the split.
pub trait Learner: Send {
    fn id(&self) -> String;

    /// Bundle fields available after training for `arm`.
    fn fields(&self, arm: &Arm) -> Vec<BundleField>;

    fn train(&mut self, job: &TrainJob) -> Result<()>;

    fn predict(
        &mut self,
        split: Split,
        indices: &[SampleId],
        fields: &[BundleField],
    ) -> Result<PredictionBundle>;

    /// Predicted segmentation masks for test images.
    fn predict_masks(&mut self, indices: &[SampleId]) -> Result<Vec<LabelMask>>;
}

/// The in-process learner built on [`crate::learners`].
pub struct BuiltinLearner {
    pool: Arc<Dataset>,
    test: Arc<Dataset>,
    model: ModelSpec,
    train: TrainConfig,
    ensemble: EnsembleConfig,
    head: LossHeadConfig,
    ssl: SslConfig,
    fitted: Option<Fitted>,
}

impl BuiltinLearner {
    pub fn new(
        pool: Arc<Dataset>,
        test: Arc<Dataset>,
        model: ModelSpec,
        train: TrainConfig,
        ensemble: EnsembleConfig,
        head: LossHeadConfig,
        ssl: SslConfig,
    ) -> Self {
        BuiltinLearner {
            pool,
            test,
            model,
            train,
            ensemble,
            head,
            ssl,
            fitted: None,
        }
    }

    fn fitted(&self) -> Result<&Fitted> {
        self.fitted
            .as_ref()
            .ok_or_else(|| Error::InvalidParam("learner has not been trained".into()))
    }

    fn split(&self, split: Split) -> &Dataset {
        match split {
            Split::Pool => &self.pool,
            Split::Test => &self.test,
        }
    }
}

/// Pixel labels of one image from its polygons.
pub fn polygon_labels(dataset: &Dataset, index: SampleId, polygons: &PolygonSet) -> Result<Vec<Option<u8>>> {
    let img = dataset.image(index).ok_or(Error::IndexOutOfRange {
        index,
        len: dataset.len(),
    })?;
    let mut buf = vec![None; img.width * img.height];
    paint(polygons, img.width, img.height, &mut buf)?;
    Ok(buf)
}

impl Learner for BuiltinLearner {
    fn id(&self) -> String {
        self.model.name()
    }

    fn fields(&self, arm: &Arm) -> Vec<BundleField> {
        let (ensemble, head) = training_needs(arm);
        match self.pool.task {
            Task::Classification => {
                let mut f = vec![BundleField::Probs, BundleField::Features];
                if head {
                    f.push(BundleField::PredLoss);
                }
                if ensemble.is_some() {
                    f.push(BundleField::EnsembleVotes);
                }
                f
            }
            Task::Segmentation => vec![BundleField::Features, BundleField::EntropyMaps],
        }
    }

    fn train(&mut self, job: &TrainJob) -> Result<()> {
        let pool = &*self.pool;
        let rows = match pool.task {
            Task::Classification => classification_rows(pool, &job.labeled)?,
            Task::Segmentation => {
                let labels = job
                    .polygons
                    .iter()
                    .map(|(i, p)| Ok((*i, polygon_labels(pool, *i, p)?)))
                    .collect::<Result<Vec<_>>>()?;
                segmentation_rows(pool, &labels)?
            }
        };
        if rows.is_empty() {
            return Err(Error::EmptyLabeledSet);
        }
        let unlabeled = if job.mode == LearnerMode::Ssl {
            unlabeled_inputs(pool, &job.unlabeled)?
        } else {
            Vec::new()
        };
        let mut train = self.train.clone();
        train.seed = job.seed;
        let opts = FitOptions {
            train,
            ssl: (job.mode == LearnerMode::Ssl).then(|| self.ssl.clone()),
            loss_head: job.loss_head.then(|| self.head.clone()),
        };
        let members = match job.ensemble {
            Some(size) => {
                let mut ens = self.ensemble.clone();
                if ens.size != size {
                    ens.size = size;
                    ens.seeds.clear();
                }
                train_ensemble(&self.model, pool.num_classes, &rows, &unlabeled, &opts, &ens)?
            }
            None => vec![fit(&self.model, pool.num_classes, &rows, &unlabeled, &opts)?],
        };
        self.fitted = Some(Fitted {
            members,
            task: pool.task,
        });
        Ok(())
    }

    fn predict(
        &mut self,
        split: Split,
        indices: &[SampleId],
        fields: &[BundleField],
    ) -> Result<PredictionBundle> {
        self.fitted()?.predict_bundle(self.split(split), indices, fields)
    }

    fn predict_masks(&mut self, indices: &[SampleId]) -> Result<Vec<LabelMask>> {
        let fitted = self.fitted()?;
        indices
            .iter()
            .map(|&i| fitted.predict_mask(&self.test, i))
            .collect()
    }
}
