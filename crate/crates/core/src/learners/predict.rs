use rayon::prelude::*;

use super::data::{image_of, image_patches, input_vector};
use super::net::{argmax, softmax, Network};
use crate::annotation::{ConfusionMatrix, LabelMask};
use crate::error::{Error, Result};
use crate::model::{BundleField, Dataset, PredictionBundle, SampleId, Task};
use crate::strategies::{ensemble_entropy_map, pixel_entropy_map};

/// A trained model, or an ensemble of them. Member 0 reports metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct Fitted {
    pub members: Vec<Network>,
    pub task: Task,
}

impl Fitted {
    pub fn single(net: Network, task: Task) -> Self {
        Fitted {
            members: vec![net],
            task,
        }
    }

    pub fn reporting(&self) -> &Network {
        &self.members[0]
    }

    /// Bundle fields this model can fill.
    pub fn capabilities(&self) -> Vec<BundleField> {
        let mut out = Vec::new();
        match self.task {
            Task::Classification => {
                out.push(BundleField::Probs);
                out.push(BundleField::Features);
                if self.reporting().has_head() {
                    out.push(BundleField::PredLoss);
                }
                if self.members.len() > 1 {
                    out.push(BundleField::EnsembleVotes);
                }
            }
            Task::Segmentation => {
                out.push(BundleField::Features);
                out.push(BundleField::EntropyMaps);
            }
        }
        out
    }

    /// Predictions for `indices` with exactly the requested fields.
    pub fn predict_bundle(
        &self,
        dataset: &Dataset,
        indices: &[SampleId],
        fields: &[BundleField],
    ) -> Result<PredictionBundle> {
        let caps = self.capabilities();
        if let Some(f) = fields.iter().find(|f| !caps.contains(f)) {
            return Err(Error::MissingField(*f));
        }
        let mut bundle = PredictionBundle::new(indices.to_vec());
        let want = |f| fields.contains(&f);
        match self.task {
            Task::Classification => {
                let inputs = indices
                    .iter()
                    .map(|&i| input_vector(dataset, i))
                    .collect::<Result<Vec<_>>>()?;
                let net = self.reporting();
                let traces: Vec<_> = inputs.par_iter().map(|x| net.forward(x)).collect();
                if want(BundleField::Probs) {
                    bundle.probs = Some(traces.iter().map(|t| softmax(t.logits())).collect());
                }
                if want(BundleField::Features) {
                    bundle.features = Some(traces.iter().map(|t| t.features().to_vec()).collect());
                }
                if want(BundleField::PredLoss) {
                    bundle.pred_loss =
                        Some(traces.iter().map(|t| t.head.unwrap_or(0.0)).collect());
                }
                if want(BundleField::EnsembleVotes) {
                    bundle.ensemble_votes = Some(
                        inputs
                            .par_iter()
                            .map(|x| self.members.iter().map(|m| argmax(&m.probs(x))).collect())
                            .collect(),
                    );
                }
            }
            Task::Segmentation => {
                let rows = indices
                    .par_iter()
                    .map(|&i| self.segment_outputs(dataset, i, fields))
                    .collect::<Result<Vec<_>>>()?;
                if want(BundleField::Features) {
                    bundle.features = Some(rows.iter().map(|r| r.0.clone().unwrap_or_default()).collect());
                }
                if want(BundleField::EntropyMaps) {
                    bundle.entropy_maps =
                        Some(rows.into_iter().map(|r| r.1.unwrap_or_default()).collect());
                }
            }
        }
        Ok(bundle)
    }

    /// Mean-pooled features and the (ensemble) entropy map of one image.
    fn segment_outputs(
        &self,
        dataset: &Dataset,
        index: SampleId,
        fields: &[BundleField],
    ) -> Result<(Option<Vec<f64>>, Option<crate::model::Raster>)> {
        let img = image_of(dataset, index)?;
        let patches = image_patches(img);
        let net = self.reporting();
        let features = fields.contains(&BundleField::Features).then(|| {
            let mut acc = vec![0.0; net.feature_dim()];
            for p in &patches {
                let t = net.forward(p);
                for (a, f) in acc.iter_mut().zip(t.features()) {
                    *a += f;
                }
            }
            let n = patches.len().max(1) as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        });
        let map = if fields.contains(&BundleField::EntropyMaps) {
            let member_probs: Vec<Vec<Vec<f64>>> = self
                .members
                .iter()
                .map(|m| patches.iter().map(|p| m.probs(p)).collect())
                .collect();
            Some(if member_probs.len() == 1 {
                pixel_entropy_map(&member_probs[0], img.width, img.height)?
            } else {
                ensemble_entropy_map(&member_probs, img.width, img.height)?
            })
        } else {
            None
        };
        Ok((features, map))
    }

    /// Top-1 accuracy of the reporting model.
    pub fn accuracy(&self, dataset: &Dataset, indices: &[SampleId]) -> Result<f64> {
        if indices.is_empty() {
            return Ok(0.0);
        }
        let net = self.reporting();
        let correct = indices
            .par_iter()
            .map(|&i| {
                let class = dataset.class_of(i).ok_or(Error::IndexOutOfRange {
                    index: i,
                    len: dataset.len(),
                })?;
                Ok((argmax(&net.probs(&input_vector(dataset, i)?)) == class) as usize)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        Ok(correct as f64 / indices.len() as f64)
    }

    /// Argmax segmentation of one image by the reporting model.
    pub fn predict_mask(&self, dataset: &Dataset, index: SampleId) -> Result<LabelMask> {
        let img = image_of(dataset, index)?;
        let net = self.reporting();
        let pixels = image_patches(img)
            .iter()
            .map(|p| argmax(&net.probs(p)) as u8)
            .collect();
        let void = dataset.mask_of(index).and_then(|m| m.void_id);
        Ok(LabelMask::new(img.width, img.height, pixels, void))
    }

    /// Confusion counts of predicted masks against `gts[k]` for `indices[k]`.
    pub fn confusion(
        &self,
        dataset: &Dataset,
        indices: &[SampleId],
        gts: &[&LabelMask],
    ) -> Result<ConfusionMatrix> {
        if indices.len() != gts.len() {
            return Err(Error::SizeMismatch(format!(
                "{} images against {} masks",
                indices.len(),
                gts.len()
            )));
        }
        let parts = indices
            .par_iter()
            .zip(gts.par_iter())
            .map(|(&i, gt)| {
                let mut cm = ConfusionMatrix::new(dataset.num_classes);
                cm.accumulate(&self.predict_mask(dataset, i)?, gt)?;
                Ok(cm)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = ConfusionMatrix::new(dataset.num_classes);
        for p in &parts {
            total.merge(p);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::ModelSpec;
    use crate::model::{Sample, Target};

    fn tiny() -> Dataset {
        Dataset {
            items: vec![Sample::Vector(vec![1.0, 0.0]), Sample::Vector(vec![0.0, 1.0])],
            targets: vec![Target::Class(0), Target::Class(1)],
            num_classes: 2,
            task: Task::Classification,
        }
    }

    #[test]
    fn bundle_has_only_requested_fields() {
        let f = Fitted::single(ModelSpec::Logistic.build(2, 2, false, 1), Task::Classification);
        let b = f.predict_bundle(&tiny(), &[1, 0], &[BundleField::Probs]).unwrap();
        assert_eq!(b.fields(), vec![BundleField::Probs]);
        b.validate(Some(2)).unwrap();
        assert!(matches!(
            f.predict_bundle(&tiny(), &[0], &[BundleField::PredLoss]),
            Err(Error::MissingField(BundleField::PredLoss))
        ));
    }

    #[test]
    fn ensemble_votes_have_one_column_per_member() {
        let members = (0..3).map(|s| ModelSpec::Logistic.build(2, 2, false, s)).collect();
        let f = Fitted {
            members,
            task: Task::Classification,
        };
        let b = f.predict_bundle(&tiny(), &[0, 1], &[BundleField::EnsembleVotes]).unwrap();
        assert!(b.ensemble_votes.unwrap().iter().all(|v| v.len() == 3));
    }
}
