use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{classification_rows, segmentation_rows, Rows};
use super::net::{ModelSpec, Network};
use super::objective;
use super::{cosine_lr, EnsembleConfig, LossHeadConfig, Schedule, SslConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{Dataset, SampleId, Target, Task};

/// Input perturbation for the consistency term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    GaussianNoise { sigma: f64 },
    InputDropout { rate: f64 },
}

impl Perturbation {
    fn apply(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            Perturbation::GaussianNoise { sigma } => {
                let normal = Normal::new(0.0, sigma.max(0.0)).expect("sigma is finite");
                x.iter().map(|v| v + normal.sample(rng)).collect()
            }
            Perturbation::InputDropout { rate } => x
                .iter()
                .map(|&v| if rng.random::<f64>() < rate { 0.0 } else { v })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitOptions {
    pub train: TrainConfig,
    pub ssl: Option<SslConfig>,
    pub loss_head: Option<LossHeadConfig>,
}

/// The training loop shared by every built-in learner.
///
/// Minimizes mean cross-entropy on `labeled` plus, when configured, the
/// weighted consistency term on `unlabeled` and the weighted ranking hinge of
/// the loss head, with SGD + momentum + weight decay. Identical inputs give
/// bit-identical parameters.
pub fn fit(
    spec: &ModelSpec,
    num_classes: usize,
    labeled: &Rows,
    unlabeled: &[Vec<f64>],
    opts: &FitOptions,
) -> Result<Network> {
    let cfg = &opts.train;
    cfg.validate()?;
    if let Some(ssl) = &opts.ssl {
        ssl.validate()?;
    }
    let input_dim = labeled.input_dim().ok_or(Error::EmptyLabeledSet)?;
    let mut net = spec.build(
        input_dim,
        num_classes,
        opts.loss_head.is_some(),
        crate::seed::derive(cfg.seed, &["init"]),
    );
    if let Some(&c) = labeled.targets.iter().find(|&&c| c >= num_classes) {
        return Err(Error::InvalidParam(format!("target class {c} >= {num_classes}")));
    }
    let present = {
        let mut seen = vec![false; num_classes];
        labeled.targets.iter().for_each(|&c| seen[c] = true);
        seen.iter().filter(|s| **s).count()
    };
    if present < num_classes {
        log::warn!(
            "labeled set covers {present} of {num_classes} classes; training anyway"
        );
    }

    let n = labeled.len();
    let batch = cfg.batch_labeled.clamp(1, n);
    let steps_per_epoch = n.div_ceil(batch);
    let total = cfg.max_steps.unwrap_or(cfg.epochs * steps_per_epoch);
    if total == 0 {
        return Ok(net);
    }

    let ssl = match &opts.ssl {
        Some(s) if s.unlabeled_weight > 0.0 && unlabeled.is_empty() => {
            log::warn!("no unlabeled samples for the consistency term; training supervised only");
            None
        }
        Some(s) if s.unlabeled_weight > 0.0 && cfg.batch_unlabeled > 0 => Some(s),
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(cfg.seed, &["loop"]));
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut u_order: Vec<usize> = (0..unlabeled.len()).collect();
    let mut u_cursor = unlabeled.len();
    let mut velocity = vec![0.0; net.param_count()];
    let mut skipped_odd = false;

    for step in 0..total {
        if cursor >= n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + batch).min(n);
        let idx = &order[cursor..end];
        cursor = end;
        let xs: Vec<&[f64]> = idx.iter().map(|&i| labeled.inputs[i].as_slice()).collect();
        let ys: Vec<usize> = idx.iter().map(|&i| labeled.targets[i]).collect();

        let (_, mut grad) = objective::cross_entropy(&net, &xs, &ys);

        if let Some(head) = &opts.loss_head {
            let losses = objective::sample_losses(&net, &xs, &ys);
            let mut pos: Vec<usize> = (0..xs.len()).collect();
            pos.shuffle(&mut rng);
            if pos.len() % 2 == 1 {
                skipped_odd = true;
            }
            let pairs: Vec<(usize, usize)> = pos.chunks_exact(2).map(|c| (c[0], c[1])).collect();
            let (_, g) = objective::ranking(&net, &xs, &losses, &pairs, head.margin);
            axpy(head.weight, &g, &mut grad);
        }

        if let Some(s) = ssl {
            let bu = cfg.batch_unlabeled.min(unlabeled.len());
            let mut ub: Vec<&[f64]> = Vec::with_capacity(bu);
            for _ in 0..bu {
                if u_cursor >= unlabeled.len() {
                    u_order.shuffle(&mut rng);
                    u_cursor = 0;
                }
                ub.push(&unlabeled[u_order[u_cursor]]);
                u_cursor += 1;
            }
            let targets =
                objective::consistency_targets(&net, &ub, s.confidence_mask, s.temperature);
            let perturbed: Vec<Vec<f64>> =
                ub.iter().map(|x| s.perturbation.apply(x, &mut rng)).collect();
            let pref: Vec<&[f64]> = perturbed.iter().map(Vec::as_slice).collect();
            let (_, g) = objective::consistency(&net, &pref, &targets);
            axpy(s.unlabeled_weight, &g, &mut grad);
        }

        let lr = match cfg.schedule {
            Schedule::Cosine => cosine_lr(step, total, cfg.base_lr)?,
            Schedule::Constant => cfg.base_lr,
        };
        sgd_step(net.params_mut(), &mut velocity, &grad, lr, cfg.momentum, cfg.weight_decay);
    }
    if skipped_odd {
        log::debug!("odd minibatch sizes left one sample unpaired for the ranking loss");
    }
    Ok(net)
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Momentum SGD with coupled weight decay: `v = m v + (g + wd p)`, `p -= lr v`.
pub(crate) fn sgd_step(
    params: &mut [f64],
    velocity: &mut [f64],
    grad: &[f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        let g = g + weight_decay * *p;
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// Labeled rows for a dataset: class targets, or ground-truth mask pixels
/// (void excluded) for segmentation.
fn dataset_rows(dataset: &Dataset, labeled: &[SampleId]) -> Result<Rows> {
    match dataset.task {
        Task::Classification => classification_rows(dataset, labeled),
        Task::Segmentation => {
            let labels = labeled
                .iter()
                .map(|&i| match dataset.targets.get(i) {
                    Some(Target::Mask(m)) => Ok((
                        i,
                        m.pixels
                            .iter()
                            .map(|&p| (!m.is_void(p)).then_some(p))
                            .collect(),
                    )),
                    _ => Err(Error::IndexOutOfRange {
                        index: i,
                        len: dataset.len(),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            segmentation_rows(dataset, &labels)
        }
    }
}

/// Inputs for the consistency term: sample vectors, or every pixel patch
/// of the given images.
pub fn unlabeled_inputs(dataset: &Dataset, unlabeled: &[SampleId]) -> Result<Vec<Vec<f64>>> {
    match dataset.task {
        Task::Classification => unlabeled
            .iter()
            .map(|&i| super::data::input_vector(dataset, i))
            .collect(),
        Task::Segmentation => {
            let mut out = Vec::new();
            for &i in unlabeled {
                out.extend(super::data::image_patches(super::data::image_of(dataset, i)?));
            }
            Ok(out)
        }
    }
}

/// Supervised training on the labeled samples of `dataset`.
pub fn train_supervised(
    dataset: &Dataset,
    labeled: &[SampleId],
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<Network> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let rows = dataset_rows(dataset, labeled)?;
    fit(
        spec,
        dataset.num_classes,
        &rows,
        &[],
        &FitOptions {
            train: cfg.clone(),
            ..Default::default()
        },
    )
}

/// Supervised loss on `labeled` plus the consistency term on `unlabeled`.
pub fn train_ssl(
    dataset: &Dataset,
    labeled: &[SampleId],
    unlabeled: &[SampleId],
    spec: &ModelSpec,
    ssl: &SslConfig,
    cfg: &TrainConfig,
) -> Result<Network> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let rows = dataset_rows(dataset, labeled)?;
    let unl = unlabeled_inputs(dataset, unlabeled)?;
    fit(
        spec,
        dataset.num_classes,
        &rows,
        &unl,
        &FitOptions {
            train: cfg.clone(),
            ssl: Some(ssl.clone()),
            loss_head: None,
        },
    )
}

/// Trains the network jointly with a loss-prediction head.
pub fn train_loss_head(
    dataset: &Dataset,
    labeled: &[SampleId],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    head: &LossHeadConfig,
) -> Result<Network> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    if !(head.margin > 0.0) {
        return Err(Error::Config(format!("ranking margin {} must be positive", head.margin)));
    }
    let rows = dataset_rows(dataset, labeled)?;
    fit(
        spec,
        dataset.num_classes,
        &rows,
        &[],
        &FitOptions {
            train: cfg.clone(),
            ssl: None,
            loss_head: Some(head.clone()),
        },
    )
}

/// Independently seeded members trained on the same rows. Member 0 is the
/// reporting model.
pub fn train_ensemble(
    spec: &ModelSpec,
    num_classes: usize,
    labeled: &Rows,
    unlabeled: &[Vec<f64>],
    opts: &FitOptions,
    ens: &EnsembleConfig,
) -> Result<Vec<Network>> {
    let seeds = ens.member_seeds(opts.train.seed)?;
    seeds
        .par_iter()
        .map(|&seed| {
            let mut o = opts.clone();
            o.train.seed = seed;
            fit(spec, num_classes, labeled, unlabeled, &o)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, seed: u64) -> Rows {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.5).unwrap();
        let mut rows = Rows::default();
        for i in 0..n {
            let c = i % 2;
            let cx = if c == 0 { -2.0 } else { 2.0 };
            rows.inputs.push(vec![cx + normal.sample(&mut rng), normal.sample(&mut rng)]);
            rows.targets.push(c);
        }
        rows
    }

    fn quick(epochs: usize) -> FitOptions {
        FitOptions {
            train: TrainConfig {
                epochs,
                batch_labeled: 16,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let train = blobs(200, 1);
        let test = blobs(200, 2);
        let net = fit(&ModelSpec::Logistic, 2, &train, &[], &quick(20)).unwrap();
        let correct = test
            .inputs
            .iter()
            .zip(&test.targets)
            .filter(|(x, &y)| super::super::argmax(&net.probs(x)) == y)
            .count();
        assert!(correct as f64 / 200.0 >= 0.95);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let rows = blobs(10, 0);
        let spec = ModelSpec::Mlp { hidden: [4, 4] };
        let net = fit(&spec, 2, &rows, &[], &quick(0)).unwrap();
        let init = spec.build(2, 2, false, crate::seed::derive(0, &["init"]));
        assert_eq!(net, init);
    }

    #[test]
    fn training_is_deterministic() {
        let rows = blobs(50, 3);
        let spec = ModelSpec::Mlp { hidden: [8, 8] };
        let a = fit(&spec, 2, &rows, &[], &quick(3)).unwrap();
        let b = fit(&spec, 2, &rows, &[], &quick(3)).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn single_sample_is_memorized() {
        let rows = Rows {
            inputs: vec![vec![0.3, -0.7]],
            targets: vec![1],
        };
        let net = fit(&ModelSpec::Logistic, 3, &rows, &[], &quick(100)).unwrap();
        assert_eq!(super::super::argmax(&net.probs(&rows.inputs[0])), 1);
    }

    #[test]
    fn zero_weight_decay_is_plain_momentum_sgd() {
        let mut p = vec![1.0, -2.0];
        let mut v = vec![0.5, 0.0];
        sgd_step(&mut p, &mut v, &[0.2, 0.4], 0.1, 0.9, 0.0);
        // v = 0.9 v + g ; p -= 0.1 v
        assert_eq!(v, vec![0.9 * 0.5 + 0.2, 0.4]);
        assert_eq!(p, vec![1.0 - 0.1 * (0.9 * 0.5 + 0.2), -2.0 - 0.1 * 0.4]);
    }

    #[test]
    fn empty_labeled_set_is_rejected() {
        let err = fit(&ModelSpec::Logistic, 2, &Rows::default(), &[], &quick(1)).unwrap_err();
        assert!(matches!(err, Error::EmptyLabeledSet));
    }

    #[test]
    fn ssl_without_unlabeled_falls_back_to_supervised() {
        let rows = blobs(20, 4);
        let sup = fit(&ModelSpec::Logistic, 2, &rows, &[], &quick(2)).unwrap();
        let mut opts = quick(2);
        opts.ssl = Some(SslConfig::default());
        let ssl = fit(&ModelSpec::Logistic, 2, &rows, &[], &opts).unwrap();
        assert_eq!(sup.params(), ssl.params());
    }

    #[test]
    fn ensemble_members_differ() {
        let rows = blobs(30, 5);
        let ens = EnsembleConfig {
            size: 2,
            seeds: vec![],
        };
        let members =
            train_ensemble(&ModelSpec::Mlp { hidden: [4, 4] }, 2, &rows, &[], &quick(1), &ens)
                .unwrap();
        assert_eq!(members.len(), 2);
        assert_ne!(members[0].params(), members[1].params());
    }
}
