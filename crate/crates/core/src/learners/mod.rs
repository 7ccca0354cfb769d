//! Built-in desk-scale learners: multinomial logistic regression, a
//! two-hidden-layer ReLU MLP and a per-pixel network for toy segmentation
//! rasters. All train with mini-batch SGD with momentum, weight decay and a
//! cosine or constant learning-rate schedule, optionally with a
//! consistency-regularization term on unlabeled inputs and a pairwise
//! ranking loss head.

mod checkpoint;
mod data;
mod net;
pub mod objective;
mod predict;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use data::{classification_rows, patch_features, segmentation_rows, Rows, PATCH_SIDE};
pub use net::{argmax, log_softmax, softmax, ModelKind, ModelSpec, Network, Trace};
pub use predict::Fitted;
pub use train::{
    fit, train_ensemble, train_loss_head, train_ssl, train_supervised, unlabeled_inputs, FitOptions,
    Perturbation,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Cosine,
    Constant,
}

/// Optimizer and loop settings. Defaults are SGD with base rate 3e-2,
/// momentum 0.9, weight decay 5e-4 and a cosine schedule over 150 epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Stop after this many optimizer steps instead of counting epochs.
    pub max_steps: Option<usize>,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 3e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 150,
            max_steps: None,
            batch_labeled: 64,
            batch_unlabeled: 320,
            schedule: Schedule::Cosine,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr {} must be positive", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight_decay {} must be non-negative",
                self.weight_decay
            )));
        }
        if self.batch_labeled == 0 {
            return Err(Error::Config("batch_labeled must be positive".into()));
        }
        Ok(())
    }
}

/// Consistency regularization: the sharpened prediction on a clean input is
/// the target for the prediction on a perturbed copy; inputs whose top class
/// probability is below `confidence_mask` are skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SslConfig {
    pub confidence_mask: f64,
    pub temperature: f64,
    pub unlabeled_weight: f64,
    pub perturbation: Perturbation,
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig {
            confidence_mask: 0.6,
            temperature: 0.5,
            unlabeled_weight: 1.0,
            perturbation: Perturbation::GaussianNoise { sigma: 0.1 },
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_mask > 0.0 && self.confidence_mask < 1.0) {
            return Err(Error::Config(format!(
                "confidence_mask {} outside (0, 1)",
                self.confidence_mask
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if !(self.unlabeled_weight >= 0.0) {
            return Err(Error::Config("unlabeled_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub size: usize,
    /// Explicit member seeds; derived from the training seed when empty.
    pub seeds: Vec<u64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            size: 5,
            seeds: Vec::new(),
        }
    }
}

impl EnsembleConfig {
    pub fn member_seeds(&self, base: u64) -> Result<Vec<u64>> {
        if self.size < 2 {
            return Err(Error::Config(format!(
                "ensemble size {} must be at least 2",
                self.size
            )));
        }
        let seeds: Vec<u64> = if self.seeds.is_empty() {
            (0..self.size as u64)
                .map(|m| crate::seed::derive(base, &["member", &m.to_string()]))
                .collect()
        } else {
            if self.seeds.len() != self.size {
                return Err(Error::Config(format!(
                    "{} member seeds for an ensemble of {}",
                    self.seeds.len(),
                    self.size
                )));
            }
            self.seeds.clone()
        };
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateSeed(w[0]));
        }
        Ok(seeds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossHeadConfig {
    pub margin: f64,
    /// Weight of the ranking loss relative to cross-entropy.
    pub weight: f64,
}

impl Default for LossHeadConfig {
    fn default() -> Self {
        LossHeadConfig {
            margin: 1.0,
            weight: 1.0,
        }
    }
}

/// `base_lr * (1 + cos(pi * step / total)) / 2`.
pub fn cosine_lr(step: usize, total: usize, base_lr: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::InvalidParam("cosine schedule needs total steps > 0".into()));
    }
    if step > total {
        return Err(Error::InvalidParam(format!("step {step} beyond total {total}")));
    }
    let t = step as f64 / total as f64;
    Ok(base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_points() {
        assert_eq!(cosine_lr(0, 100, 3e-2).unwrap(), 3e-2);
        assert!((cosine_lr(50, 100, 3e-2).unwrap() - 1.5e-2).abs() < 1e-15);
        assert!(cosine_lr(100, 100, 3e-2).unwrap().abs() < 1e-15);
        assert!(cosine_lr(0, 0, 1.0).is_err());
    }

    #[test]
    fn cosine_is_non_increasing() {
        let total = 997;
        let mut prev = f64::INFINITY;
        for t in 0..=total {
            let lr = cosine_lr(t, total, 0.1).unwrap();
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn defaults_follow_reference_setup() {
        let c = TrainConfig::default();
        assert_eq!((c.base_lr, c.momentum, c.weight_decay, c.epochs), (3e-2, 0.9, 5e-4, 150));
        let s = SslConfig::default();
        assert_eq!((s.confidence_mask, s.temperature), (0.6, 0.5));
        assert_eq!(EnsembleConfig::default().size, 5);
    }

    #[test]
    fn duplicate_member_seeds_rejected() {
        let e = EnsembleConfig {
            size: 3,
            seeds: vec![1, 2, 1],
        };
        assert!(matches!(e.member_seeds(0), Err(Error::DuplicateSeed(1))));
        let d = EnsembleConfig::default().member_seeds(42).unwrap();
        assert_eq!(d.len(), 5);
    }
}
