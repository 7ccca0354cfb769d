use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::preset::{LearnerMode, ProtocolPreset};
use crate::annotation::{Regime, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::learners::{EnsembleConfig, LossHeadConfig, ModelSpec, SslConfig, TrainConfig};
use crate::model::{BudgetUnit, Dataset};
use crate::strategies::{StrategySpec, DEFAULT_ENTROPY_THRESHOLD};
use crate::{io, synthetic};

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
    ImageDir {
        path: PathBuf,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
    TwoMoons {
        n: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Blobs {
        n: usize,
        classes: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default = "default_std")]
        std: f64,
        #[serde(default)]
        seed: u64,
    },
    BlobImages {
        n: usize,
        width: usize,
        height: usize,
        classes: u8,
        #[serde(default)]
        seed: u64,
    },
}

fn default_noise() -> f64 {
    0.1
}
fn default_dim() -> usize {
    2
}
fn default_spread() -> f64 {
    3.0
}
fn default_std() -> f64 {
    1.0
}
fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(flatten)]
    pub source: DataSource,
    /// Held-out share when no separate test file is given.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub num_classes: Option<usize>,
    #[serde(default)]
    pub void_id: Option<u8>,
}

/// Overrides on top of a built-in preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresetConfig {
    pub name: String,
    pub unit: Option<BudgetUnit>,
    pub initial: Option<u64>,
    pub per_cycle: Option<u64>,
    pub cycles: Option<usize>,
    pub trials: Option<usize>,
    pub ensemble_trials: Option<usize>,
    pub mode: Option<LearnerMode>,
    pub regime: Option<Regime>,
    pub ssl_baseline: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    Builtin {
        #[serde(default = "default_model")]
        model: ModelSpec,
        #[serde(default)]
        train: TrainConfig,
        #[serde(default)]
        ensemble: EnsembleConfig,
        #[serde(default)]
        loss_head: LossHeadConfig,
    },
    Adapter {
        command: Vec<String>,
        /// Seconds; unbounded when absent.
        #[serde(default)]
        train_timeout: Option<u64>,
        #[serde(default = "default_predict_timeout")]
        predict_timeout: u64,
        /// Forwarded verbatim in every train request.
        #[serde(default)]
        options: serde_json::Value,
    },
}

fn default_model() -> ModelSpec {
    ModelSpec::Mlp { hidden: [32, 32] }
}

fn default_predict_timeout() -> u64 {
    300
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig::Builtin {
            model: default_model(),
            train: TrainConfig::default(),
            ensemble: EnsembleConfig::default(),
            loss_head: LossHeadConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    /// RDP tolerance in pixels.
    pub tolerance: f64,
    /// Entropy threshold for choosing polygons in the polygon regime.
    pub threshold: f64,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            tolerance: DEFAULT_TOLERANCE,
            threshold: DEFAULT_ENTROPY_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("albench-out"),
        }
    }
}

/// A complete experiment description, read from TOML or JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub preset: PresetConfig,
    /// Replaces the preset roster when present.
    #[serde(default)]
    pub roster: Option<Vec<StrategySpec>>,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub ssl: SslConfig,
    #[serde(default)]
    pub annotation: AnnotationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory relative paths are resolved against; set by [`Self::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Parses JSON when the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    /// The built-in preset with every override applied, validated.
    pub fn preset(&self) -> Result<ProtocolPreset> {
        let o = &self.preset;
        let mut p = ProtocolPreset::builtin(&o.name)?;
        if let Some(u) = o.unit {
            p.budget.unit = u;
        }
        if let Some(v) = o.initial {
            p.budget.initial = v;
        }
        if let Some(v) = o.per_cycle {
            p.budget.per_cycle = v;
        }
        if let Some(v) = o.cycles {
            p.budget.cycles = v;
        }
        if let Some(v) = o.trials {
            p.trials = v;
        }
        if let Some(v) = o.ensemble_trials {
            p.ensemble_trials = v;
        }
        if let Some(v) = o.mode {
            p.mode = v;
        }
        if let Some(v) = o.regime {
            p.regime = v;
        }
        if let Some(v) = o.ssl_baseline {
            p.ssl_baseline = v;
        }
        if let Some(r) = &self.roster {
            p.roster = r.clone();
        }
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<ProtocolPreset> {
        let preset = self.preset()?;
        self.ssl.validate()?;
        if !(self.annotation.tolerance >= 0.0 && self.annotation.tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance {} must be non-negative",
                self.annotation.tolerance
            )));
        }
        if !(0.0..1.0).contains(&self.dataset.test_fraction) {
            return Err(Error::Config(format!(
                "test_fraction {} outside [0, 1)",
                self.dataset.test_fraction
            )));
        }
        match &self.learner {
            LearnerConfig::Builtin { train, loss_head, .. } => {
                train.validate()?;
                if !(loss_head.margin > 0.0) {
                    return Err(Error::Config("loss head margin must be positive".into()));
                }
            }
            LearnerConfig::Adapter { command, .. } => {
                if command.is_empty() {
                    return Err(Error::Config("adapter command is empty".into()));
                }
            }
        }
        Ok(preset)
    }
}

/// Pool and held-out test split of a dataset, with the file index of every
/// local sample so external learners can find them.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub pool: Dataset,
    pub test: Dataset,
    pub pool_index: Vec<usize>,
    pub test_index: Vec<usize>,
    pub path: Option<PathBuf>,
    /// Set when the test split lives in its own file.
    pub test_path: Option<PathBuf>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let d = &cfg.dataset;
    let (full, path, test) = match &d.source {
        DataSource::Csv { path, test_path } => {
            let p = cfg.resolve(path);
            let test = test_path
                .as_ref()
                .map(|t| {
                    let t = cfg.resolve(t);
                    io::load_csv(&t, d.num_classes).map(|ds| (ds, t))
                })
                .transpose()?;
            (io::load_csv(&p, d.num_classes)?, Some(p), test)
        }
        DataSource::ImageDir { path, test_path } => {
            let p = cfg.resolve(path);
            let test = test_path
                .as_ref()
                .map(|t| {
                    let t = cfg.resolve(t);
                    io::load_image_dir(&t, d.num_classes, d.void_id).map(|ds| (ds, t))
                })
                .transpose()?;
            (io::load_image_dir(&p, d.num_classes, d.void_id)?, Some(p), test)
        }
        DataSource::TwoMoons { n, noise, seed } => (synthetic::two_moons(*n, *noise, *seed), None, None),
        DataSource::Blobs {
            n,
            classes,
            dim,
            spread,
            std,
            seed,
        } => (synthetic::blobs(*n, *classes, *dim, *spread, *std, *seed), None, None),
        DataSource::BlobImages {
            n,
            width,
            height,
            classes,
            seed,
        } => (synthetic::blob_images(*n, *width, *height, *classes, *seed), None, None),
    };
    if let Some((test, test_path)) = test {
        if test.num_classes != full.num_classes || test.task != full.task {
            return Err(Error::Config("test split disagrees with the pool on classes or task".into()));
        }
        return Ok(LoadedData {
            pool_index: (0..full.len()).collect(),
            test_index: (0..test.len()).collect(),
            pool: full,
            test,
            path,
            test_path: Some(test_path),
        });
    }
    let (pool_index, test_index) = split_indices(full.len(), d.test_fraction, d.split_seed);
    Ok(LoadedData {
        pool: full.subset(&pool_index),
        test: full.subset(&test_index),
        pool_index,
        test_index,
        path,
        test_path: None,
    })
}

/// Fixed pool/test partition of `0..n`, both sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(seed, &["split"]));
    ids.shuffle(&mut rng);
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut test = ids[..n_test].to_vec();
    let mut pool = ids[n_test..].to_vec();
    test.sort_unstable();
    pool.sort_unstable();
    (pool, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = r#"
seed = 3
[dataset]
kind = "two_moons"
n = 100
test_fraction = 0.25
[preset]
name = "cifar10-low"
initial = 10
per_cycle = 10
cycles = 2
[learner]
kind = "builtin"
model = { kind = "mlp", hidden = [8, 8] }
[learner.train]
epochs = 5
[[roster]]
kind = "entropy"
"#;

    #[test]
    fn toml_and_json_agree() {
        let a = ExperimentConfig::parse(TOML).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = ExperimentConfig::parse(&json).unwrap();
        assert_eq!(a, b);
        let p = a.validate().unwrap();
        assert_eq!(p.budget.total(), 30);
        assert_eq!(p.arms().len(), 2);
    }

    #[test]
    fn split_is_fixed_and_disjoint() {
        let (pool, test) = split_indices(100, 0.25, 0);
        assert_eq!((pool.len(), test.len()), (75, 25));
        assert_eq!(split_indices(100, 0.25, 0), (pool.clone(), test.clone()));
        assert!(pool.iter().all(|i| !test.contains(i)));
        let cfg = ExperimentConfig::parse(TOML).unwrap();
        let data = load_data(&cfg).unwrap();
        assert_eq!(data.pool.len(), 75);
        assert_eq!(data.pool_index, pool);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        let e = ExperimentConfig::parse("seed = \"x\"").unwrap_err();
        assert!(e.is_config());
        let mut c = ExperimentConfig::parse(TOML).unwrap();
        c.preset.name = "nope".into();
        assert!(c.validate().unwrap_err().is_config());
        let mut c = ExperimentConfig::parse(TOML).unwrap();
        c.preset.cycles = Some(0);
        assert!(c.validate().unwrap_err().is_config());
    }
}
