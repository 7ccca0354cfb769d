use serde::{Deserialize, Serialize};

use crate::annotation::Regime;
use crate::error::{Error, Result};
use crate::model::{Budget, BudgetUnit};
use crate::strategies::{StrategyKind, StrategySpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerMode {
    #[default]
    Supervised,
    Ssl,
}

impl LearnerMode {
    pub fn id(self) -> &'static str {
        match self {
            LearnerMode::Supervised => "supervised",
            LearnerMode::Ssl => "ssl",
        }
    }
}

/// One roster entry: a strategy trained under a learner mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub id: String,
    pub strategy: StrategySpec,
    pub mode: LearnerMode,
}

/// Budget, trial counts and roster of a benchmark protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPreset {
    pub name: String,
    pub budget: Budget,
    pub trials: usize,
    /// Trials for ensemble strategies.
    pub ensemble_trials: usize,
    pub roster: Vec<StrategySpec>,
    pub mode: LearnerMode,
    pub regime: Regime,
    /// Adds a random arm trained with the consistency objective next to a
    /// supervised roster, so active learning faces a semi-supervised
    /// baseline on the same labels.
    #[serde(default)]
    pub ssl_baseline: bool,
}

pub const PRESET_NAMES: [&str; 4] = ["cifar-large", "cifar10-low", "cifar100-low", "seg-clicks"];

fn roster(kinds: &[StrategyKind]) -> Vec<StrategySpec> {
    kinds.iter().map(|&k| StrategySpec::new(k)).collect()
}

impl ProtocolPreset {
    pub fn builtin(name: &str) -> Result<Self> {
        use StrategyKind::*;
        let samples = |initial, per_cycle, cycles| Budget {
            unit: BudgetUnit::Samples,
            initial,
            per_cycle,
            cycles,
        };
        let classification = roster(&[Random, Entropy, EnsVarr, Coreset, LearnLoss]);
        let preset = match name {
            "cifar-large" => ProtocolPreset {
                name: name.into(),
                budget: samples(5000, 2500, 6),
                trials: 3,
                ensemble_trials: 2,
                roster: classification,
                mode: LearnerMode::Supervised,
                regime: Regime::Image,
                ssl_baseline: true,
            },
            "cifar10-low" | "cifar100-low" => {
                let b = if name == "cifar10-low" { 250 } else { 500 };
                ProtocolPreset {
                    name: name.into(),
                    budget: samples(b, b, 7),
                    trials: 3,
                    ensemble_trials: 2,
                    roster: classification,
                    mode: LearnerMode::Ssl,
                    regime: Regime::Image,
                    ssl_baseline: false,
                }
            }
            "seg-clicks" => ProtocolPreset {
                name: name.into(),
                budget: Budget {
                    unit: BudgetUnit::Clicks,
                    initial: 5000,
                    per_cycle: 5000,
                    cycles: 5,
                },
                trials: 3,
                ensemble_trials: 2,
                roster: roster(&[Random, SegEntropy, EnsEnt, Coreset]),
                mode: LearnerMode::Supervised,
                regime: Regime::Image,
                ssl_baseline: false,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (known: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(preset)
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        if self.trials == 0 || self.ensemble_trials == 0 {
            return Err(Error::Config("trial counts must be positive".into()));
        }
        if self.roster.is_empty() {
            return Err(Error::Config("roster is empty".into()));
        }
        if self.regime == Regime::Polygon && self.budget.unit != BudgetUnit::Clicks {
            return Err(Error::Config("polygon regime needs a click budget".into()));
        }
        let mut ids: Vec<&str> = self.roster.iter().map(StrategySpec::id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("strategy `{}` listed twice", w[0])));
        }
        Ok(())
    }

    /// Roster with `random` guaranteed first, plus the semi-supervised
    /// baseline arm when enabled.
    pub fn arms(&self) -> Vec<Arm> {
        let mut specs = self.roster.clone();
        if let Some(pos) = specs.iter().position(|s| s.kind == StrategyKind::Random) {
            let r = specs.remove(pos);
            specs.insert(0, r);
        } else {
            specs.insert(0, StrategySpec::new(StrategyKind::Random));
        }
        let mut arms: Vec<Arm> = specs
            .into_iter()
            .map(|s| Arm {
                id: s.id().to_string(),
                strategy: s,
                mode: self.mode,
            })
            .collect();
        if self.ssl_baseline && self.mode == LearnerMode::Supervised {
            arms.push(Arm {
                id: "ssl_random".into(),
                strategy: StrategySpec::new(StrategyKind::Random),
                mode: LearnerMode::Ssl,
            });
        }
        arms
    }

    pub fn trials_for(&self, strategy: &StrategySpec) -> usize {
        if strategy.kind.is_ensemble() {
            self.ensemble_trials
        } else {
            self.trials
        }
    }

    /// Labeled-set sizes after each cycle of a sample-denominated budget
    /// when the pool never runs dry.
    pub fn labeled_schedule(&self) -> Vec<u64> {
        (0..=self.budget.cycles).map(|c| self.budget.allowance(c)).collect()
    }
}
