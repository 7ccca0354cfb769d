//! Experiment configuration, the active-learning cycle and result summaries.

pub mod config;
pub mod cycle;
pub mod experiment;
pub mod init;
pub mod learner;
pub mod preset;
pub mod summary;

pub use config::{load_data, DataSource, DatasetConfig, ExperimentConfig, LearnerConfig, LoadedData};
pub use cycle::{run_cycle, run_trial, Experiment, TrialLog, TrialState};
pub use experiment::{
    plot_data_dir, read_records, run_config, run_experiment, summarize_dir, write_outputs,
    BuiltinFactory, ExperimentOutput, LearnerFactory, RunOverrides,
};
pub use learner::{BuiltinLearner, Learner, Split, TrainJob};
pub use preset::{Arm, LearnerMode, ProtocolPreset, PRESET_NAMES};
pub use summary::{summarize, Summary};
