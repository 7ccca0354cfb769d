//! Pool-based active-learning benchmarking: query strategies, built-in
//! learners, simulated polygon annotation and a cycle orchestrator.

pub mod adapter;
pub mod annotation;
pub mod error;
pub mod io;
pub mod learners;
pub mod model;
pub mod orchestrator;
pub mod seed;
pub mod strategies;
pub mod synthetic;

pub use error::{Error, Result};
