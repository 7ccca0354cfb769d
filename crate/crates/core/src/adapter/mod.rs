//! Line-delimited JSON protocol letting an external process act as the
//! learner, with a client, a reference server over the built-in learners and
//! a compliance checker.

pub mod check;
mod client;
pub mod message;
pub mod server;

pub use check::{check_adapter, CheckReport, StepResult, GOLDEN_TRANSCRIPT};
pub use client::{AdapterClient, AdapterFactory, AdapterLearner, IndexMap};
pub use message::{codes, Kind, Message, PROTOCOL_VERSION};
pub use server::{serve, AdapterServer, ServerOptions};
