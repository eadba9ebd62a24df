//! Mean response time analysis of multiserver-job FCFS queues.
//!
//! The crate builds the saturated / simplified-saturated Markov chains of an
//! MSJ workload, solves the associated linear systems (stationary
//! distribution, stability threshold, departure distribution, relative
//! completions), turns them into a dominant-term response time prediction,
//! and validates the prediction against a discrete-event simulator.

pub mod chain;
pub mod cli;
pub mod closed_form;
pub mod error;
pub mod marc;
pub mod rng;
pub mod sim;
pub mod workload;

pub use chain::{build_saturated_chain, build_sss_chain, LabeledCtmc, DEFAULT_STATE_CAP};
pub use error::{Error, Result};
pub use marc::{analyze, predict, MarcSolution, PredictionCurve};
pub use workload::{exponential_class, load_spec, WorkloadSpec};
