//! Design-time performance estimation for services described as state
//! machines whose transitions carry branch probabilities and delay laws.
//!
//! The pipeline: [`parse_model`] reads the XML encoding, [`validate`] checks
//! it, [`simulate`] runs seeded Monte-Carlo replications,
//! [`expected_moments`] gives the exact mean and variance to compare against,
//! [`calibrate`] rescales delays to a measured mean, and [`codegen`] turns the
//! model into a simulation script.

pub mod analytics;
pub mod cli;
pub mod codegen;
pub mod model;
pub mod model_io;
pub mod report;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod validate;

#[cfg(test)]
pub(crate) mod testing;

pub use analytics::{
    calibrate, calibration_factor, enumerate_paths, expected_moments, response_moments,
    AnalysisError, MomentReport, PathEnumeration,
};
pub use model::{
    distribution_moments, DelayDistribution, Overheads, StateId, StsModel, Transition,
};
pub use model_io::{parse_model, serialize_model, ParseError};
pub use rng::RngStream;
pub use sim::{simulate, simulate_run, Measure, RunRecord, SimError, SimulationConfig};
pub use stats::{summarize, SimulationSummary};
pub use validate::{validate, ValidationReport};
