//! Simulation of distributed SGD with compressed communication.
//!
//! Workers hold quadratic local objectives and send compressed stochastic
//! gradients to a master. The crate provides the compression operators
//! (unbiased, contractive, and the induced combination of both), client
//! samplings for partial participation, the optimizer variants with their
//! stepsize schedules and guarantees, and an experiment harness.

pub mod compressors;
pub mod error;
pub mod harness;
pub mod induced;
pub mod optimizer;
pub mod problems;
pub mod rng;
pub mod sampling;
pub mod vector;

pub use compressors::{CompressedMessage, CompressorClass, CompressorSpec};
pub use error::{Error, Result};
pub use induced::{induced_delta, InducedCompressor};
pub use optimizer::{run, Mode, RunConfig, RunRecord, Schedule};
pub use problems::{ProblemConstants, ProblemInstance};
pub use sampling::{SamplingFamily, SamplingScheme};
pub use vector::DenseVector;
