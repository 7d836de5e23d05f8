//! Stochastic push-pull gradient tracking over time-varying directed graphs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithm;
pub mod analysis;
pub mod error;
pub mod graph;
pub mod harness;
pub mod objective;
pub mod rng;
pub mod weights;

pub use algorithm::{Algorithm, AlgState, InitialPoint, RunConfig, Trace, TraceRecord};
pub use error::{Error, Result};
pub use graph::{DiGraph, GraphSchedule, ScheduleKind};
pub use harness::{ExperimentConfig, ExperimentResult};
pub use objective::{AgentEnsemble, LocalObjective, LogisticLocal, NoiseModel, QuadraticLocal};
pub use rng::SeedStreams;
pub use nalgebra;
pub use weights::{Stochasticity, WeightMatrix, WeightPair};
