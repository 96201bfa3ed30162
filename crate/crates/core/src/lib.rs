//! Simulation and numerical validation of self-similar fragmentation
//! processes with Poissonian immigration.

// `!(x > 0.0)` rejects NaN together with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod deteq;
pub mod error;
pub mod families;
pub mod fi;
pub mod fragsim;
pub mod lab;
pub mod measure;
pub mod metrics;
pub mod quad;
pub mod seed;
pub mod stats;
pub mod tagged;

pub use error::{LabError, Result};
pub use families::{
    phi_brownian, stationarity_gate, DislocationFamily, DislocationSpec, Existence, GateVerdict, HypothesisFlags,
    ImmigrationFamily, ImmigrationSpec,
};
pub use deteq::{ClosedForm, InitialMeasure, Observable};
pub use fi::{simulate_fi, FiConfig, LookbackPolicy, PointSample, StationarySampler};
pub use fragsim::{Dynamics, ParticleSystem, SimOptions};
pub use lab::{ExperimentKind, LabConfig, Status};
pub use metrics::LipDictionary;
pub use stats::Estimate;
