//! Construction, positivity repair, and propagation of Lindblad-form master
//! equations for few-level systems coupled to structured environments, with
//! an exact pseudomode benchmark for validating the approximations.
//!
//! Everything is deterministic: identical inputs (including RNG seeds)
//! produce bit-identical results regardless of thread count or scheduling.

pub mod bath;
pub mod builder;
pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod exact;
pub mod expm;
pub mod metrics;
pub mod operator;
pub mod propagate;
pub mod rng;
pub mod superop;
pub mod system;

#[cfg(test)]
pub(crate) mod testkit;

pub use bath::{PseudomodeNetwork, SpectralModel};
pub use builder::{
    bre_lindblad_form, build_bre, build_generator, build_prescription, rate_tensors,
    MasterEquation, Mean, MethodKind, MethodTag, Prescription, RateTensors,
};
pub use ensemble::{
    eigenvalue_stats, gen_instance, run_ensemble, EigenvalueStats, EnsembleConfig, EnsembleReport,
};
pub use error::{Error, Result};
pub use exact::{build_exact, exact_trajectory, Backend, ExactOptions, ExactRun};
pub use operator::{C64, CMatrix, CVector};
pub use propagate::{
    exponential_trajectory, integrate, IntegrateOptions, StepperOptions, TimeGrid, Trajectory,
};
pub use superop::Superoperator;
pub use system::{SystemSpec, TransitionTable};
