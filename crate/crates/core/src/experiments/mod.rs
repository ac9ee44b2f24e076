//! Replicated studies. Each takes a serde-configurable settings struct and a
//! master seed and returns a [`StudyReport`] of cells, fits and verdicts.
//!
//! Every random draw comes from a stream keyed by the master seed, a replica
//! index and a purpose tag, and parallel results are reduced in index order,
//! so a report is a pure function of its settings and seed.

mod branching;
mod convergence;
mod init;
mod kac_checks;
mod nonchaotic;
mod recurrence;
mod relaxation;
mod report;

pub use branching::{
    branching_study, environment_from_trajectory, representation_study, BranchingConfig, RepresentationConfig,
};
pub use convergence::{
    baseline_study, convergence_study, uniform_time_study, BaselineConfig, ConvergenceConfig, DistanceEstimator,
    ReferenceEnsemble,
};
pub use init::{
    chaotic_init, concentration_function, equilibrium_sample, nonchaotic_init, sample_iid, sphere_design, InitialLaw,
};
pub use kac_checks::{
    conservation_study, generator_study, moment_study, tanh_test_function, ConservationConfig, GeneratorConfig,
    MomentConfig,
};
pub use nonchaotic::{nonchaotic_study, NonchaoticConfig};
pub use recurrence::{recurrence_study, RecurrenceConfig};
pub use relaxation::{
    chaos_diagnostic, relaxation_panel, relaxation_study, ChaosConfig, RelaxationConfig, StartingPoint,
};
pub use report::{Cell, Fit, StudyReport, Verdict};
