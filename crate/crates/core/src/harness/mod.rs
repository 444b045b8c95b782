//! Experiment plumbing: configuration, instance generation, the interaction
//! loop, sweeps and reports.

pub mod config;
pub mod costs;
pub mod experiment;
pub mod report;
pub mod sweep;

pub use config::{CostSpec, ExperimentConfig, LearnerSpec, MdpSpec, ResolvedParams, WrapperSpec};
pub use costs::generate_costs;
pub use experiment::{
    build_environment, build_learner, run_experiment, run_with_learner, Environment, EpisodeEvent,
    RegretRecord, RegretRow,
};
pub use report::{emit_report, ReportFormat};
pub use sweep::{sweep, SweepConfig, SweepTable};
