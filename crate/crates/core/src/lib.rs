//! Online learning in episodic adversarial MDPs when cost and trajectory
//! feedback arrive with delay.

pub mod delay;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod learner;
pub mod mdp;
pub mod oppo;
pub mod oreps;
pub mod wrappers;

pub use delay::{CostPayload, DelaySchedule, FeedbackBuffer, FeedbackPacket, ScheduleKind};
pub use error::{Error, Result};
pub use learner::{EpisodePlan, EvaluationDiagnostics, Learner, PhaseParams, Restartable};
pub use mdp::{
    CostFunction, CostSequence, Dims, OccupancyMeasure, Policy, TabularMdp, Trajectory, ValueTables,
};
pub use oppo::{DynamicsMode, FeedbackMode, OppoConfig, OppoLearner};
pub use oreps::OrepsLearner;
pub use wrappers::{BlackBoxReduction, DoublingWrapper, SkipWrapper};
