//! The protocol every learner speaks with the harness: plan an episode,
//! observe its trajectory, then receive whatever feedback arrives.

use serde::{Deserialize, Serialize};

use crate::delay::FeedbackPacket;
use crate::error::Result;
use crate::mdp::{Dims, Policy, Trajectory};

/// Policies for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodePlan {
    /// What is actually executed (exploration rows already mixed in).
    pub played: Policy,
    /// The learner's own `π^k`, shipped back inside the feedback packet.
    pub snapshot: Policy,
}

impl EpisodePlan {
    pub fn plain(policy: Policy) -> Self {
        Self {
            played: policy.clone(),
            snapshot: policy,
        }
    }
}

/// Coverage and optimism statistics gathered against a known ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationDiagnostics {
    /// Episodes at whose end a confidence set was built.
    pub episodes: usize,
    /// Episodes whose confidence set missed the true kernel.
    pub uncovered_episodes: usize,
    pub first_uncovered: Option<usize>,
    /// Policy evaluations performed.
    pub evaluations: usize,
    /// Evaluations whose confidence set contained the true kernel and whose
    /// optimism could be checked against the true cost.
    pub checked_evaluations: usize,
    /// Checked evaluations with `V^j_1 > V^{π^j}_1 + 1e-10`.
    pub optimism_violations: usize,
    /// Largest `V^j_1 − V^{π^j}_1` among checked evaluations.
    pub max_optimism_gap: Option<f64>,
}

impl EvaluationDiagnostics {
    pub fn covered_every_episode(&self) -> bool {
        self.uncovered_episodes == 0
    }
}

pub trait Learner: Send {
    fn dims(&self) -> Dims;

    /// Called once before episode `k` is executed.
    fn begin_episode(&mut self, k: usize) -> Result<EpisodePlan>;

    /// Called right after episode `k` is executed; the trajectory is only
    /// used when trajectory feedback is not delayed.
    fn end_episode(&mut self, k: usize, trajectory: &Trajectory) -> Result<()>;

    /// Called at the end of every episode with `F^k` (possibly empty).
    fn on_feedback(&mut self, k: usize, packets: &[FeedbackPacket]) -> Result<()>;

    /// A wrapper decided not to feed `packet`; `feed_trajectory` asks the
    /// learner to still absorb its transitions.
    fn on_skipped(&mut self, _packet: &FeedbackPacket, _feed_trajectory: bool) -> Result<()> {
        Ok(())
    }

    /// Packets dropped by skipping so far.
    fn skipped(&self) -> usize {
        0
    }

    /// Current doubling phase (1 when no doubling is involved).
    fn phase(&self) -> usize {
        1
    }

    fn diagnostics(&self) -> Option<EvaluationDiagnostics> {
        None
    }

    /// Debug dump of the internal state.
    fn state_json(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Parameters handed to a learner when a doubling phase starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    pub phase: usize,
    pub learning_rate: f64,
    pub exploration: f64,
    pub skip_threshold: f64,
    /// Optimistic estimate of `K + D` that triggered the phase (`2^e`).
    pub horizon_estimate: usize,
}

/// Learners that can be reset to a fresh uniform policy with new parameters.
pub trait Restartable: Learner {
    fn restart(&mut self, params: &PhaseParams) -> Result<()>;
}

/// Plays one fixed policy forever.
#[derive(Debug, Clone)]
pub struct FixedPolicyLearner {
    policy: Policy,
}

impl FixedPolicyLearner {
    pub fn new(policy: Policy) -> Self {
        Self { policy }
    }
}

impl Learner for FixedPolicyLearner {
    fn dims(&self) -> Dims {
        self.policy.dims()
    }

    fn begin_episode(&mut self, _k: usize) -> Result<EpisodePlan> {
        Ok(EpisodePlan::plain(self.policy.clone()))
    }

    fn end_episode(&mut self, _k: usize, _trajectory: &Trajectory) -> Result<()> {
        Ok(())
    }

    fn on_feedback(&mut self, _k: usize, _packets: &[FeedbackPacket]) -> Result<()> {
        Ok(())
    }
}

impl Restartable for FixedPolicyLearner {
    fn restart(&mut self, _params: &PhaseParams) -> Result<()> {
        Ok(())
    }
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn dims(&self) -> Dims {
        (**self).dims()
    }
    fn begin_episode(&mut self, k: usize) -> Result<EpisodePlan> {
        (**self).begin_episode(k)
    }
    fn end_episode(&mut self, k: usize, trajectory: &Trajectory) -> Result<()> {
        (**self).end_episode(k, trajectory)
    }
    fn on_feedback(&mut self, k: usize, packets: &[FeedbackPacket]) -> Result<()> {
        (**self).on_feedback(k, packets)
    }
    fn on_skipped(&mut self, packet: &FeedbackPacket, feed_trajectory: bool) -> Result<()> {
        (**self).on_skipped(packet, feed_trajectory)
    }
    fn skipped(&self) -> usize {
        (**self).skipped()
    }
    fn phase(&self) -> usize {
        (**self).phase()
    }
    fn diagnostics(&self) -> Option<EvaluationDiagnostics> {
        (**self).diagnostics()
    }
    fn state_json(&self) -> serde_json::Value {
        (**self).state_json()
    }
}

impl<L: Restartable + ?Sized> Restartable for Box<L> {
    fn restart(&mut self, params: &PhaseParams) -> Result<()> {
        (**self).restart(params)
    }
}
