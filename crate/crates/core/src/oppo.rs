//! Delayed OPPO: optimistic evaluation of every arrived episode followed by
//! one exponential-weights improvement step over the whole batch.
//!
//! The policy is kept as cumulative scores `S_h(s,a) = Σ_j Q^j_h(s,a)` and
//! materialized as `softmax(−η S)`, which is the product form of the update
//! without the underflow.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::delay::{CostPayload, FeedbackPacket};
use crate::error::{Error, Result};
use crate::estimation::{
    contains_truth, is_cost_estimator, log_term, optimistic_transition, upper_occupancy,
    ConfidenceSet, TransitionCounts,
};
use crate::learner::{EpisodePlan, EvaluationDiagnostics, Learner, PhaseParams, Restartable};
use crate::mdp::{
    dot, initial_value, occupancy_measure, sample_categorical, Dims, Policy, TabularMdp,
    Trajectory, ValueTables,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    FullInfo,
    Bandit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsMode {
    Known,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OppoConfig {
    pub learning_rate: f64,
    /// `γ`; only read in bandit mode.
    pub exploration: f64,
    pub delta: f64,
    pub feedback: FeedbackMode,
    pub dynamics: DynamicsMode,
    /// Whether trajectories travel with the (delayed) cost feedback.
    pub trajectory_delayed: bool,
    pub explicit_exploration: bool,
    pub d_max_hint: Option<usize>,
    /// Number of episodes `K` entering the confidence log term.
    pub episodes: usize,
    /// Use `δ/9` in the log term, as the union bound over failure events does.
    #[serde(default)]
    pub union_split: bool,
}

impl OppoConfig {
    pub fn new(
        learning_rate: f64,
        feedback: FeedbackMode,
        dynamics: DynamicsMode,
        episodes: usize,
    ) -> Self {
        Self {
            learning_rate,
            exploration: 0.0,
            delta: 0.1,
            feedback,
            dynamics,
            trajectory_delayed: true,
            explicit_exploration: false,
            d_max_hint: None,
            episodes,
            union_split: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.feedback == FeedbackMode::Bandit && !(self.exploration > 0.0) {
            return Err(Error::config("bandit feedback requires exploration γ > 0"));
        }
        if self.exploration < 0.0 {
            return Err(Error::config("exploration γ must be nonnegative"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("confidence δ must lie in (0, 1)"));
        }
        if self.explicit_exploration && self.d_max_hint.is_none() {
            return Err(Error::config("explicit exploration requires d_max_hint"));
        }
        Ok(())
    }

    fn effective_delta(&self) -> f64 {
        if self.union_split {
            self.delta / 9.0
        } else {
            self.delta
        }
    }

    /// `2 d_max ln(HSA/δ)`.
    pub fn exploration_threshold(&self, dims: Dims) -> f64 {
        let d_max = self.d_max_hint.unwrap_or(0) as f64;
        2.0 * d_max * (dims.hsa() as f64 / self.delta).ln()
    }
}

/// Transition model used by one policy evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Dynamics<'a> {
    Known(&'a TabularMdp),
    Optimistic(&'a ConfidenceSet),
}

/// `ĉ^j`: the revealed cost table, or the importance-weighted estimate.
pub fn estimate_cost(
    packet: &FeedbackPacket,
    dynamics: Dynamics<'_>,
    feedback: FeedbackMode,
    gamma: f64,
) -> Result<Vec<f64>> {
    let dims = packet.policy.dims();
    match (feedback, &packet.cost) {
        (FeedbackMode::FullInfo, CostPayload::Full(c)) => Ok(c.values().to_vec()),
        (FeedbackMode::Bandit, CostPayload::Bandit(suffered)) => {
            if suffered.len() != dims.horizon || packet.trajectory.steps.len() != dims.horizon {
                return Err(Error::contract(
                    "bandit payload length differs from the horizon",
                ));
            }
            let initial = packet.trajectory.steps[0].0;
            let upper = match dynamics {
                Dynamics::Known(mdp) => occupancy_measure(mdp, &packet.policy)?.state_marginals(),
                Dynamics::Optimistic(set) => upper_occupancy(set, &packet.policy, initial)?,
            };
            let mut out = vec![0.0; dims.hsa()];
            for (h, &(s, a)) in packet.trajectory.steps.iter().enumerate() {
                out[dims.sa_index(h, s, a)] = is_cost_estimator(
                    suffered[h],
                    true,
                    upper[dims.hs_index(h, s)],
                    packet.policy.get(h, s, a),
                    gamma,
                )?;
            }
            Ok(out)
        }
        _ => Err(Error::contract(format!(
            "packet of episode {} does not match the {feedback:?} regime",
            packet.episode
        ))),
    }
}

/// Backward recursion for `Q^j, V^j` of the packet's policy under `ĉ^j` and
/// the optimistic (or known) kernel. No clipping is applied.
pub fn evaluate_policy_optimistic(
    packet: &FeedbackPacket,
    dynamics: Dynamics<'_>,
    feedback: FeedbackMode,
    gamma: f64,
) -> Result<ValueTables> {
    let cost = estimate_cost(packet, dynamics, feedback, gamma)?;
    optimistic_values(&packet.policy, &cost, dynamics)
}

/// Evaluate `policy` on an arbitrary `(h, s, a)` cost table.
pub fn optimistic_values(
    policy: &Policy,
    cost: &[f64],
    dynamics: Dynamics<'_>,
) -> Result<ValueTables> {
    let d = policy.dims();
    let model_dims = match dynamics {
        Dynamics::Known(mdp) => mdp.dims(),
        Dynamics::Optimistic(set) => set.dims,
    };
    d.check_same(&model_dims, "optimistic evaluation")?;
    if cost.len() != d.hsa() {
        return Err(Error::contract(
            "optimistic evaluation: cost table has wrong length",
        ));
    }
    let mut v = vec![0.0; (d.horizon + 1) * d.states];
    let mut q = vec![0.0; d.hsa()];
    for h in (0..d.horizon).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * d.states);
        let v_next = &tail[..d.states];
        for s in 0..d.states {
            let mut value = 0.0;
            for a in 0..d.actions {
                let i = d.sa_index(h, s, a);
                let backed = match dynamics {
                    Dynamics::Known(mdp) => dot(mdp.row(h, s, a), v_next),
                    Dynamics::Optimistic(set) => {
                        let (p_bar, eps) = set.row(h, s, a);
                        dot(&optimistic_transition(p_bar, eps, v_next), v_next)
                    }
                };
                q[i] = cost[i] + backed;
                value += q[i] * policy.get(h, s, a);
            }
            head[h * d.states + s] = value;
        }
    }
    Ok(ValueTables { dims: d, v, q })
}

/// Per-row `softmax(−η S)` with max-subtraction.
pub fn softmax_policy(dims: Dims, scores: &[f64], eta: f64) -> Policy {
    let mut probs = vec![0.0; dims.hsa()];
    for (row, out) in scores
        .chunks(dims.actions)
        .zip(probs.chunks_mut(dims.actions))
    {
        let best = row.iter().copied().fold(f64::INFINITY, f64::min);
        let mut z = 0.0;
        for (o, &x) in out.iter_mut().zip(row) {
            *o = (-eta * (x - best)).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }
    Policy::from_raw(dims, probs)
}

/// Add the batch of arrived `Q` tables to the cumulative scores and return
/// the new policy. An empty batch leaves the policy as it was.
pub fn improve_policy(
    scores: &mut [f64],
    batch: &[&[f64]],
    eta: f64,
    dims: Dims,
) -> Result<Policy> {
    if scores.len() != dims.hsa() {
        return Err(Error::contract(
            "improve_policy: score table has wrong length",
        ));
    }
    for q in batch {
        if q.len() != dims.hsa() {
            return Err(Error::contract("improve_policy: Q table has wrong length"));
        }
        if let Some(x) = q.iter().find(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite Q entry {x}")));
        }
    }
    for q in batch {
        for (s, x) in scores.iter_mut().zip(q.iter()) {
            *s += x;
        }
    }
    Ok(softmax_policy(dims, scores, eta))
}

#[derive(Debug, Clone)]
struct Oracle {
    mdp: TabularMdp,
    stats: EvaluationDiagnostics,
}

/// Serializable view of the learner, for debugging dumps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OppoState {
    pub config: OppoConfig,
    pub scores: Vec<f64>,
    pub policy: Policy,
    pub explored_episodes: Vec<usize>,
    pub counts: TransitionCounts,
    pub outstanding_snapshots: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct OppoLearner {
    dims: Dims,
    cfg: OppoConfig,
    log_term: f64,
    known: Option<TabularMdp>,
    scores: Vec<f64>,
    policy: Policy,
    counts: TransitionCounts,
    current_set: Option<ConfidenceSet>,
    snapshots: BTreeMap<usize, ConfidenceSet>,
    explored: BTreeSet<usize>,
    seen: BTreeSet<usize>,
    gate: Vec<bool>,
    gate_touched: bool,
    oracle: Option<Oracle>,
}

impl OppoLearner {
    /// `known` must be the true kernel in known-dynamics mode; otherwise it
    /// only supplies the dimensions and is otherwise ignored.
    pub fn new(dims: Dims, cfg: OppoConfig, known: Option<TabularMdp>) -> Result<Self> {
        cfg.validate()?;
        if cfg.dynamics == DynamicsMode::Known {
            let mdp = known
                .as_ref()
                .ok_or_else(|| Error::config("known-dynamics OPPO needs the transition kernel"))?;
            dims.check_same(&mdp.dims(), "OPPO kernel")?;
        }
        let known = match cfg.dynamics {
            DynamicsMode::Known => known,
            DynamicsMode::Unknown => None,
        };
        let log_term = log_term(dims, cfg.episodes, cfg.effective_delta());
        Ok(Self {
            dims,
            log_term,
            known,
            scores: vec![0.0; dims.hsa()],
            policy: Policy::uniform(dims),
            counts: TransitionCounts::new(dims),
            current_set: None,
            snapshots: BTreeMap::new(),
            explored: BTreeSet::new(),
            seen: BTreeSet::new(),
            gate: vec![false; dims.horizon * dims.states],
            gate_touched: false,
            oracle: None,
            cfg,
        })
    }

    /// Record coverage and optimism statistics against the true kernel.
    pub fn with_oracle(mut self, truth: TabularMdp) -> Self {
        self.oracle = Some(Oracle {
            mdp: truth,
            stats: EvaluationDiagnostics::default(),
        });
        self
    }

    pub fn config(&self) -> &OppoConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn confidence_set(&self) -> Option<&ConfidenceSet> {
        self.current_set.as_ref()
    }

    pub fn explored_episodes(&self) -> &BTreeSet<usize> {
        &self.explored
    }

    pub fn counts(&self) -> &TransitionCounts {
        &self.counts
    }

    fn refresh_gate(&mut self) {
        self.gate_touched = false;
        if !self.cfg.explicit_exploration {
            self.gate.fill(false);
            return;
        }
        let threshold = self.cfg.exploration_threshold(self.dims);
        for h in 0..self.dims.horizon {
            for s in 0..self.dims.states {
                self.gate[self.dims.hs_index(h, s)] =
                    self.counts.state_visits(h, s) as f64 <= threshold;
            }
        }
    }

    fn played_policy(&self) -> Policy {
        if !self.gate.iter().any(|&g| g) {
            return self.policy.clone();
        }
        let mut played = self.policy.clone();
        let uniform = 1.0 / self.dims.actions as f64;
        for h in 0..self.dims.horizon {
            for s in 0..self.dims.states {
                if self.gate[self.dims.hs_index(h, s)] {
                    played.row_mut(h, s).fill(uniform);
                }
            }
        }
        played
    }

    /// Action distribution at `(h, s)` for the episode being played.
    pub fn action_distribution(&self, h: usize, s: usize) -> Vec<f64> {
        if self.gate[self.dims.hs_index(h, s)] {
            vec![1.0 / self.dims.actions as f64; self.dims.actions]
        } else {
            self.policy.row(h, s).to_vec()
        }
    }

    /// Draw the action for step `h` in state `s` of episode `k`.
    ///
    /// Must follow [`Learner::begin_episode`] for the same `k`.
    pub fn act<R: Rng + ?Sized>(&mut self, _k: usize, h: usize, s: usize, rng: &mut R) -> usize {
        if self.gate[self.dims.hs_index(h, s)] {
            self.gate_touched = true;
        }
        sample_categorical(&self.action_distribution(h, s), rng)
    }

    fn evaluation_dynamics<'a>(
        &'a self,
        snapshot: Option<&'a ConfidenceSet>,
        episode: usize,
    ) -> Result<Dynamics<'a>> {
        match (self.cfg.dynamics, self.cfg.feedback) {
            (DynamicsMode::Known, _) => {
                Ok(Dynamics::Known(self.known.as_ref().expect("known kernel")))
            }
            (DynamicsMode::Unknown, FeedbackMode::FullInfo) => Ok(Dynamics::Optimistic(
                self.current_set
                    .as_ref()
                    .expect("confidence set built before evaluation"),
            )),
            (DynamicsMode::Unknown, FeedbackMode::Bandit) => {
                snapshot.map(Dynamics::Optimistic).ok_or_else(|| {
                    Error::contract(format!("missing confidence snapshot for episode {episode}"))
                })
            }
        }
    }

    fn record_evaluation(
        &mut self,
        packet: &FeedbackPacket,
        values: &ValueTables,
        set_contains: bool,
    ) -> Result<()> {
        let Some(oracle) = self.oracle.as_mut() else {
            return Ok(());
        };
        oracle.stats.evaluations += 1;
        let CostPayload::Full(cost) = &packet.cost else {
            return Ok(());
        };
        if !set_contains {
            return Ok(());
        }
        let truth = initial_value(&oracle.mdp, &packet.policy, cost)?;
        let estimate = values.v(0, oracle.mdp.initial_state());
        let gap = estimate - truth;
        let stats = &mut oracle.stats;
        stats.checked_evaluations += 1;
        if gap > 1e-10 {
            stats.optimism_violations += 1;
        }
        stats.max_optimism_gap = Some(stats.max_optimism_gap.map_or(gap, |g: f64| g.max(gap)));
        Ok(())
    }
}

impl Learner for OppoLearner {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn begin_episode(&mut self, _k: usize) -> Result<EpisodePlan> {
        self.refresh_gate();
        Ok(EpisodePlan {
            played: self.played_policy(),
            snapshot: self.policy.clone(),
        })
    }

    fn end_episode(&mut self, k: usize, trajectory: &Trajectory) -> Result<()> {
        if trajectory.steps.len() != self.dims.horizon {
            return Err(Error::contract(
                "trajectory length differs from the horizon",
            ));
        }
        let touched = self.gate_touched
            || trajectory
                .steps
                .iter()
                .enumerate()
                .any(|(h, &(s, _))| self.gate[self.dims.hs_index(h, s)]);
        if touched {
            self.explored.insert(k);
        }
        if !self.cfg.trajectory_delayed {
            self.counts.add_trajectory(trajectory);
        }
        Ok(())
    }

    fn on_feedback(&mut self, k: usize, packets: &[FeedbackPacket]) -> Result<()> {
        for p in packets {
            if !self.seen.insert(p.episode) {
                return Err(Error::contract(format!(
                    "feedback of episode {} replayed",
                    p.episode
                )));
            }
            if p.episode > k {
                return Err(Error::contract(format!(
                    "feedback of episode {} delivered at episode {k}",
                    p.episode
                )));
            }
            if self.cfg.trajectory_delayed {
                self.counts.add_trajectory(&p.trajectory);
            }
        }

        let mut current_contains = true;
        if self.cfg.dynamics == DynamicsMode::Unknown {
            let set = ConfidenceSet::from_counts(&self.counts, self.log_term);
            if let Some(oracle) = self.oracle.as_mut() {
                current_contains = contains_truth(&set, &oracle.mdp);
                oracle.stats.episodes += 1;
                if !current_contains {
                    oracle.stats.uncovered_episodes += 1;
                    oracle.stats.first_uncovered.get_or_insert(k);
                }
            }
            if self.cfg.feedback == FeedbackMode::Bandit {
                self.snapshots.insert(k, set.clone());
            }
            self.current_set = Some(set);
        }

        let mut q_tables = Vec::with_capacity(packets.len());
        for p in packets {
            let snapshot = self.snapshots.remove(&p.episode);
            if self.explored.contains(&p.episode) {
                continue;
            }
            let dynamics = self.evaluation_dynamics(snapshot.as_ref(), p.episode)?;
            let values =
                evaluate_policy_optimistic(p, dynamics, self.cfg.feedback, self.cfg.exploration)?;
            let contains = match (&self.oracle, dynamics) {
                (Some(o), Dynamics::Optimistic(set)) => {
                    if std::ptr::eq(set, self.current_set.as_ref().unwrap()) {
                        current_contains
                    } else {
                        contains_truth(set, &o.mdp)
                    }
                }
                _ => true,
            };
            self.record_evaluation(p, &values, contains)?;
            q_tables.push(values.q);
        }
        if !q_tables.is_empty() {
            let batch: Vec<&[f64]> = q_tables.iter().map(Vec::as_slice).collect();
            self.policy =
                improve_policy(&mut self.scores, &batch, self.cfg.learning_rate, self.dims)?;
        }
        Ok(())
    }

    fn on_skipped(&mut self, packet: &FeedbackPacket, feed_trajectory: bool) -> Result<()> {
        if !self.seen.insert(packet.episode) {
            return Err(Error::contract(format!(
                "feedback of episode {} replayed",
                packet.episode
            )));
        }
        self.snapshots.remove(&packet.episode);
        if feed_trajectory && self.cfg.trajectory_delayed {
            self.counts.add_trajectory(&packet.trajectory);
        }
        Ok(())
    }

    fn diagnostics(&self) -> Option<EvaluationDiagnostics> {
        self.oracle.as_ref().map(|o| o.stats.clone())
    }

    fn state_json(&self) -> serde_json::Value {
        let state = OppoState {
            config: self.cfg.clone(),
            scores: self.scores.clone(),
            policy: self.policy.clone(),
            explored_episodes: self.explored.iter().copied().collect(),
            counts: self.counts.clone(),
            outstanding_snapshots: self.snapshots.keys().copied().collect(),
        };
        serde_json::to_value(state).unwrap_or(serde_json::Value::Null)
    }
}

impl Restartable for OppoLearner {
    /// Fresh uniform policy with the phase's `η, γ`. Transition statistics
    /// (and outstanding snapshots) survive the restart.
    fn restart(&mut self, params: &PhaseParams) -> Result<()> {
        self.cfg.learning_rate = params.learning_rate;
        if self.cfg.feedback == FeedbackMode::Bandit {
            self.cfg.exploration = params.exploration;
        }
        self.cfg.episodes = params.horizon_estimate.max(1);
        self.cfg.validate()?;
        self.log_term = log_term(self.dims, self.cfg.episodes, self.cfg.effective_delta());
        self.scores.fill(0.0);
        self.policy = Policy::uniform(self.dims);
        Ok(())
    }
}
