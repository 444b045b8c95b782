//! Learner combinators: delay skipping, the doubling trick and the
//! round-robin reduction to non-delayed learners.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::delay::FeedbackPacket;
use crate::error::{Error, Result};
use crate::learner::{EpisodePlan, EvaluationDiagnostics, Learner, PhaseParams, Restartable};
use crate::mdp::{Dims, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipDecision {
    Keep,
    Drop,
}

pub fn skip_filter(delay: usize, beta: f64) -> SkipDecision {
    if delay as f64 <= beta {
        SkipDecision::Keep
    } else {
        SkipDecision::Drop
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkipConfig {
    pub threshold: f64,
}

impl SkipConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::config(format!(
                "skip threshold must be positive, got {threshold}"
            )));
        }
        Ok(Self { threshold })
    }

    /// `β = √(D / (S H))`; a zero total delay yields `β = 1`.
    pub fn from_total_delay(total_delay: usize, dims: Dims) -> Self {
        let beta = (total_delay as f64 / (dims.states * dims.horizon) as f64).sqrt();
        Self {
            threshold: if beta > 0.0 { beta } else { 1.0 },
        }
    }
}

/// Feeds only packets with `d^j ≤ β` to the wrapped learner.
#[derive(Debug, Clone)]
pub struct SkipWrapper<L> {
    inner: L,
    cfg: SkipConfig,
    feed_trajectories: bool,
    skipped: usize,
}

impl<L: Learner> SkipWrapper<L> {
    pub fn new(inner: L, cfg: SkipConfig) -> Self {
        Self {
            inner,
            cfg,
            feed_trajectories: false,
            skipped: 0,
        }
    }

    /// Let skipped packets still contribute their transitions.
    pub fn feed_skipped_trajectories(mut self, on: bool) -> Self {
        self.feed_trajectories = on;
        self
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }

    pub fn threshold(&self) -> f64 {
        self.cfg.threshold
    }
}

impl<L: Learner> Learner for SkipWrapper<L> {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }

    fn begin_episode(&mut self, k: usize) -> Result<EpisodePlan> {
        self.inner.begin_episode(k)
    }

    fn end_episode(&mut self, k: usize, trajectory: &Trajectory) -> Result<()> {
        self.inner.end_episode(k, trajectory)
    }

    fn on_feedback(&mut self, k: usize, packets: &[FeedbackPacket]) -> Result<()> {
        let mut kept = Vec::with_capacity(packets.len());
        for p in packets {
            match skip_filter(p.delay, self.cfg.threshold) {
                SkipDecision::Keep => kept.push(p.clone()),
                SkipDecision::Drop => {
                    self.skipped += 1;
                    self.inner.on_skipped(p, self.feed_trajectories)?;
                }
            }
        }
        self.inner.on_feedback(k, &kept)
    }

    fn on_skipped(&mut self, packet: &FeedbackPacket, feed_trajectory: bool) -> Result<()> {
        self.inner.on_skipped(packet, feed_trajectory)
    }

    fn skipped(&self) -> usize {
        self.skipped + self.inner.skipped()
    }

    fn phase(&self) -> usize {
        self.inner.phase()
    }

    fn diagnostics(&self) -> Option<EvaluationDiagnostics> {
        self.inner.diagnostics()
    }

    fn state_json(&self) -> serde_json::Value {
        serde_json::json!({
            "skip_threshold": self.cfg.threshold,
            "skipped": self.skipped,
            "inner": self.inner.state_json(),
        })
    }
}

/// How phase parameters scale with the phase index `e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoublingRates {
    /// `η_e = H⁻¹ 2^{−2e/3}`, `γ_e = 2^{−e/3}`, `β_e = 2^{e/2}`.
    #[default]
    Bandit,
    /// `η_e = H⁻¹ 2^{−e/2}`, `γ_e = 0`, `β_e = 2^{e/2}`.
    FullInfo,
}

impl DoublingRates {
    pub fn params(self, phase: usize, horizon: usize) -> PhaseParams {
        let e = phase as f64;
        let h = horizon as f64;
        let (learning_rate, exploration) = match self {
            DoublingRates::Bandit => (2f64.powf(-2.0 * e / 3.0) / h, 2f64.powf(-e / 3.0)),
            DoublingRates::FullInfo => (2f64.powf(-e / 2.0) / h, 0.0),
        };
        PhaseParams {
            phase,
            learning_rate,
            exploration,
            skip_threshold: 2f64.powf(e / 2.0),
            horizon_estimate: 1usize << phase.min(62),
        }
    }
}

/// Tracks `k + Σ_{j≤k} M^j` from arrivals alone and signals phase changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingController {
    phase: usize,
    executed: usize,
    arrived: usize,
    missing_sum: usize,
    restarts: Vec<usize>,
}

impl Default for DoublingController {
    fn default() -> Self {
        Self::new()
    }
}

impl DoublingController {
    pub fn new() -> Self {
        Self {
            phase: 1,
            executed: 0,
            arrived: 0,
            missing_sum: 0,
            restarts: Vec::new(),
        }
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn estimate(&self) -> usize {
        self.executed + self.missing_sum
    }

    pub fn missing_sum(&self) -> usize {
        self.missing_sum
    }

    /// Episodes at whose end a restart fired.
    pub fn restarts(&self) -> &[usize] {
        &self.restarts
    }

    /// Account for the end of episode `k` with `arrived` packets delivered.
    /// Returns the new phase index when a restart fires.
    pub fn observe(&mut self, k: usize, arrived: usize) -> Result<Option<usize>> {
        if k != self.executed + 1 {
            return Err(Error::contract(format!(
                "doubling controller expected episode {}, got {k}",
                self.executed + 1
            )));
        }
        self.executed = k;
        self.arrived += arrived;
        if self.arrived > self.executed {
            return Err(Error::contract("more arrivals than executed episodes"));
        }
        self.missing_sum += self.executed - self.arrived;
        let threshold = 1usize.checked_shl(self.phase as u32).unwrap_or(usize::MAX);
        if self.estimate() > threshold {
            while self.estimate() > (1usize.checked_shl(self.phase as u32).unwrap_or(usize::MAX)) {
                self.phase += 1;
            }
            self.restarts.push(k);
            return Ok(Some(self.phase));
        }
        Ok(None)
    }
}

/// Restarts the wrapped learner whenever the running estimate of `K + D`
/// doubles and, optionally, skips packets with `d^j > β_e`.
///
/// Feedback of episodes played in an earlier phase is withheld from the
/// learner's policy update; its trajectory is still offered as transition
/// data.
#[derive(Debug, Clone)]
pub struct DoublingWrapper<L> {
    inner: L,
    rates: DoublingRates,
    skipping: bool,
    controller: DoublingController,
    params: PhaseParams,
    phase_start: usize,
    skipped: usize,
    stale: usize,
}

impl<L: Restartable> DoublingWrapper<L> {
    pub fn new(mut inner: L, rates: DoublingRates, skipping: bool) -> Result<Self> {
        let params = rates.params(1, inner.dims().horizon);
        inner.restart(&params)?;
        Ok(Self {
            inner,
            rates,
            skipping,
            controller: DoublingController::new(),
            params,
            phase_start: 1,
            skipped: 0,
            stale: 0,
        })
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }

    pub fn controller(&self) -> &DoublingController {
        &self.controller
    }

    pub fn params(&self) -> &PhaseParams {
        &self.params
    }

    /// Packets from earlier phases that arrived after a restart.
    pub fn stale(&self) -> usize {
        self.stale
    }
}

impl<L: Restartable> Learner for DoublingWrapper<L> {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }

    fn begin_episode(&mut self, k: usize) -> Result<EpisodePlan> {
        self.inner.begin_episode(k)
    }

    fn end_episode(&mut self, k: usize, trajectory: &Trajectory) -> Result<()> {
        self.inner.end_episode(k, trajectory)
    }

    fn on_feedback(&mut self, k: usize, packets: &[FeedbackPacket]) -> Result<()> {
        let mut kept = Vec::with_capacity(packets.len());
        for p in packets {
            if p.episode < self.phase_start {
                self.stale += 1;
                self.inner.on_skipped(p, true)?;
            } else if self.skipping
                && skip_filter(p.delay, self.params.skip_threshold) == SkipDecision::Drop
            {
                self.skipped += 1;
                self.inner.on_skipped(p, false)?;
            } else {
                kept.push(p.clone());
            }
        }
        self.inner.on_feedback(k, &kept)?;
        if let Some(phase) = self.controller.observe(k, packets.len())? {
            self.params = self.rates.params(phase, self.inner.dims().horizon);
            self.inner.restart(&self.params)?;
            self.phase_start = k + 1;
        }
        Ok(())
    }

    fn on_skipped(&mut self, packet: &FeedbackPacket, feed_trajectory: bool) -> Result<()> {
        self.inner.on_skipped(packet, feed_trajectory)
    }

    fn skipped(&self) -> usize {
        self.skipped + self.inner.skipped()
    }

    fn phase(&self) -> usize {
        self.controller.phase()
    }

    fn diagnostics(&self) -> Option<EvaluationDiagnostics> {
        self.inner.diagnostics()
    }

    fn state_json(&self) -> serde_json::Value {
        serde_json::json!({
            "controller": self.controller,
            "params": self.params,
            "skipped": self.skipped,
            "stale": self.stale,
            "inner": self.inner.state_json(),
        })
    }
}

/// `d_max + 1` independent non-delayed learners played round-robin.
///
/// Instance `k mod (d_max+1)` plays global episode `k`; each instance sees
/// its own episodes renumbered `1, 2, …` with zero delay.
pub struct BlackBoxReduction<L> {
    instances: Vec<L>,
    played: Vec<usize>,
    fed: Vec<usize>,
    /// Global episode → (instance, local episode).
    owners: BTreeMap<usize, (usize, usize)>,
}

impl<L: Learner> BlackBoxReduction<L> {
    pub fn new<F>(d_max: usize, mut factory: F) -> Result<Self>
    where
        F: FnMut(usize) -> Result<L>,
    {
        let n = d_max + 1;
        let instances = (0..n).map(&mut factory).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            instances,
            played: vec![0; n],
            fed: vec![0; n],
            owners: BTreeMap::new(),
        })
    }

    pub fn instance_of(&self, k: usize) -> usize {
        k % self.instances.len()
    }

    pub fn instances(&self) -> &[L] {
        &self.instances
    }

    /// Episodes each instance has played so far.
    pub fn played_counts(&self) -> &[usize] {
        &self.played
    }
}

impl<L: Learner> Learner for BlackBoxReduction<L> {
    fn dims(&self) -> Dims {
        self.instances[0].dims()
    }

    fn begin_episode(&mut self, k: usize) -> Result<EpisodePlan> {
        let i = self.instance_of(k);
        if self.fed[i] != self.played[i] {
            return Err(Error::contract(format!(
                "instance {i} reused at episode {k} before its feedback arrived"
            )));
        }
        let local = self.played[i] + 1;
        self.owners.insert(k, (i, local));
        self.instances[i].begin_episode(local)
    }

    fn end_episode(&mut self, k: usize, trajectory: &Trajectory) -> Result<()> {
        let i = self.instance_of(k);
        self.played[i] += 1;
        self.instances[i].end_episode(self.played[i], trajectory)
    }

    fn on_feedback(&mut self, _k: usize, packets: &[FeedbackPacket]) -> Result<()> {
        for p in packets {
            let (i, local) = self.owners.remove(&p.episode).ok_or_else(|| {
                Error::contract(format!("no owner for feedback of episode {}", p.episode))
            })?;
            if local != self.played[i] {
                return Err(Error::contract(format!(
                    "instance {i} got feedback for local episode {local} while at {}",
                    self.played[i]
                )));
            }
            let mut routed = p.clone();
            routed.episode = local;
            routed.delay = 0;
            self.instances[i].on_feedback(local, std::slice::from_ref(&routed))?;
            self.fed[i] = local;
        }
        Ok(())
    }

    fn diagnostics(&self) -> Option<EvaluationDiagnostics> {
        let mut merged: Option<EvaluationDiagnostics> = None;
        for d in self.instances.iter().filter_map(Learner::diagnostics) {
            let m = merged.get_or_insert_with(EvaluationDiagnostics::default);
            m.episodes += d.episodes;
            m.uncovered_episodes += d.uncovered_episodes;
            m.first_uncovered = match (m.first_uncovered, d.first_uncovered) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            m.evaluations += d.evaluations;
            m.checked_evaluations += d.checked_evaluations;
            m.optimism_violations += d.optimism_violations;
            m.max_optimism_gap = match (m.max_optimism_gap, d.max_optimism_gap) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            };
        }
        merged
    }

    fn state_json(&self) -> serde_json::Value {
        serde_json::json!({
            "played": self.played,
            "instances": self.instances.iter().map(Learner::state_json).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::{make_schedule, missing_count, ScheduleKind};
    use crate::learner::FixedPolicyLearner;
    use crate::mdp::Policy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn skip_examples() {
        assert_eq!(skip_filter(5, 3.0), SkipDecision::Drop);
        assert_eq!(skip_filter(0, 1e-9), SkipDecision::Keep);
        assert_eq!(skip_filter(3, 3.0), SkipDecision::Keep);
        assert!(SkipConfig::new(0.0).is_err());
    }

    #[test]
    fn skip_count_is_bounded_by_total_delay_over_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let s =
                make_schedule(&ScheduleKind::UniformRandom { d_hi: 40 }, 300, &mut rng).unwrap();
            let beta = (s.total() as f64).sqrt();
            let dropped = s
                .delays()
                .iter()
                .filter(|&&d| skip_filter(d, beta) == SkipDecision::Drop)
                .count();
            assert!(dropped as f64 <= s.total() as f64 / beta);
            assert!(dropped as f64 <= beta);
        }
    }

    #[test]
    fn phase_parameters() {
        let p = DoublingRates::Bandit.params(3, 4);
        assert!((p.learning_rate - 0.25 / 4.0).abs() < 1e-15);
        assert!((p.exploration - 0.5).abs() < 1e-15);
        assert!((p.skip_threshold - 2.828_427_124_746_19).abs() < 1e-12);
        assert_eq!(p.horizon_estimate, 8);
    }

    #[test]
    fn zero_delay_restarts() {
        let mut c = DoublingController::new();
        for k in 1..=40 {
            c.observe(k, 1).unwrap();
        }
        assert_eq!(c.restarts(), &[3, 5, 9, 17, 33]);
        assert_eq!(c.phase(), 6);
        assert!(c.observe(42, 0).is_err());
    }

    #[test]
    fn missing_sum_matches_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = make_schedule(&ScheduleKind::UniformRandom { d_hi: 10 }, 80, &mut rng).unwrap();
        let mut c = DoublingController::new();
        let mut sum = 0;
        for k in 1..=80 {
            c.observe(k, crate::delay::arrivals(&s, k).len()).unwrap();
            sum += missing_count(&s, k);
            assert_eq!(c.missing_sum(), sum);
        }
        assert!(sum <= s.total());
        let bound = ((80 + s.total()) as f64).log2().ceil() as usize + 1;
        assert!(c.phase() <= bound);
    }

    #[test]
    fn round_robin_assignment() {
        let dims = Dims::new(2, 2, 2).unwrap();
        let r = BlackBoxReduction::new(2, |_| Ok(FixedPolicyLearner::new(Policy::uniform(dims))))
            .unwrap();
        let owners: Vec<usize> = (1..=6).map(|k| r.instance_of(k)).collect();
        assert_eq!(owners, vec![1, 2, 0, 1, 2, 0]);
        let single =
            BlackBoxReduction::new(0, |_| Ok(FixedPolicyLearner::new(Policy::uniform(dims))))
                .unwrap();
        assert!((1..10).all(|k| single.instance_of(k) == 0));
    }
}
