//! Delay schedules, feedback packets and the bookkeeping of executed versus
//! observed visits.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{CostFunction, Dims, Policy, Trajectory};

/// Oblivious delays `d^1..d^K`, fixed before the interaction starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DelaySchedule {
    delays: Vec<usize>,
}

impl DelaySchedule {
    pub fn new(delays: Vec<usize>) -> Self {
        Self { delays }
    }

    /// Accepts signed input so that negative delays surface as errors rather
    /// than parse failures.
    pub fn from_signed(delays: &[i64]) -> Result<Self> {
        delays
            .iter()
            .map(|&d| usize::try_from(d).map_err(|_| Error::config(format!("negative delay {d}"))))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn episodes(&self) -> usize {
        self.delays.len()
    }

    /// Delay of one-based episode `k`.
    pub fn delay(&self, k: usize) -> usize {
        self.delays[k - 1]
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    /// `D = Σ d^k`.
    pub fn total(&self) -> usize {
        self.delays.iter().sum()
    }

    /// `d_max = max d^k`.
    pub fn max(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    /// Episode at whose end the feedback of `j` arrives, if within the horizon.
    pub fn arrival_of(&self, j: usize) -> Option<usize> {
        let at = j + self.delay(j);
        (at <= self.episodes()).then_some(at)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Fixed {
        d: i64,
    },
    UniformRandom {
        d_hi: i64,
    },
    /// The first episode's feedback never arrives (`d^1 = K`).
    OneMissing,
    AdversarialList {
        delays: Vec<i64>,
    },
}

pub fn make_schedule<R: Rng + ?Sized>(
    kind: &ScheduleKind,
    episodes: usize,
    rng: &mut R,
) -> Result<DelaySchedule> {
    let delays = match kind {
        ScheduleKind::Fixed { d } => {
            let d =
                usize::try_from(*d).map_err(|_| Error::config(format!("negative delay {d}")))?;
            vec![d; episodes]
        }
        ScheduleKind::UniformRandom { d_hi } => {
            let hi = usize::try_from(*d_hi)
                .map_err(|_| Error::config(format!("negative delay bound {d_hi}")))?;
            (0..episodes).map(|_| rng.random_range(0..=hi)).collect()
        }
        ScheduleKind::OneMissing => {
            let mut d = vec![0; episodes];
            if let Some(first) = d.first_mut() {
                *first = episodes;
            }
            d
        }
        ScheduleKind::AdversarialList { delays } => {
            if delays.len() != episodes {
                return Err(Error::config(format!(
                    "delay list has {} entries for K={episodes}",
                    delays.len()
                )));
            }
            return DelaySchedule::from_signed(delays);
        }
    };
    Ok(DelaySchedule::new(delays))
}

/// `F^k = {j : j + d^j = k}` (one-based, ascending).
pub fn arrivals(schedule: &DelaySchedule, k: usize) -> Vec<usize> {
    (1..=k.min(schedule.episodes()))
        .filter(|&j| j + schedule.delay(j) == k)
        .collect()
}

/// `M^k = |{j ≤ k : j + d^j > k}|`.
pub fn missing_count(schedule: &DelaySchedule, k: usize) -> usize {
    (1..=k.min(schedule.episodes()))
        .filter(|&j| j + schedule.delay(j) > k)
        .count()
}

/// What the learner sees about the cost of a delivered episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum CostPayload {
    /// The entire cost table `c^j`.
    Full(CostFunction),
    /// Only the `H` suffered costs along the trajectory.
    Bandit(Vec<f64>),
}

/// Everything revealed about episode `j` when its feedback arrives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPacket {
    pub episode: usize,
    pub delay: usize,
    pub trajectory: Trajectory,
    pub cost: CostPayload,
    /// The learner's policy `π^j` (before any exploration mixing).
    pub policy: Policy,
}

impl FeedbackPacket {
    pub fn arrival(&self) -> usize {
        self.episode + self.delay
    }
}

/// Harness-side counters: `m` (executed visits), `n` (visits whose feedback
/// has been observed) and the packets still in flight.
#[derive(Debug, Clone)]
pub struct FeedbackBuffer {
    dims: Dims,
    pending: BTreeMap<usize, Vec<FeedbackPacket>>,
    executed_visits: Vec<u64>,
    observed_visits: Vec<u64>,
    delivered: Vec<bool>,
    executed: usize,
    observed: usize,
}

impl FeedbackBuffer {
    pub fn new(dims: Dims, episodes: usize) -> Self {
        Self {
            dims,
            pending: BTreeMap::new(),
            executed_visits: vec![0; dims.hsa()],
            observed_visits: vec![0; dims.hsa()],
            delivered: vec![false; episodes + 1],
            executed: 0,
            observed: 0,
        }
    }

    pub fn record_visit(&mut self, trajectory: &Trajectory) {
        for (h, &(s, a)) in trajectory.steps.iter().enumerate() {
            self.executed_visits[self.dims.sa_index(h, s, a)] += 1;
        }
        self.executed += 1;
    }

    pub fn record_observed(&mut self, packet: &FeedbackPacket) -> Result<()> {
        let slot = self
            .delivered
            .get_mut(packet.episode)
            .ok_or_else(|| Error::contract(format!("episode {} out of range", packet.episode)))?;
        if *slot {
            return Err(Error::contract(format!(
                "feedback of episode {} delivered twice",
                packet.episode
            )));
        }
        *slot = true;
        for (h, &(s, a)) in packet.trajectory.steps.iter().enumerate() {
            let i = self.dims.sa_index(h, s, a);
            self.observed_visits[i] += 1;
            if self.observed_visits[i] > self.executed_visits[i] {
                return Err(Error::contract(format!(
                    "observed visits exceed executed visits at cell {i}"
                )));
            }
        }
        self.observed += 1;
        Ok(())
    }

    /// Queue `packet` for delivery at the end of `packet.arrival()`; packets
    /// past `horizon` are dropped.
    pub fn schedule(&mut self, packet: FeedbackPacket, horizon: usize) {
        let at = packet.arrival();
        if at <= horizon {
            self.pending.entry(at).or_default().push(packet);
        }
    }

    /// Hand out `F^k` in ascending episode order and count it as observed.
    pub fn deliver(&mut self, k: usize) -> Result<Vec<FeedbackPacket>> {
        let mut batch = self.pending.remove(&k).unwrap_or_default();
        batch.sort_by_key(|p| p.episode);
        for p in &batch {
            self.record_observed(p)?;
        }
        Ok(batch)
    }

    /// Episodes executed so far whose feedback has not been observed.
    pub fn missing(&self) -> usize {
        self.executed - self.observed
    }

    pub fn executed_visits(&self) -> &[u64] {
        &self.executed_visits
    }

    pub fn observed_visits(&self) -> &[u64] {
        &self.observed_visits
    }

    /// `Σ_{h,s,a} (m − n)`.
    pub fn outstanding_visits(&self) -> u64 {
        self.executed_visits
            .iter()
            .zip(&self.observed_visits)
            .map(|(m, n)| m - n)
            .sum()
    }
}
