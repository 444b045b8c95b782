//! Tabular finite-horizon MDPs and the exact dynamic-programming primitives
//! built on them.
//!
//! All tables are dense and row-major. Steps `h` are zero-based (`0..H`),
//! states and actions likewise; episode indices elsewhere in the crate are
//! one-based. A transition kernel is stored as `(h, s, a, s')`, costs and
//! policies as `(h, s, a)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums of stochastic tables must be within this of 1.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// Sizes shared by every table of one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn new(states: usize, actions: usize, horizon: usize) -> Result<Self> {
        if states == 0 || actions == 0 || horizon == 0 {
            return Err(Error::config(format!(
                "dimensions must be positive (S={states}, A={actions}, H={horizon})"
            )));
        }
        Ok(Self {
            states,
            actions,
            horizon,
        })
    }

    /// Number of `(h, s, a)` cells.
    pub fn hsa(&self) -> usize {
        self.horizon * self.states * self.actions
    }

    /// Number of `(h, s, a, s')` cells.
    pub fn hsas(&self) -> usize {
        self.hsa() * self.states
    }

    #[inline]
    pub fn sa_index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states + s) * self.actions + a
    }

    #[inline]
    pub fn hs_index(&self, h: usize, s: usize) -> usize {
        h * self.states + s
    }

    #[inline]
    pub fn sas_index(&self, h: usize, s: usize, a: usize, next: usize) -> usize {
        self.sa_index(h, s, a) * self.states + next
    }

    pub(crate) fn check_same(&self, other: &Dims, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::contract(format!(
                "{what}: dimension mismatch ({self:?} vs {other:?})"
            )));
        }
        Ok(())
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::contract(format!("{what}: entry {p} outside [0,1]")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::contract(format!("{what}: row sums to {sum}")));
    }
    Ok(())
}

/// The fixed environment: sizes, initial state, and the step-indexed kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    dims: Dims,
    initial_state: usize,
    transitions: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MdpDocument {
    states: usize,
    actions: usize,
    horizon: usize,
    initial_state: usize,
    transitions: Vec<f64>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let dims = Dims::new(doc.states, doc.actions, doc.horizon)?;
        TabularMdp::new(dims, doc.initial_state, doc.transitions)
    }
}

impl From<TabularMdp> for MdpDocument {
    fn from(mdp: TabularMdp) -> Self {
        MdpDocument {
            states: mdp.dims.states,
            actions: mdp.dims.actions,
            horizon: mdp.dims.horizon,
            initial_state: mdp.initial_state,
            transitions: mdp.transitions,
        }
    }
}

impl TabularMdp {
    pub fn new(dims: Dims, initial_state: usize, transitions: Vec<f64>) -> Result<Self> {
        if initial_state >= dims.states {
            return Err(Error::contract(format!(
                "initial state {initial_state} out of range for S={}",
                dims.states
            )));
        }
        if transitions.len() != dims.hsas() {
            return Err(Error::contract(format!(
                "transition table has {} entries, expected {}",
                transitions.len(),
                dims.hsas()
            )));
        }
        for (i, row) in transitions.chunks(dims.states).enumerate() {
            check_distribution(row, &format!("transition row {i}"))?;
        }
        Ok(Self {
            dims,
            initial_state,
            transitions,
        })
    }

    /// Random kernel with Dirichlet(1) rows.
    pub fn random<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> Self {
        let mut transitions = Vec::with_capacity(dims.hsas());
        for _ in 0..dims.hsa() {
            let draws: Vec<f64> = (0..dims.states).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            transitions.extend(draws.iter().map(|x| x / total));
        }
        Self {
            dims,
            initial_state: 0,
            transitions,
        }
    }

    /// Deterministic chain: action 0 advances to `s + 1` (saturating), any
    /// other action falls back to state 0.
    pub fn chain(dims: Dims) -> Self {
        let mut transitions = vec![0.0; dims.hsas()];
        for h in 0..dims.horizon {
            for s in 0..dims.states {
                for a in 0..dims.actions {
                    let next = if a == 0 {
                        (s + 1).min(dims.states - 1)
                    } else {
                        0
                    };
                    transitions[dims.sas_index(h, s, a, next)] = 1.0;
                }
            }
        }
        Self {
            dims,
            initial_state: 0,
            transitions,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// `p_h(· | s, a)`.
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.dims.sas_index(h, s, a, 0);
        &self.transitions[start..start + self.dims.states]
    }

    /// The `(s, a, s')` block of step `h`.
    pub fn layer(&self, h: usize) -> &[f64] {
        let width = self.dims.states * self.dims.actions * self.dims.states;
        &self.transitions[h * width..(h + 1) * width]
    }
}

/// Per-episode cost table `c_h(s, a)` with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    dims: Dims,
    costs: Vec<f64>,
}

impl CostFunction {
    pub fn new(dims: Dims, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != dims.hsa() {
            return Err(Error::contract(format!(
                "cost table has {} entries, expected {}",
                costs.len(),
                dims.hsa()
            )));
        }
        if let Some(c) = costs.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::contract(format!("cost {c} outside [0,1]")));
        }
        Ok(Self { dims, costs })
    }

    pub fn constant(dims: Dims, value: f64) -> Result<Self> {
        Self::new(dims, vec![value; dims.hsa()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.costs
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.costs[self.dims.sa_index(h, s, a)]
    }

    pub fn layer(&self, h: usize) -> &[f64] {
        let width = self.dims.states * self.dims.actions;
        &self.costs[h * width..(h + 1) * width]
    }
}

/// The adversary's full cost sequence, one table per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostDocument", into = "CostDocument")]
pub struct CostSequence {
    dims: Dims,
    episodes: Vec<CostFunction>,
}

#[derive(Serialize, Deserialize)]
struct CostDocument {
    states: usize,
    actions: usize,
    horizon: usize,
    costs: Vec<Vec<f64>>,
}

impl TryFrom<CostDocument> for CostSequence {
    type Error = Error;

    fn try_from(doc: CostDocument) -> Result<Self> {
        let dims = Dims::new(doc.states, doc.actions, doc.horizon)?;
        let episodes = doc
            .costs
            .into_iter()
            .map(|c| CostFunction::new(dims, c))
            .collect::<Result<Vec<_>>>()?;
        CostSequence::new(dims, episodes)
    }
}

impl From<CostSequence> for CostDocument {
    fn from(seq: CostSequence) -> Self {
        CostDocument {
            states: seq.dims.states,
            actions: seq.dims.actions,
            horizon: seq.dims.horizon,
            costs: seq.episodes.into_iter().map(|c| c.costs).collect(),
        }
    }
}

impl CostSequence {
    pub fn new(dims: Dims, episodes: Vec<CostFunction>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::contract(
                "cost sequence must cover at least one episode",
            ));
        }
        for c in &episodes {
            dims.check_same(&c.dims, "cost sequence")?;
        }
        Ok(Self { dims, episodes })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Cost of one-based episode `k`.
    pub fn episode(&self, k: usize) -> &CostFunction {
        &self.episodes[k - 1]
    }

    pub fn as_slice(&self) -> &[CostFunction] {
        &self.episodes
    }

    /// Keep only the first `k` episodes.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        Self::new(
            self.dims,
            self.episodes[..k.min(self.episodes.len())].to_vec(),
        )
    }
}

/// Time-inhomogeneous stochastic policy `π_h(a | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    dims: Dims,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(dims: Dims, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != dims.hsa() {
            return Err(Error::contract(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                dims.hsa()
            )));
        }
        for (i, row) in probs.chunks(dims.actions).enumerate() {
            check_distribution(row, &format!("policy row {i}"))?;
        }
        Ok(Self { dims, probs })
    }

    pub(crate) fn from_raw(dims: Dims, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), dims.hsa());
        Self { dims, probs }
    }

    pub fn uniform(dims: Dims) -> Self {
        Self {
            dims,
            probs: vec![1.0 / dims.actions as f64; dims.hsa()],
        }
    }

    /// Point-mass policy; `choice[h * S + s]` is the action taken.
    pub fn deterministic(dims: Dims, choice: &[usize]) -> Result<Self> {
        if choice.len() != dims.horizon * dims.states {
            return Err(Error::contract(
                "deterministic policy needs one action per (h, s)",
            ));
        }
        let mut probs = vec![0.0; dims.hsa()];
        for (hs, &a) in choice.iter().enumerate() {
            if a >= dims.actions {
                return Err(Error::contract(format!("action {a} out of range")));
            }
            probs[hs * dims.actions + a] = 1.0;
        }
        Ok(Self { dims, probs })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let start = self.dims.sa_index(h, s, 0);
        &self.probs[start..start + self.dims.actions]
    }

    pub(crate) fn row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let start = self.dims.sa_index(h, s, 0);
        &mut self.probs[start..start + self.dims.actions]
    }

    pub fn layer(&self, h: usize) -> &[f64] {
        let width = self.dims.states * self.dims.actions;
        &self.probs[h * width..(h + 1) * width]
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.probs[self.dims.sa_index(h, s, a)]
    }
}

/// `V_h(s)` for `h = 0..=H` (with `V_H ≡ 0`) and `Q_h(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTables {
    pub dims: Dims,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
}

impl ValueTables {
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.dims.states + s]
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[self.dims.sa_index(h, s, a)]
    }

    pub fn q_layer(&self, h: usize) -> &[f64] {
        let width = self.dims.states * self.dims.actions;
        &self.q[h * width..(h + 1) * width]
    }
}

/// One executed episode: the visited `(s_h, a_h)` pairs, the state reached
/// after the last step, and the costs suffered along the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
    pub final_state: usize,
    pub suffered_costs: Vec<f64>,
}

impl Trajectory {
    /// State reached after step `h` (i.e. `s_{h+1}`).
    pub fn next_state(&self, h: usize) -> usize {
        self.steps.get(h + 1).map_or(self.final_state, |&(s, _)| s)
    }

    /// `(h, s, a, s')` tuples in step order.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        self.steps
            .iter()
            .enumerate()
            .map(|(h, &(s, a))| (h, s, a, self.next_state(h)))
    }

    pub fn total_cost(&self) -> f64 {
        self.suffered_costs.iter().sum()
    }
}

/// `q_h(s, a, s') = Pr[s_h = s, a_h = a, s_{h+1} = s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    pub dims: Dims,
    pub q: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn get(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.q[self.dims.sas_index(h, s, a, next)]
    }

    /// `Σ_{s'} q_h(s, a, s')`.
    pub fn state_action(&self, h: usize, s: usize, a: usize) -> f64 {
        let start = self.dims.sas_index(h, s, a, 0);
        self.q[start..start + self.dims.states].iter().sum()
    }

    /// `Σ_{a, s'} q_h(s, a, s')`.
    pub fn state(&self, h: usize, s: usize) -> f64 {
        (0..self.dims.actions)
            .map(|a| self.state_action(h, s, a))
            .sum()
    }

    /// State marginals indexed `(h, s)`.
    pub fn state_marginals(&self) -> Vec<f64> {
        let d = self.dims;
        let mut out = vec![0.0; d.horizon * d.states];
        for h in 0..d.horizon {
            for s in 0..d.states {
                out[d.hs_index(h, s)] = self.state(h, s);
            }
        }
        out
    }

    /// `<q, c>` with `c` broadcast over next states.
    pub fn dot(&self, cost: &CostFunction) -> f64 {
        let d = self.dims;
        let mut total = 0.0;
        for (i, &c) in cost.values().iter().enumerate() {
            let block = &self.q[i * d.states..(i + 1) * d.states];
            total += c * block.iter().sum::<f64>();
        }
        total
    }
}

/// Bellman backup for one step: `Q(s,a) = c(s,a) + <p(·|s,a), v_next>`.
pub fn q_backup(cost_layer: &[f64], transition_layer: &[f64], v_next: &[f64]) -> Result<Vec<f64>> {
    let states = v_next.len();
    if states == 0 || !cost_layer.len().is_multiple_of(states) {
        return Err(Error::contract(format!(
            "q_backup: cost layer of {} entries is incompatible with {} states",
            cost_layer.len(),
            states
        )));
    }
    if transition_layer.len() != cost_layer.len() * states {
        return Err(Error::contract(format!(
            "q_backup: transition layer has {} entries, expected {}",
            transition_layer.len(),
            cost_layer.len() * states
        )));
    }
    Ok(cost_layer
        .iter()
        .zip(transition_layer.chunks(states))
        .map(|(c, row)| c + dot(row, v_next))
        .collect())
}

/// `V(s) = <π(·|s), Q(s, ·)>`.
pub fn v_from_q(q_layer: &[f64], policy_layer: &[f64], num_actions: usize) -> Result<Vec<f64>> {
    if num_actions == 0 || q_layer.len() != policy_layer.len() || !q_layer.len().is_multiple_of(num_actions) {
        return Err(Error::contract(format!(
            "v_from_q: shapes disagree (Q {}, π {}, A {num_actions})",
            q_layer.len(),
            policy_layer.len()
        )));
    }
    q_layer
        .chunks(num_actions)
        .zip(policy_layer.chunks(num_actions))
        .enumerate()
        .map(|(s, (q, pi))| {
            check_distribution(pi, &format!("v_from_q: policy row for state {s}"))?;
            Ok(dot(q, pi))
        })
        .collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact evaluation of `policy` on `cost` by backward recursion.
pub fn policy_value(mdp: &TabularMdp, policy: &Policy, cost: &CostFunction) -> Result<ValueTables> {
    let d = mdp.dims();
    d.check_same(&policy.dims, "policy_value: policy")?;
    d.check_same(&cost.dims, "policy_value: cost")?;
    let mut v = vec![0.0; (d.horizon + 1) * d.states];
    let mut q = vec![0.0; d.hsa()];
    for h in (0..d.horizon).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * d.states);
        let v_next = &tail[..d.states];
        let q_h = q_backup(cost.layer(h), mdp.layer(h), v_next)?;
        let v_h = v_from_q(&q_h, policy.layer(h), d.actions)?;
        head[h * d.states..].copy_from_slice(&v_h);
        let width = d.states * d.actions;
        q[h * width..(h + 1) * width].copy_from_slice(&q_h);
    }
    Ok(ValueTables { dims: d, v, q })
}

/// `V^π_1(s_init)` for `cost`.
pub fn initial_value(mdp: &TabularMdp, policy: &Policy, cost: &CostFunction) -> Result<f64> {
    Ok(policy_value(mdp, policy, cost)?.v(0, mdp.initial_state()))
}

/// Forward recursion for the occupancy measure of `policy` under `mdp`.
pub fn occupancy_measure(mdp: &TabularMdp, policy: &Policy) -> Result<OccupancyMeasure> {
    let d = mdp.dims();
    d.check_same(&policy.dims, "occupancy_measure: policy")?;
    let mut q = vec![0.0; d.hsas()];
    let mut mu = vec![0.0; d.states];
    mu[mdp.initial_state()] = 1.0;
    for h in 0..d.horizon {
        let mut next_mu = vec![0.0; d.states];
        for (s, &mass) in mu.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for a in 0..d.actions {
                let w = mass * policy.get(h, s, a);
                let row = mdp.row(h, s, a);
                let start = d.sas_index(h, s, a, 0);
                for (next, &p) in row.iter().enumerate() {
                    let x = w * p;
                    q[start + next] = x;
                    next_mu[next] += x;
                }
            }
        }
        mu = next_mu;
    }
    Ok(OccupancyMeasure { dims: d, q })
}

/// Greedy backward DP for `cost`: the optimal deterministic policy (lowest
/// action index on ties) and its value tables.
pub fn optimal_policy(mdp: &TabularMdp, cost: &[f64]) -> Result<(Policy, ValueTables)> {
    let d = mdp.dims();
    if cost.len() != d.hsa() {
        return Err(Error::contract(
            "optimal_policy: cost table has wrong length",
        ));
    }
    let mut v = vec![0.0; (d.horizon + 1) * d.states];
    let mut q = vec![0.0; d.hsa()];
    let mut choice = vec![0usize; d.horizon * d.states];
    let width = d.states * d.actions;
    for h in (0..d.horizon).rev() {
        let q_h = q_backup(
            &cost[h * width..(h + 1) * width],
            mdp.layer(h),
            &v[(h + 1) * d.states..(h + 2) * d.states],
        )?;
        for s in 0..d.states {
            let row = &q_h[s * d.actions..(s + 1) * d.actions];
            let mut best = 0;
            for a in 1..d.actions {
                if row[a] < row[best] {
                    best = a;
                }
            }
            choice[d.hs_index(h, s)] = best;
            v[h * d.states + s] = row[best];
        }
        q[h * width..(h + 1) * width].copy_from_slice(&q_h);
    }
    let policy = Policy::deterministic(d, &choice)?;
    Ok((policy, ValueTables { dims: d, v, q }))
}

/// `argmin_π Σ_k V^{k,π}_1(s_init)`; the value is linear in the cost for a
/// fixed kernel, so one DP on the summed cost suffices.
pub fn best_policy_in_hindsight(mdp: &TabularMdp, costs: &[CostFunction]) -> Result<(Policy, f64)> {
    if costs.is_empty() {
        return Err(Error::contract("best_policy_in_hindsight needs K >= 1"));
    }
    let d = mdp.dims();
    let mut total = vec![0.0; d.hsa()];
    for c in costs {
        d.check_same(&c.dims, "best_policy_in_hindsight")?;
        for (t, x) in total.iter_mut().zip(&c.costs) {
            *t += x;
        }
    }
    let (policy, values) = optimal_policy(mdp, &total)?;
    Ok((policy, values.v(0, mdp.initial_state())))
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Draw from a probability row.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    sample_index(probs, rng)
}

/// Run one episode of `policy` from the initial state.
pub fn sample_episode<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    cost: &CostFunction,
    rng: &mut R,
) -> Result<Trajectory> {
    let d = mdp.dims();
    d.check_same(&policy.dims, "sample_episode: policy")?;
    d.check_same(&cost.dims, "sample_episode: cost")?;
    let mut steps = Vec::with_capacity(d.horizon);
    let mut suffered_costs = Vec::with_capacity(d.horizon);
    let mut s = mdp.initial_state();
    for h in 0..d.horizon {
        let a = sample_index(policy.row(h, s), rng);
        steps.push((s, a));
        suffered_costs.push(cost.get(h, s, a));
        s = sample_index(mdp.row(h, s, a), rng);
    }
    Ok(Trajectory {
        steps,
        final_state: s,
        suffered_costs,
    })
}

/// Which prefixes get an exact best-in-hindsight value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HindsightMode {
    /// Every prefix `k = 1..=K`.
    EveryEpisode,
    /// Roughly ten checkpoints per decade plus the final episode.
    #[default]
    LogSpaced,
    /// Only `k = K` (fast mode).
    FinalOnly,
}

impl HindsightMode {
    /// One-based episode indices at which the comparator is computed.
    pub fn checkpoints(self, episodes: usize) -> Vec<usize> {
        match self {
            HindsightMode::EveryEpisode => (1..=episodes).collect(),
            HindsightMode::FinalOnly => vec![episodes],
            HindsightMode::LogSpaced => {
                let mut out = Vec::new();
                let mut x = 1.0f64;
                while (x.round() as usize) < episodes {
                    let k = x.round() as usize;
                    if out.last() != Some(&k) {
                        out.push(k);
                    }
                    x *= 10f64.powf(0.1);
                }
                out.push(episodes);
                out
            }
        }
    }
}

/// Prefix comparator values `min_π Σ_{j≤k} V^{j,π}_1(s_init)` at the
/// checkpoints selected by `mode`; `None` elsewhere.
pub fn hindsight_curve(
    mdp: &TabularMdp,
    costs: &[CostFunction],
    mode: HindsightMode,
) -> Result<Vec<Option<f64>>> {
    if costs.is_empty() {
        return Err(Error::contract("hindsight_curve needs K >= 1"));
    }
    let d = mdp.dims();
    let checkpoints = mode.checkpoints(costs.len());
    let mut out = vec![None; costs.len()];
    let mut total = vec![0.0; d.hsa()];
    let mut next = checkpoints.iter().peekable();
    for (i, c) in costs.iter().enumerate() {
        d.check_same(&c.dims, "hindsight_curve")?;
        for (t, x) in total.iter_mut().zip(&c.costs) {
            *t += x;
        }
        if next.peek() == Some(&&(i + 1)) {
            next.next();
            let (_, values) = optimal_policy(mdp, &total)?;
            out[i] = Some(values.v(0, mdp.initial_state()));
        }
    }
    Ok(out)
}

/// Cumulative regret `R_k` at every prefix where a comparator is available.
pub fn empirical_regret(values: &[f64], hindsight: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    if values.len() != hindsight.len() {
        return Err(Error::contract(format!(
            "empirical_regret: {} learner values vs {} comparator entries",
            values.len(),
            hindsight.len()
        )));
    }
    let mut cumulative = 0.0;
    Ok(values
        .iter()
        .zip(hindsight)
        .map(|(v, best)| {
            cumulative += v;
            best.map(|b| cumulative - b)
        })
        .collect())
}
