//! Delayed O-REPS with known transitions: entropic mirror descent over the
//! occupancy-measure polytope `Δ(M)`.
//!
//! Occupancies are stored as `log q_h(s,a,s')` so that long runs with large
//! accumulated costs do not underflow. With the kernel known, every member
//! of `Δ(M)` factors as `q = x·p` for a state-action flow `x`, so the KL
//! projection reduces to
//!
//! ```text
//! min_x Σ x log(x / w) − x + w   s.t.  Σ_a x_1(s,a) = 𝟙[s = s_init],
//!                                      Σ_a x_{h+1}(s',a) = Σ_{s,a} p_h(s'|s,a) x_h(s,a)
//! ```
//!
//! with `log w_h(s,a) = Σ_{s'} p (log q̃ − log p)`. Its dual
//! `g(λ) = λ_1(s_init) − Σ x(λ) + Σ w`, `x = w·exp(λ_h(s) − Σ_{s'} p λ_{h+1}(s'))`
//! is smooth and concave and is maximized by damped Newton.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::delay::{CostPayload, FeedbackPacket};
use crate::error::{Error, Result};
use crate::learner::{EpisodePlan, Learner, PhaseParams, Restartable};
use crate::mdp::{CostFunction, Dims, OccupancyMeasure, Policy, TabularMdp, Trajectory};

/// Dual residual below which Newton stops.
const NEWTON_TOLERANCE: f64 = 1e-13;
/// Residual a projection must reach to be accepted.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;
const MAX_NEWTON_STEPS: usize = 200;
const POLICY_MASS_FLOOR: f64 = 1e-12;

/// Lift an `(h,s,a)` cost table to `(h,s,a,s')` by broadcasting over `s'`.
pub fn broadcast_cost(cost: &CostFunction) -> Vec<f64> {
    let d = cost.dims();
    let mut out = Vec::with_capacity(d.hsas());
    for &c in cost.values() {
        out.extend(std::iter::repeat_n(c, d.states));
    }
    out
}

/// `q̃ = q·exp(−η Σc)`.
pub fn unconstrained_update(q: &[f64], cost_sum: &[f64], eta: f64) -> Vec<f64> {
    q.iter()
        .zip(cost_sum)
        .map(|(q, c)| q * (-eta * c).exp())
        .collect()
}

/// `log q̃ = log q − η Σc`.
pub fn unconstrained_update_log(log_q: &[f64], cost_sum: &[f64], eta: f64) -> Vec<f64> {
    log_q
        .iter()
        .zip(cost_sum)
        .map(|(l, c)| l - eta * c)
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PolytopeResiduals {
    /// `|Σ_{a,s'} q_1(s_init,a,s') − 1|`.
    pub start: f64,
    /// `max_h |Σ q_h − 1|`.
    pub layer_sum: f64,
    /// Inflow equals outflow at every `(h ≥ 2, s)`.
    pub flow: f64,
    /// `|p^q − p|` wherever the `(s,a)` mass exceeds `1e-12`.
    pub transition: f64,
    /// Magnitude of the most negative entry.
    pub negativity: f64,
}

impl PolytopeResiduals {
    pub fn max(&self) -> f64 {
        self.start
            .max(self.layer_sum)
            .max(self.flow)
            .max(self.transition)
            .max(self.negativity)
    }
}

/// Membership tests for `Δ(M)`.
#[derive(Debug, Clone, Copy)]
pub struct OccupancyPolytope<'a> {
    mdp: &'a TabularMdp,
}

impl<'a> OccupancyPolytope<'a> {
    pub fn new(mdp: &'a TabularMdp) -> Self {
        Self { mdp }
    }

    pub fn residuals(&self, q: &OccupancyMeasure) -> Result<PolytopeResiduals> {
        let d = self.mdp.dims();
        d.check_same(&q.dims, "occupancy polytope")?;
        let mut r = PolytopeResiduals::default();
        let init = self.mdp.initial_state();
        let start: f64 = (0..d.actions).map(|a| q.state_action(0, init, a)).sum();
        r.start = (start - 1.0).abs();
        for h in 0..d.horizon {
            let layer = &q.q
                [h * d.states * d.actions * d.states..(h + 1) * d.states * d.actions * d.states];
            r.layer_sum = r.layer_sum.max((layer.iter().sum::<f64>() - 1.0).abs());
            r.negativity = r
                .negativity
                .max(layer.iter().fold(0.0f64, |m, &x| m.max(-x)));
            for s in 0..d.states {
                for a in 0..d.actions {
                    let mass = q.state_action(h, s, a);
                    if mass > POLICY_MASS_FLOOR {
                        for (next, p) in self.mdp.row(h, s, a).iter().enumerate() {
                            r.transition =
                                r.transition.max((q.get(h, s, a, next) / mass - p).abs());
                        }
                    }
                }
            }
            if h > 0 {
                for s in 0..d.states {
                    let outflow = q.state(h, s);
                    let inflow: f64 = (0..d.states)
                        .flat_map(|s0| (0..d.actions).map(move |a| (s0, a)))
                        .map(|(s0, a)| q.get(h - 1, s0, a, s))
                        .sum();
                    r.flow = r.flow.max((outflow - inflow).abs());
                }
            }
        }
        Ok(r)
    }

    pub fn contains(&self, q: &OccupancyMeasure, tol: f64) -> Result<bool> {
        Ok(self.residuals(q)?.max() <= tol)
    }
}

/// Unnormalized KL `Σ q log(q/q̃) − q + q̃` (with `0 log 0 = 0`).
pub fn bregman_divergence(q: &[f64], q_tilde: &[f64]) -> f64 {
    q.iter()
        .zip(q_tilde)
        .map(
            |(&a, &b)| {
                if a > 0.0 {
                    a * (a / b).ln() - a + b
                } else {
                    b
                }
            },
        )
        .sum()
}

/// `π^q_h(a|s) ∝ Σ_{s'} q_h(s,a,s')`, uniform where the state mass is
/// at most `1e-12`.
pub fn policy_from_occupancy(q: &OccupancyMeasure) -> Policy {
    let d = q.dims;
    let mut probs = vec![1.0 / d.actions as f64; d.hsa()];
    for h in 0..d.horizon {
        for s in 0..d.states {
            let mass = q.state(h, s);
            if mass > POLICY_MASS_FLOOR {
                for a in 0..d.actions {
                    probs[d.sa_index(h, s, a)] = q.state_action(h, s, a) / mass;
                }
            }
        }
    }
    Policy::from_raw(d, probs)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of the state-action flow `x^π_h(s,a)` under `p`.
pub fn log_flow(mdp: &TabularMdp, log_pi: &[f64]) -> Vec<f64> {
    let d = mdp.dims();
    let mut log_state = vec![f64::NEG_INFINITY; d.states];
    log_state[mdp.initial_state()] = 0.0;
    let mut out = vec![f64::NEG_INFINITY; d.hsa()];
    for h in 0..d.horizon {
        for s in 0..d.states {
            for a in 0..d.actions {
                out[d.sa_index(h, s, a)] = log_state[s] + log_pi[d.sa_index(h, s, a)];
            }
        }
        if h + 1 < d.horizon {
            let mut next = vec![f64::NEG_INFINITY; d.states];
            for (sn, slot) in next.iter_mut().enumerate() {
                let terms = (0..d.states)
                    .flat_map(|s| (0..d.actions).map(move |a| (s, a)))
                    .filter_map(|(s, a)| {
                        let p = mdp.row(h, s, a)[sn];
                        (p > 0.0).then(|| out[d.sa_index(h, s, a)] + p.ln())
                    });
                *slot = log_sum_exp(terms);
            }
            log_state = next;
        }
    }
    out
}

/// `log q_h(s,a,s') = log x_h(s,a) + log p_h(s'|s,a)`.
fn log_occupancy_from_flow(mdp: &TabularMdp, log_x: &[f64]) -> Vec<f64> {
    let d = mdp.dims();
    let mut out = vec![f64::NEG_INFINITY; d.hsas()];
    for (i, &lx) in log_x.iter().enumerate() {
        let row = &mdp.transitions()[i * d.states..(i + 1) * d.states];
        for (next, &p) in row.iter().enumerate() {
            if p > 0.0 {
                out[i * d.states + next] = lx + p.ln();
            }
        }
    }
    out
}

/// Log-occupancy of `policy` under `p` (`−∞` off the support).
pub fn log_occupancy(mdp: &TabularMdp, policy: &Policy) -> Vec<f64> {
    let log_pi: Vec<f64> = policy.values().iter().map(|p| p.ln()).collect();
    log_occupancy_from_flow(mdp, &log_flow(mdp, &log_pi))
}

/// `log π^q` computed stably from `log q`.
fn log_policy_from_log_flow(d: Dims, log_x: &[f64]) -> Vec<f64> {
    let mut out = vec![-(d.actions as f64).ln(); d.hsa()];
    for (row, dst) in log_x.chunks(d.actions).zip(out.chunks_mut(d.actions)) {
        // Rows with tiny but nonzero mass keep their relative preferences;
        // only truly unreachable rows fall back to uniform.
        let z = log_sum_exp(row.iter().copied());
        if z.is_finite() {
            for (o, &l) in dst.iter_mut().zip(row) {
                *o = l - z;
            }
        }
    }
    out
}

/// Outcome of a projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `log q` of the projected occupancy, `−∞` off the support of `p`.
    pub log_q: Vec<f64>,
    pub policy: Policy,
    pub newton_steps: usize,
    /// Largest flow residual of the dual iterate at termination.
    pub dual_residual: f64,
}

impl Projection {
    pub fn occupancy(&self, dims: Dims) -> OccupancyMeasure {
        OccupancyMeasure {
            dims,
            q: self.log_q.iter().map(|l| l.exp()).collect(),
        }
    }
}

/// Structurally reachable `(h,s)` pairs in layer order.
fn reachable_states(mdp: &TabularMdp) -> Vec<(usize, usize)> {
    let d = mdp.dims();
    let mut layer = vec![false; d.states];
    layer[mdp.initial_state()] = true;
    let mut out = Vec::new();
    for h in 0..d.horizon {
        let mut next = vec![false; d.states];
        for s in (0..d.states).filter(|&s| layer[s]) {
            out.push((h, s));
            for a in 0..d.actions {
                for (sn, &p) in mdp.row(h, s, a).iter().enumerate() {
                    if p > 0.0 {
                        next[sn] = true;
                    }
                }
            }
        }
        layer = next;
    }
    out
}

struct DualProblem<'a> {
    mdp: &'a TabularMdp,
    log_w: Vec<f64>,
    /// Variable index of each `(h,s)`, `None` if unreachable.
    index: Vec<Option<usize>>,
    vars: Vec<(usize, usize)>,
}

impl<'a> DualProblem<'a> {
    fn new(mdp: &'a TabularMdp, log_w: Vec<f64>) -> Self {
        let d = mdp.dims();
        let vars = reachable_states(mdp);
        let mut index = vec![None; d.horizon * d.states];
        for (i, &(h, s)) in vars.iter().enumerate() {
            index[d.hs_index(h, s)] = Some(i);
        }
        Self {
            mdp,
            log_w,
            index,
            vars,
        }
    }

    fn lambda(&self, lambda: &DVector<f64>, h: usize, s: usize) -> f64 {
        let d = self.mdp.dims();
        if h >= d.horizon {
            return 0.0;
        }
        self.index[d.hs_index(h, s)].map_or(0.0, |i| lambda[i])
    }

    /// `log x(λ)`; unreachable entries are `−∞`.
    fn log_x(&self, lambda: &DVector<f64>) -> Vec<f64> {
        let d = self.mdp.dims();
        let mut out = vec![f64::NEG_INFINITY; d.hsa()];
        for &(h, s) in &self.vars {
            let own = self.lambda(lambda, h, s);
            for a in 0..d.actions {
                let i = d.sa_index(h, s, a);
                let ahead: f64 = if h + 1 < d.horizon {
                    self.mdp
                        .row(h, s, a)
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(sn, &p)| p * self.lambda(lambda, h + 1, sn))
                        .sum()
                } else {
                    0.0
                };
                out[i] = self.log_w[i] + own - ahead;
            }
        }
        out
    }

    /// Concave dual objective up to the constant `Σ w`.
    fn objective(&self, lambda: &DVector<f64>, x: &[f64]) -> f64 {
        self.lambda(lambda, 0, self.mdp.initial_state()) - x.iter().sum::<f64>()
    }

    /// `b − J x`.
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let d = self.mdp.dims();
        let mut g = DVector::zeros(self.vars.len());
        for (i, &(h, s)) in self.vars.iter().enumerate() {
            if h == 0 && s == self.mdp.initial_state() {
                g[i] += 1.0;
            }
            for a in 0..d.actions {
                let xa = x[d.sa_index(h, s, a)];
                g[i] -= xa;
                if h + 1 < d.horizon {
                    for (sn, &p) in self.mdp.row(h, s, a).iter().enumerate() {
                        if p > 0.0 {
                            if let Some(j) = self.index[d.hs_index(h + 1, sn)] {
                                g[j] += p * xa;
                            }
                        }
                    }
                }
            }
        }
        g
    }

    /// `J diag(x) Jᵀ`, the negated dual Hessian.
    fn curvature(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.mdp.dims();
        let n = self.vars.len();
        let mut m = DMatrix::zeros(n, n);
        let mut col: Vec<(usize, f64)> = Vec::with_capacity(d.states + 1);
        for (i, &(h, s)) in self.vars.iter().enumerate() {
            for a in 0..d.actions {
                let xa = x[d.sa_index(h, s, a)];
                if xa == 0.0 {
                    continue;
                }
                col.clear();
                col.push((i, 1.0));
                if h + 1 < d.horizon {
                    for (sn, &p) in self.mdp.row(h, s, a).iter().enumerate() {
                        if p > 0.0 {
                            if let Some(j) = self.index[d.hs_index(h + 1, sn)] {
                                col.push((j, -p));
                            }
                        }
                    }
                }
                for &(r, vr) in &col {
                    for &(c, vc) in &col {
                        m[(r, c)] += xa * vr * vc;
                    }
                }
            }
        }
        m
    }
}

fn exp_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|l| l.exp()).collect()
}

/// KL projection of `exp(log_w)`-weighted flows onto the flow polytope;
/// returns `log x*` and the number of Newton steps.
fn project_flow(mdp: &TabularMdp, log_w: Vec<f64>) -> Result<(Vec<f64>, usize, f64)> {
    let problem = DualProblem::new(mdp, log_w);
    let n = problem.vars.len();
    let mut lambda = DVector::zeros(n);
    let mut log_x = problem.log_x(&lambda);
    let mut x = exp_all(&log_x);
    let mut objective = problem.objective(&lambda, &x);
    let mut grad = problem.gradient(&x);
    let mut residual = grad.amax();
    let mut steps = 0;
    while residual > NEWTON_TOLERANCE && steps < MAX_NEWTON_STEPS {
        steps += 1;
        let mut curvature = problem.curvature(&x);
        let mut ridge = 0.0;
        let direction = loop {
            if let Some(chol) = curvature.clone().cholesky() {
                break chol.solve(&grad);
            }
            ridge = if ridge == 0.0 {
                1e-14 * curvature.diagonal().amax().max(1e-300)
            } else {
                ridge * 10.0
            };
            if !ridge.is_finite() {
                return Err(Error::Numerical(
                    "projection curvature is not positive definite".into(),
                ));
            }
            for i in 0..n {
                curvature[(i, i)] += ridge;
            }
        };
        let slope = grad.dot(&direction);
        let mut t = 1.0;
        let accepted = loop {
            let trial = &lambda + &direction * t;
            let trial_log_x = problem.log_x(&trial);
            let trial_x = exp_all(&trial_log_x);
            let trial_objective = problem.objective(&trial, &trial_x);
            if trial_objective.is_finite()
                && trial_objective >= objective + 1e-4 * t * slope - 1e-15 * objective.abs()
            {
                break Some((trial, trial_log_x, trial_x, trial_objective));
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((l, lx, xv, obj)) = accepted else {
            break;
        };
        lambda = l;
        log_x = lx;
        x = xv;
        objective = obj;
        grad = problem.gradient(&x);
        residual = grad.amax();
    }
    if residual > FEASIBILITY_TOLERANCE {
        return Err(Error::Numerical(format!(
            "KL projection stalled with flow residual {residual:.3e} after {steps} Newton steps"
        )));
    }
    Ok((log_x, steps, residual))
}

/// KL projection in the log domain. The returned occupancy is recomputed
/// from the induced policy, so it lies in `Δ(M)` up to rounding.
pub fn project_log(log_q_tilde: &[f64], mdp: &TabularMdp) -> Result<Projection> {
    let d = mdp.dims();
    if log_q_tilde.len() != d.hsas() {
        return Err(Error::contract("projection input has wrong length"));
    }
    let mut log_w = vec![0.0; d.hsa()];
    for (i, lw) in log_w.iter_mut().enumerate() {
        let row = &mdp.transitions()[i * d.states..(i + 1) * d.states];
        let mut acc = 0.0;
        for (next, &p) in row.iter().enumerate() {
            if p > 0.0 {
                let l = log_q_tilde[i * d.states + next];
                if l.is_nan() || l == f64::INFINITY {
                    return Err(Error::contract(format!(
                        "projection input is not a finite measure (entry {})",
                        i * d.states + next
                    )));
                }
                acc += p * (l - p.ln());
            }
        }
        *lw = acc;
    }
    let (log_x, newton_steps, dual_residual) = project_flow(mdp, log_w)?;
    let log_pi = log_policy_from_log_flow(d, &log_x);
    let policy = Policy::from_raw(d, exp_all(&log_pi));
    let log_q = log_occupancy_from_flow(mdp, &log_flow(mdp, &log_pi));
    Ok(Projection {
        log_q,
        policy,
        newton_steps,
        dual_residual,
    })
}

/// `argmin_{q ∈ Δ(M)} D_R(q ‖ q̃)`.
pub fn kl_project_known_p(q_tilde: &[f64], mdp: &TabularMdp) -> Result<OccupancyMeasure> {
    let d = mdp.dims();
    let log: Vec<f64> = q_tilde.iter().map(|q| q.ln()).collect();
    let projection = project_log(&log, mdp)?;
    let q = projection.occupancy(d);
    let r = OccupancyPolytope::new(mdp).residuals(&q)?;
    if r.max() > FEASIBILITY_TOLERANCE {
        return Err(Error::Numerical(format!(
            "projected occupancy violates Δ(M) by {:.3e}",
            r.max()
        )));
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrepsState {
    pub dims: Dims,
    pub learning_rate: f64,
    pub log_q: Vec<f64>,
    pub policy: Policy,
}

impl OrepsState {
    /// Occupancy of the uniform policy under `p`.
    pub fn uniform(mdp: &TabularMdp, learning_rate: f64) -> Self {
        let policy = Policy::uniform(mdp.dims());
        Self {
            dims: mdp.dims(),
            learning_rate,
            log_q: log_occupancy(mdp, &policy),
            policy,
        }
    }

    pub fn occupancy(&self) -> OccupancyMeasure {
        OccupancyMeasure {
            dims: self.dims,
            q: exp_all(&self.log_q),
        }
    }
}

/// One mirror-descent step with the summed `(h,s,a,s')` cost of the batch;
/// `None` leaves the state untouched.
pub fn oreps_on_feedback(
    state: &OrepsState,
    batch_cost: Option<&[f64]>,
    mdp: &TabularMdp,
) -> Result<OrepsState> {
    let Some(cost) = batch_cost else {
        return Ok(state.clone());
    };
    if cost.len() != state.dims.hsas() {
        return Err(Error::contract("batch cost has wrong length"));
    }
    let tilde = unconstrained_update_log(&state.log_q, cost, state.learning_rate);
    let projection = project_log(&tilde, mdp)?;
    Ok(OrepsState {
        dims: state.dims,
        learning_rate: state.learning_rate,
        log_q: projection.log_q,
        policy: projection.policy,
    })
}

#[derive(Debug, Clone)]
pub struct OrepsLearner {
    mdp: TabularMdp,
    state: OrepsState,
    seen: BTreeSet<usize>,
}

impl OrepsLearner {
    pub fn new(mdp: TabularMdp, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(Self {
            state: OrepsState::uniform(&mdp, learning_rate),
            mdp,
            seen: BTreeSet::new(),
        })
    }

    pub fn state(&self) -> &OrepsState {
        &self.state
    }

    pub fn policy(&self) -> &Policy {
        &self.state.policy
    }
}

impl Learner for OrepsLearner {
    fn dims(&self) -> Dims {
        self.mdp.dims()
    }

    fn begin_episode(&mut self, _k: usize) -> Result<EpisodePlan> {
        Ok(EpisodePlan::plain(self.state.policy.clone()))
    }

    fn end_episode(&mut self, _k: usize, _trajectory: &Trajectory) -> Result<()> {
        Ok(())
    }

    fn on_feedback(&mut self, _k: usize, packets: &[FeedbackPacket]) -> Result<()> {
        let mut batch: Option<Vec<f64>> = None;
        for p in packets {
            if !self.seen.insert(p.episode) {
                return Err(Error::contract(format!(
                    "feedback of episode {} replayed",
                    p.episode
                )));
            }
            let CostPayload::Full(cost) = &p.cost else {
                return Err(Error::config("O-REPS requires full-information feedback"));
            };
            let lifted = broadcast_cost(cost);
            match batch.as_mut() {
                None => batch = Some(lifted),
                Some(sum) => sum.iter_mut().zip(&lifted).for_each(|(a, b)| *a += b),
            }
        }
        self.state = oreps_on_feedback(&self.state, batch.as_deref(), &self.mdp)?;
        Ok(())
    }

    fn on_skipped(&mut self, packet: &FeedbackPacket, _feed_trajectory: bool) -> Result<()> {
        if !self.seen.insert(packet.episode) {
            return Err(Error::contract(format!(
                "feedback of episode {} replayed",
                packet.episode
            )));
        }
        Ok(())
    }

    fn state_json(&self) -> serde_json::Value {
        serde_json::json!({
            "learning_rate": self.state.learning_rate,
            "policy": self.state.policy,
            "occupancy": self.state.occupancy().q,
        })
    }
}

impl Restartable for OrepsLearner {
    fn restart(&mut self, params: &PhaseParams) -> Result<()> {
        if !(params.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        self.state = OrepsState::uniform(&self.mdp, params.learning_rate);
        Ok(())
    }
}
