//! Empirical transition model, Bernstein-style confidence boxes, optimistic
//! transition selection, upper occupancy bounds and the bandit cost estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{dot, Dims, Policy, TabularMdp, Trajectory};

/// Raw `(h, s, a, s')` transition counts from observed trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCounts {
    dims: Dims,
    counts: Vec<u64>,
}

impl TransitionCounts {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            counts: vec![0; dims.hsas()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn add(&mut self, h: usize, s: usize, a: usize, next: usize) {
        self.counts[self.dims.sas_index(h, s, a, next)] += 1;
    }

    pub fn add_trajectory(&mut self, trajectory: &Trajectory) {
        for (h, s, a, next) in trajectory.transitions() {
            self.add(h, s, a, next);
        }
    }

    pub fn get(&self, h: usize, s: usize, a: usize, next: usize) -> u64 {
        self.counts[self.dims.sas_index(h, s, a, next)]
    }

    /// `n_h(s, a)`.
    pub fn visits(&self, h: usize, s: usize, a: usize) -> u64 {
        let start = self.dims.sas_index(h, s, a, 0);
        self.counts[start..start + self.dims.states].iter().sum()
    }

    /// `n_h(s) = Σ_a n_h(s, a)`.
    pub fn state_visits(&self, h: usize, s: usize) -> u64 {
        (0..self.dims.actions).map(|a| self.visits(h, s, a)).sum()
    }
}

/// Empirical kernel `p̄` and observed-visit counts `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalModel {
    pub dims: Dims,
    pub p_bar: Vec<f64>,
    pub n: Vec<u64>,
}

/// `p̄(s'|s,a) = count / n`, uniform rows where nothing has been observed.
pub fn update_empirical(counts: &TransitionCounts) -> EmpiricalModel {
    let d = counts.dims;
    let mut p_bar = vec![0.0; d.hsas()];
    let mut n = vec![0u64; d.hsa()];
    for (i, block) in counts.counts.chunks(d.states).enumerate() {
        let total: u64 = block.iter().sum();
        n[i] = total;
        let row = &mut p_bar[i * d.states..(i + 1) * d.states];
        if total == 0 {
            row.fill(1.0 / d.states as f64);
        } else {
            for (p, &c) in row.iter_mut().zip(block) {
                *p = c as f64 / total as f64;
            }
        }
    }
    EmpiricalModel { dims: d, p_bar, n }
}

/// `L = ln(H S A K / (4δ))`.
pub fn log_term(dims: Dims, episodes: usize, delta: f64) -> f64 {
    let hsak = (dims.hsa() * episodes.max(1)) as f64;
    (hsak / (4.0 * delta)).ln()
}

/// `ε = 4 sqrt(p̄(1 − p̄) L / (n ∨ 1)) + 10 L / (n ∨ 1)`, unclipped.
pub fn confidence_radius(p_bar: f64, n: u64, log_term: f64) -> f64 {
    let n = n.max(1) as f64;
    4.0 * (p_bar * (1.0 - p_bar) * log_term / n).sqrt() + 10.0 * log_term / n
}

/// The box `P^k`: for every `(h, s, a, s')`, `|p' − p̄| ≤ ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub dims: Dims,
    pub p_bar: Vec<f64>,
    pub n: Vec<u64>,
    pub epsilon: Vec<f64>,
    pub log_term: f64,
}

impl ConfidenceSet {
    pub fn from_counts(counts: &TransitionCounts, log_term: f64) -> Self {
        Self::from_model(update_empirical(counts), log_term)
    }

    pub fn from_model(model: EmpiricalModel, log_term: f64) -> Self {
        let d = model.dims;
        let epsilon = model
            .p_bar
            .iter()
            .enumerate()
            .map(|(i, &p)| confidence_radius(p, model.n[i / d.states], log_term))
            .collect();
        Self {
            dims: d,
            p_bar: model.p_bar,
            n: model.n,
            epsilon,
            log_term,
        }
    }

    /// A degenerate box around `p_bar` with radius `epsilon` everywhere.
    pub fn with_uniform_radius(dims: Dims, p_bar: Vec<f64>, epsilon: f64) -> Self {
        Self {
            dims,
            epsilon: vec![epsilon; p_bar.len()],
            n: vec![0; dims.hsa()],
            p_bar,
            log_term: f64::NAN,
        }
    }

    /// `(p̄_h(·|s,a), ε_h(·|s,a))`.
    pub fn row(&self, h: usize, s: usize, a: usize) -> (&[f64], &[f64]) {
        let start = self.dims.sas_index(h, s, a, 0);
        let end = start + self.dims.states;
        (&self.p_bar[start..end], &self.epsilon[start..end])
    }

    /// The empirical kernel as an MDP with the given initial state.
    pub fn empirical_mdp(&self, initial_state: usize) -> Result<TabularMdp> {
        TabularMdp::new(self.dims, initial_state, self.p_bar.clone())
    }
}

/// Minimizer of `<p', v_next>` over the box intersected with the simplex.
///
/// Starts every coordinate at its lower bound and pours the remaining mass
/// into states in ascending order of `v_next` (lowest index first on ties),
/// each up to its upper bound.
pub fn optimistic_transition(p_bar: &[f64], epsilon: &[f64], v_next: &[f64]) -> Vec<f64> {
    debug_assert_eq!(p_bar.len(), epsilon.len());
    debug_assert_eq!(p_bar.len(), v_next.len());
    let mut out: Vec<f64> = p_bar
        .iter()
        .zip(epsilon)
        .map(|(p, e)| (p - e).max(0.0))
        .collect();
    let mut mass = 1.0 - out.iter().sum::<f64>();
    let mut order: Vec<usize> = (0..p_bar.len()).collect();
    order.sort_by(|&i, &j| v_next[i].total_cmp(&v_next[j]).then(i.cmp(&j)));
    for i in order {
        if mass <= 0.0 {
            break;
        }
        let room = (p_bar[i] + epsilon[i]).min(1.0) - out[i];
        let add = room.min(mass).max(0.0);
        out[i] += add;
        mass -= add;
    }
    out
}

/// Maximizer of `<p', w>` over the box (the mirror of [`optimistic_transition`]).
pub fn pessimistic_transition(p_bar: &[f64], epsilon: &[f64], w: &[f64]) -> Vec<f64> {
    let negated: Vec<f64> = w.iter().map(|x| -x).collect();
    optimistic_transition(p_bar, epsilon, &negated)
}

/// `u_h(s) = max_{p' ∈ P} Pr[s_h = s | π, p']`, indexed `(h, s)`.
///
/// One exact maximizing DP per target `(h*, s*)`.
pub fn upper_occupancy(
    set: &ConfidenceSet,
    policy: &Policy,
    initial_state: usize,
) -> Result<Vec<f64>> {
    let d = set.dims;
    d.check_same(&policy.dims(), "upper_occupancy: policy")?;
    let mut u = vec![0.0; d.horizon * d.states];
    u[d.hs_index(0, initial_state)] = 1.0;
    let mut reach = vec![0.0; d.states];
    let mut scratch = vec![0.0; d.states];
    for target_h in 1..d.horizon {
        for target_s in 0..d.states {
            reach.fill(0.0);
            reach[target_s] = 1.0;
            for h in (0..target_h).rev() {
                for s in 0..d.states {
                    let mut total = 0.0;
                    for a in 0..d.actions {
                        let pi = policy.get(h, s, a);
                        if pi == 0.0 {
                            continue;
                        }
                        let (p_bar, eps) = set.row(h, s, a);
                        let p = pessimistic_transition(p_bar, eps, &reach);
                        total += pi * dot(&p, &reach);
                    }
                    scratch[s] = total;
                }
                std::mem::swap(&mut reach, &mut scratch);
            }
            u[d.hs_index(target_h, target_s)] = reach[initial_state].min(1.0);
        }
    }
    Ok(u)
}

/// `ĉ(s,a) = c 𝕀{visited} / (u(s) π(a|s) + γ)`.
pub fn is_cost_estimator(cost: f64, visited: bool, upper: f64, pi: f64, gamma: f64) -> Result<f64> {
    if !visited {
        return Ok(0.0);
    }
    let denom = upper * pi + gamma;
    if denom <= 0.0 {
        return Err(Error::Numerical(format!(
            "importance weight denominator {denom} (u={upper}, π={pi}, γ={gamma})"
        )));
    }
    Ok(cost / denom)
}

/// `|p − p̄| ≤ ε` entrywise.
pub fn contains_truth(set: &ConfidenceSet, mdp: &TabularMdp) -> bool {
    if set.dims != mdp.dims() {
        return false;
    }
    mdp.transitions()
        .iter()
        .zip(&set.p_bar)
        .zip(&set.epsilon)
        .all(|((p, q), e)| (p - q).abs() <= *e)
}

/// L1 deviation check `‖p − p̄‖₁ ≤ sqrt(14 S ln(HSAK/δ') / (n ∨ 1))`.
/// Diagnostic only; learners never consume it.
pub fn l1_within_bound(
    set: &ConfidenceSet,
    mdp: &TabularMdp,
    episodes: usize,
    delta_prime: f64,
) -> bool {
    let d = set.dims;
    let log = ((d.hsa() * episodes.max(1)) as f64 / delta_prime).ln();
    (0..d.hsa()).all(|i| {
        let start = i * d.states;
        let dev: f64 = (start..start + d.states)
            .map(|j| (mdp.transitions()[j] - set.p_bar[j]).abs())
            .sum();
        dev <= (14.0 * d.states as f64 * log / set.n[i].max(1) as f64).sqrt()
    })
}
