//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as they come out but do
//! not fail the run; any other failure exits nonzero.

mod common;

use std::time::{Duration, Instant};

use common::reference::{ReferenceOppo, ReferenceOreps};
use common::{bits, played_policies, played_with, REGIMES};
use dmdp::delay::CostPayload;
use dmdp::harness::sweep::mean_stderr;
use dmdp::harness::{
    build_environment, build_learner, run_experiment, run_with_learner, ExperimentConfig,
};
use dmdp::mdp::{
    best_policy_in_hindsight, occupancy_measure, policy_value, sample_episode, HindsightMode,
};
use dmdp::oppo::{estimate_cost, Dynamics};
use dmdp::oreps::{
    bregman_divergence, broadcast_cost, project_log, unconstrained_update_log, OccupancyPolytope,
};
use dmdp::{
    CostFunction, Dims, EpisodePlan, FeedbackMode, FeedbackPacket, Learner, OrepsLearner, Policy,
    Result, TabularMdp, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

/// Criteria whose failure is analysed in the project notes.
const KNOWN_FAILURES: &[&str] = &["7", "9"];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Option<Duration>,
}

fn check(
    id: &'static str,
    budget: Option<Duration>,
    f: impl FnOnce() -> (bool, String),
) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    let elapsed = start.elapsed();
    let within = budget.is_none_or(|b| elapsed <= b);
    Outcome {
        id,
        pass: pass && within,
        detail,
        elapsed,
        budget,
    }
}

fn cfg(value: Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&value.to_string()).unwrap()
}

fn base(learner: Value, delays: Value, episodes: usize, costs: Value) -> Value {
    json!({
        "mdp": {"kind": "random", "states": 4, "actions": 3, "horizon": 3},
        "costs": costs,
        "delays": delays,
        "learner": learner,
        "episodes": episodes,
        "hindsight": "final_only"
    })
}

fn random_policy(dims: Dims, rng: &mut ChaCha8Rng) -> Policy {
    let mut probs = Vec::with_capacity(dims.hsa());
    for _ in 0..dims.horizon * dims.states {
        let row: Vec<f64> = (0..dims.actions)
            .map(|_| -rng.random::<f64>().ln())
            .collect();
        let z: f64 = row.iter().sum();
        probs.extend(row.iter().map(|x| x / z));
    }
    Policy::new(dims, probs).unwrap()
}

// ---------------------------------------------------------------- 1

/// Expected cost of a two-step episode by enumerating `(a0, s1, a1)`.
fn enumerate_value(mdp: &TabularMdp, policy: &Policy, cost: &CostFunction, s0: usize) -> f64 {
    let d = mdp.dims();
    let mut total = 0.0;
    for a0 in 0..d.actions {
        for s1 in 0..d.states {
            for a1 in 0..d.actions {
                let p = policy.get(0, s0, a0) * mdp.row(0, s0, a0)[s1] * policy.get(1, s1, a1);
                total += p * (cost.get(0, s0, a0) + cost.get(1, s1, a1));
            }
        }
    }
    total
}

fn criterion_1() -> (bool, String) {
    let dims = Dims::new(2, 2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_value = 0.0f64;
    let mut worst_best = 0.0f64;
    for _ in 0..500 {
        let mdp = TabularMdp::random(dims, &mut rng);
        let policy = random_policy(dims, &mut rng);
        let costs: Vec<CostFunction> = (0..3)
            .map(|_| {
                CostFunction::new(dims, (0..dims.hsa()).map(|_| rng.random()).collect()).unwrap()
            })
            .collect();
        let v = policy_value(&mdp, &policy, &costs[0]).unwrap();
        for s in 0..dims.states {
            worst_value =
                worst_value.max((v.v(0, s) - enumerate_value(&mdp, &policy, &costs[0], s)).abs());
        }
        let mut exhaustive = f64::INFINITY;
        for code in 0..16usize {
            let choice: Vec<usize> = (0..4).map(|b| (code >> b) & 1).collect();
            let det = Policy::deterministic(dims, &choice).unwrap();
            let total: f64 = costs
                .iter()
                .map(|c| enumerate_value(&mdp, &det, c, 0))
                .sum();
            exhaustive = exhaustive.min(total);
        }
        let (best, value) = best_policy_in_hindsight(&mdp, &costs).unwrap();
        let realized: f64 = costs
            .iter()
            .map(|c| enumerate_value(&mdp, &best, c, 0))
            .sum();
        worst_best = worst_best
            .max((value - exhaustive).abs())
            .max((realized - exhaustive).abs());
    }
    (
        worst_value <= 1e-12 && worst_best <= 1e-12,
        format!("max |V − enum| = {worst_value:.2e}, max |best − exhaustive| = {worst_best:.2e} (≤ 1e-12)"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> (bool, String) {
    let k = 200;
    let switching = json!({"kind": "piecewise_switching", "period": 50});
    let zero = json!({"kind": "fixed", "d": 0});
    let mut notes = Vec::new();
    let mut pass = true;
    for (feedback, dynamics) in REGIMES {
        let c = cfg(base(
            json!({"kind": "oppo", "feedback": feedback, "dynamics": dynamics}),
            zero.clone(),
            k,
            switching.clone(),
        ));
        let same = (0..3u64).all(|seed| {
            let env = build_environment(&c, seed).unwrap();
            let (_, params) = build_learner(&c, &env).unwrap();
            let expected = played_with(&env, &mut ReferenceOppo::new(&c, &env, &params), seed);
            bits(&played_policies(&c, seed)) == bits(&expected)
        });
        pass &= same;
        notes.push(format!(
            "{feedback}/{dynamics}={}",
            if same { "identical" } else { "DIFFER" }
        ));
    }
    let c = cfg(base(json!({"kind": "oreps"}), zero, k, switching));
    let same = (0..3u64).all(|seed| {
        let env = build_environment(&c, seed).unwrap();
        let (_, params) = build_learner(&c, &env).unwrap();
        let expected = played_with(&env, &mut ReferenceOreps::new(&env, &params), seed);
        bits(&played_policies(&c, seed)) == bits(&expected)
    });
    pass &= same;
    notes.push(format!(
        "oreps={}",
        if same { "identical" } else { "DIFFER" }
    ));
    (pass, format!("K={k}, 3 seeds: {}", notes.join(", ")))
}

// ---------------------------------------------------------------- 3, 9

const SWITCHING_PERIOD: usize = 2000;
const SEEDS: u64 = 20;

fn mean_final(learner: Value, d: i64, k: usize) -> Vec<f64> {
    let c = cfg(base(
        learner,
        json!({"kind": "fixed", "d": d}),
        k,
        json!({"kind": "piecewise_switching", "period": SWITCHING_PERIOD}),
    ));
    (0..SEEDS)
        .into_par_iter()
        .map(|s| run_experiment(&c, s).unwrap().final_regret().unwrap())
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn full_known() -> Value {
    json!({"kind": "oppo", "feedback": "full_info", "dynamics": "known"})
}

fn criterion_3() -> (bool, String) {
    let fixed_d = 4;
    let ks = [1000usize, 4000, 16000, 64000];
    let by_k: Vec<f64> = ks
        .iter()
        .map(|&k| mean(&mean_final(full_known(), fixed_d, k)))
        .collect();
    let k_slope = slope(&ks.map(|k| k as f64), &by_k);
    let ds = [0i64, 8, 64, 512];
    let by_d: Vec<f64> = ds
        .iter()
        .map(|&d| mean(&mean_final(full_known(), d, 16000)))
        .collect();
    let monotone = by_d.windows(2).all(|w| w[1] >= w[0]);
    let d_slope = slope(&[8.0, 64.0, 512.0], &by_d[1..]);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.1}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    (
        (0.35..=0.65).contains(&k_slope) && monotone && d_slope <= 0.7,
        format!(
            "d={fixed_d}: R(K) = [{}], slope {k_slope:.3} ∈ [0.35, 0.65]; K=16k: R(d) = [{}], monotone={monotone}, slope {d_slope:.3} ≤ 0.7",
            fmt(&by_k),
            fmt(&by_d)
        ),
    )
}

fn criterion_9() -> (bool, String) {
    let oppo = mean_final(full_known(), 64, 16000);
    let bb = mean_final(
        json!({"kind": "blackbox", "feedback": "full_info", "dynamics": "known"}),
        64,
        16000,
    );
    let diffs: Vec<f64> = oppo.iter().zip(&bb).map(|(a, b)| a - b).collect();
    let (dm, dse) = mean_stderr(&diffs).unwrap();
    let (mo, mb) = (mean(&oppo), mean(&bb));
    (
        mo <= mb,
        format!(
            "delayed OPPO {mo:.2} vs black-box {mb:.2}; paired difference {dm:+.2} ± {dse:.2} (SE)"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_skip = f64::NEG_INFINITY;
    let mut worst_phase = i64::MIN;
    let mut exact = 0;
    let mut pass = true;
    for i in 0..100 {
        let k = rng.random_range(50..300usize);
        let delays: Vec<usize> = (1..=k)
            .map(|j| match i % 4 {
                0 => rng.random_range(0..40),
                1 => (rng.random::<f64>() * (k as f64).ln()).exp() as usize,
                2 => {
                    if rng.random::<f64>() < 0.1 {
                        rng.random_range(0..2 * k)
                    } else {
                        0
                    }
                }
                _ => rng.random_range(0..40).min(k - j),
            })
            .collect();
        let total: usize = delays.iter().sum();
        let beta = 1.0 + 20.0 * rng.random::<f64>();
        let mut v = json!({
            "mdp": {"kind": "random", "states": 2, "actions": 2, "horizon": 2},
            "costs": {"kind": "sinusoidal_drift", "period": 37.0},
            "delays": {"kind": "adversarial_list", "delays": delays},
            "learner": full_known(),
            "episodes": k,
            "hindsight": "final_only",
            "wrappers": {"skip": {"beta": beta}}
        });
        let skipped = run_experiment(&cfg(v.clone()), i).unwrap();
        let skip_gap = skipped.skipped() as f64 - total as f64 / beta;
        worst_skip = worst_skip.max(skip_gap);
        pass &= skip_gap <= 0.0;

        v["wrappers"] = json!({"doubling": true});
        let doubled = run_experiment(&cfg(v), i).unwrap();
        let bound = ((k + total) as f64).log2().ceil() as i64 + 1;
        worst_phase = worst_phase.max(doubled.phases() as i64 - bound);
        pass &= doubled.phases() as i64 <= bound;

        let missing: usize = doubled.rows.iter().map(|r| r.missing).sum();
        pass &= missing <= total;
        if delays.iter().enumerate().all(|(j, &d)| d <= k - (j + 1)) {
            exact += 1;
            pass &= missing == total;
        }
    }
    (
        pass,
        format!(
            "100 schedules: max(skipped − D/β) = {worst_skip:.2} ≤ 0, max(phases − bound) = {worst_phase} ≤ 0, ΣM ≤ D everywhere, ΣM = D on all {exact} fully delivered schedules"
        ),
    )
}

// ---------------------------------------------------------------- 5, 6

fn unknown_run(feedback: &str, seed: u64, episodes: usize) -> dmdp::harness::RegretRecord {
    let mut v = base(
        json!({"kind": "oppo", "feedback": feedback, "dynamics": "unknown"}),
        json!({"kind": "uniform_random", "d_hi": 10}),
        episodes,
        json!({"kind": "iid_stochastic", "distribution": "bernoulli"}),
    );
    v["diagnostics"] = true.into();
    v["overrides"] = json!({"delta": 0.1});
    run_experiment(&cfg(v), seed).unwrap()
}

fn criterion_5() -> (bool, String) {
    let covered: Vec<bool> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let feedback = if s % 2 == 0 { "full_info" } else { "bandit" };
            let d = unknown_run(feedback, s, 500).diagnostics.unwrap();
            d.uncovered_episodes == 0 && d.episodes == 500
        })
        .collect();
    let frac = covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64;
    (frac >= 0.9, format!("δ=0.1, K=500, 200 runs (full info and bandit): covered at every episode in {:.3} of runs (≥ 0.9)", frac))
}

fn criterion_6() -> (bool, String) {
    let stats: Vec<_> = (0..50u64)
        .into_par_iter()
        .map(|s| unknown_run("full_info", s, 500).diagnostics.unwrap())
        .collect();
    let checked: usize = stats.iter().map(|d| d.checked_evaluations).sum();
    let violations: usize = stats.iter().map(|d| d.optimism_violations).sum();
    let gap = stats
        .iter()
        .filter_map(|d| d.max_optimism_gap)
        .fold(f64::NEG_INFINITY, f64::max);
    (
        checked > 0 && violations == 0,
        format!("50 seeds: {checked} checked evaluations, {violations} with V^j − V^π > 1e-10, max gap {gap:.3e}"),
    )
}

// ---------------------------------------------------------------- 7

struct Calibration {
    gamma: f64,
    /// Per cell: (c, q, mean, standard error).
    cells: Vec<(f64, f64, f64, f64)>,
}

fn calibrate(gamma: f64, episodes: usize) -> Calibration {
    let dims = Dims::new(4, 3, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mdp = TabularMdp::random(dims, &mut rng);
    let policy = random_policy(dims, &mut rng);
    let cost = CostFunction::new(
        dims,
        (0..dims.hsa())
            .map(|_| 0.1 + 0.9 * rng.random::<f64>())
            .collect(),
    )
    .unwrap();
    let occupancy = occupancy_measure(&mdp, &policy).unwrap();
    let mut sum = vec![0.0; dims.hsa()];
    let mut sq = vec![0.0; dims.hsa()];
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for j in 1..=episodes {
        let trajectory = sample_episode(&mdp, &policy, &cost, &mut rng).unwrap();
        let packet = FeedbackPacket {
            episode: j,
            delay: 0,
            cost: CostPayload::Bandit(trajectory.suffered_costs.clone()),
            trajectory,
            policy: policy.clone(),
        };
        let est =
            estimate_cost(&packet, Dynamics::Known(&mdp), FeedbackMode::Bandit, gamma).unwrap();
        for (i, x) in est.iter().enumerate() {
            sum[i] += x;
            sq[i] += x * x;
        }
    }
    let n = episodes as f64;
    let mut cells = Vec::new();
    for h in 0..dims.horizon {
        for s in 0..dims.states {
            for a in 0..dims.actions {
                let i = dims.sa_index(h, s, a);
                let m = sum[i] / n;
                let var = (sq[i] / n - m * m).max(0.0) * n / (n - 1.0);
                cells.push((
                    cost.get(h, s, a),
                    occupancy.state_action(h, s, a),
                    m,
                    (var / n).sqrt(),
                ));
            }
        }
    }
    Calibration { gamma, cells }
}

fn criterion_7() -> (bool, String) {
    let runs: Vec<Calibration> = [0.1, 0.01]
        .par_iter()
        .map(|&g| calibrate(g, 100_000))
        .collect();
    let mut lines = Vec::new();
    let mut below = true;
    let mut matches_bias = true;
    for r in &runs {
        let b = r.cells.iter().all(|&(c, _, m, _)| m <= c);
        // E[ĉ] = c q / (q + γ) for the visited-cell estimator.
        let z = r
            .cells
            .iter()
            .map(|&(c, q, m, se)| (m - c * q / (q + r.gamma)).abs() / se)
            .fold(0.0, f64::max);
        below &= b;
        // Four SE across the 36 cells keeps the family-wise level near 0.2%.
        matches_bias &= z <= 4.0;
        let mean_gap =
            r.cells.iter().map(|&(c, _, m, _)| c - m).sum::<f64>() / r.cells.len() as f64;
        let within = r
            .cells
            .iter()
            .filter(|&&(c, _, m, se)| (m - c).abs() <= 3.0 * se)
            .count();
        lines.push(format!(
            "γ={}: mean ≤ c in all cells={b}, mean gap c − ĉ = {mean_gap:.4}, max |ĉ − c q/(q+γ)|/SE = {z:.2}, cells within 3 SE of c: {within}/{}",
            r.gamma,
            r.cells.len()
        ));
    }
    let gap = |r: &Calibration| r.cells.iter().map(|&(c, _, m, _)| c - m).sum::<f64>();
    let shrinks = gap(&runs[1]) < gap(&runs[0]);
    let converged = runs[1]
        .cells
        .iter()
        .all(|&(c, _, m, se)| (m - c).abs() <= 3.0 * se);
    lines.push(format!(
        "bias shrinks as γ → 0.01: {shrinks}; within 3 SE of c at γ=0.01: {converged}"
    ));
    (
        below && shrinks && converged && matches_bias,
        lines.join("; "),
    )
}

// ---------------------------------------------------------------- 8

struct Audited {
    inner: OrepsLearner,
    mdp: TabularMdp,
    rng: ChaCha8Rng,
    updates: usize,
    worst_residual: f64,
    worst_margin: f64,
    worst_shift: f64,
    checkpoints: usize,
    next_checkpoint: usize,
}

impl Learner for Audited {
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
        let before = self.inner.state().clone();
        self.inner.on_feedback(k, packets)?;
        if packets.is_empty() {
            return Ok(());
        }
        self.updates += 1;
        let after = self.inner.state().occupancy();
        self.worst_residual = self
            .worst_residual
            .max(OccupancyPolytope::new(&self.mdp).residuals(&after)?.max());
        if k < self.next_checkpoint {
            return Ok(());
        }
        self.next_checkpoint += 200;
        self.checkpoints += 1;
        let mut batch = vec![0.0; self.mdp.dims().hsas()];
        for p in packets {
            let CostPayload::Full(c) = &p.cost else {
                unreachable!()
            };
            batch
                .iter_mut()
                .zip(broadcast_cost(c))
                .for_each(|(a, b)| *a += b);
        }
        let log_tilde = unconstrained_update_log(&before.log_q, &batch, before.learning_rate);
        let tilde: Vec<f64> = log_tilde.iter().map(|x| x.exp()).collect();
        let best = bregman_divergence(&after.q, &tilde);
        // Half of the feasible points sit close to the projection.
        for i in 0..100 {
            let policy = random_policy(self.mdp.dims(), &mut self.rng);
            let q = occupancy_measure(&self.mdp, &policy)?;
            let t = if i % 2 == 0 {
                1.0
            } else {
                10f64.powi(-(1 + i % 5))
            };
            let mixed: Vec<f64> =
                q.q.iter()
                    .zip(&after.q)
                    .map(|(x, y)| t * x + (1.0 - t) * y)
                    .collect();
            self.worst_margin = self
                .worst_margin
                .min(bregman_divergence(&mixed, &tilde) - best);
        }
        let shift = 0.37 * before.learning_rate;
        let shifted: Vec<f64> = log_tilde.iter().map(|x| x - shift).collect();
        let a = project_log(&log_tilde, &self.mdp)?;
        let b = project_log(&shifted, &self.mdp)?;
        let diff = a
            .log_q
            .iter()
            .zip(&b.log_q)
            .map(|(x, y)| (x.exp() - y.exp()).abs())
            .fold(0.0, f64::max);
        self.worst_shift = self.worst_shift.max(diff);
        Ok(())
    }
}

fn criterion_8() -> (bool, String) {
    let c = cfg(base(
        json!({"kind": "oreps"}),
        json!({"kind": "uniform_random", "d_hi": 5}),
        2000,
        json!({"kind": "piecewise_switching", "period": 100}),
    ));
    let env = build_environment(&c, 8).unwrap();
    let (_, params) = build_learner(&c, &env).unwrap();
    let mut audited = Audited {
        inner: OrepsLearner::new(env.mdp.clone(), params.eta).unwrap(),
        mdp: env.mdp.clone(),
        rng: ChaCha8Rng::seed_from_u64(80),
        updates: 0,
        worst_residual: 0.0,
        worst_margin: f64::INFINITY,
        worst_shift: 0.0,
        checkpoints: 0,
        next_checkpoint: 200,
    };
    run_with_learner(
        &env,
        &mut audited,
        HindsightMode::FinalOnly,
        &mut ChaCha8Rng::seed_from_u64(81),
        None,
    )
    .unwrap();
    let a = &audited;
    (
        a.worst_residual <= 1e-9 && a.worst_margin >= -1e-8 && a.worst_shift <= 1e-10 && a.checkpoints > 0,
        format!(
            "{} updates: max residual {:.2e} ≤ 1e-9; {} checkpoints × 100 points: min KL margin {:.2e} ≥ −1e-8; shift invariance {:.2e} ≤ 1e-10",
            a.updates, a.worst_residual, a.checkpoints, a.worst_margin, a.worst_shift
        ),
    )
}

fn main() {
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    let sec = |s: u64| Some(Duration::from_secs(s));
    let runs: Vec<(&'static str, Option<Duration>, fn() -> (bool, String))> = vec![
        ("1", sec(10), criterion_1),
        ("2", None, criterion_2),
        ("3", min(10), criterion_3),
        ("4", sec(5), criterion_4),
        ("5", min(2), criterion_5),
        ("6", None, criterion_6),
        ("7", None, criterion_7),
        ("8", None, criterion_8),
        ("9", None, criterion_9),
    ];
    let mut unexpected = Vec::new();
    println!("acceptance");
    for (id, budget, f) in runs {
        let o = check(id, budget, f);
        let budget = o
            .budget
            .map_or(String::new(), |b| format!(" / budget {}s", b.as_secs()));
        let known = !o.pass && KNOWN_FAILURES.contains(&o.id);
        println!(
            "criterion {}: {}{} [{:.2}s{budget}] {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            if known { " (known, see notes)" } else { "" },
            o.elapsed.as_secs_f64(),
            o.detail
        );
        if !o.pass && !known {
            unexpected.push(o.id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
