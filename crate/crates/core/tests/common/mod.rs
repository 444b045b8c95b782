#![allow(dead_code)]

pub mod reference;

use dmdp::harness::experiment::episode_rng;
use dmdp::harness::{
    build_environment, build_learner, run_with_learner, Environment, ExperimentConfig,
};
use dmdp::mdp::HindsightMode;
use dmdp::{Learner, Policy};
use serde_json::{json, Value};

/// Random S=4, A=3, H=3 instance with the given learner and delays.
pub fn config(learner: Value, delays: Value, episodes: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(
        &json!({
            "mdp": {"kind": "random", "states": 4, "actions": 3, "horizon": 3},
            "costs": {"kind": "piecewise_switching", "period": 50},
            "delays": delays,
            "learner": learner,
            "episodes": episodes,
            "hindsight": "final_only"
        })
        .to_string(),
    )
    .unwrap()
}

pub fn oppo(feedback: &str, dynamics: &str) -> Value {
    json!({"kind": "oppo", "feedback": feedback, "dynamics": dynamics})
}

pub const REGIMES: [(&str, &str); 4] = [
    ("full_info", "known"),
    ("full_info", "unknown"),
    ("bandit", "known"),
    ("bandit", "unknown"),
];

/// Played policies of `learner` on the environment of `cfg` and `seed`.
pub fn played_with(env: &Environment, learner: &mut dyn Learner, seed: u64) -> Vec<Policy> {
    let mut played = Vec::with_capacity(env.episodes());
    let mut observe = |e: &dmdp::harness::EpisodeEvent<'_>| played.push(e.plan.played.clone());
    run_with_learner(
        env,
        learner,
        HindsightMode::FinalOnly,
        &mut episode_rng(seed),
        Some(&mut observe),
    )
    .unwrap();
    played
}

/// Played policies of the learner stack described by `cfg`.
pub fn played_policies(cfg: &ExperimentConfig, seed: u64) -> Vec<Policy> {
    let env = build_environment(cfg, seed).unwrap();
    let (mut learner, _) = build_learner(cfg, &env).unwrap();
    played_with(&env, learner.as_mut(), seed)
}

pub fn bits(policies: &[Policy]) -> Vec<Vec<u64>> {
    policies
        .iter()
        .map(|p| p.values().iter().map(|x| x.to_bits()).collect())
        .collect()
}
