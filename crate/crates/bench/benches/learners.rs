use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dmdp::estimation::{log_term, optimistic_transition, upper_occupancy, ConfidenceSet};
use dmdp::harness::{run_experiment, ExperimentConfig};
use dmdp::mdp::{occupancy_measure, policy_value};
use dmdp::oreps::{broadcast_cost, kl_project_known_p, unconstrained_update};
use dmdp_bench::fixture;

fn primitives(c: &mut Criterion) {
    let f = fixture(10, 4, 5, 20);
    let d = f.mdp.dims();
    let set = ConfidenceSet::from_counts(&f.counts, log_term(d, 1000, 0.1));

    c.bench_function("policy_value S10 A4 H5", |b| {
        b.iter(|| policy_value(&f.mdp, &f.policy, &f.cost).unwrap())
    });

    let (p_bar, eps) = set.row(0, 0, 0);
    let v_next: Vec<f64> = (0..d.states).map(|s| s as f64 / d.states as f64).collect();
    c.bench_function("optimistic_transition S10", |b| {
        b.iter(|| optimistic_transition(p_bar, eps, &v_next))
    });

    c.bench_function("upper_occupancy S10 A4 H5", |b| {
        b.iter(|| upper_occupancy(&set, &f.policy, 0).unwrap())
    });

    let q = occupancy_measure(&f.mdp, &f.policy).unwrap();
    let q_tilde = unconstrained_update(&q.q, &broadcast_cost(&f.cost), 0.5);
    c.bench_function("kl_project_known_p S10 A4 H5", |b| {
        b.iter(|| kl_project_known_p(&q_tilde, &f.mdp).unwrap())
    });
}

fn episode_loops(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_experiment K=500");
    group.sample_size(10);
    for learner in [
        r#"{"kind": "oppo", "feedback": "full_info", "dynamics": "known"}"#,
        r#"{"kind": "oppo", "feedback": "bandit", "dynamics": "unknown"}"#,
        r#"{"kind": "oreps"}"#,
    ] {
        let cfg = ExperimentConfig::from_json(&format!(
            r#"{{
                "mdp": {{"kind": "random", "states": 4, "actions": 3, "horizon": 3}},
                "costs": {{"kind": "piecewise_switching", "period": 100}},
                "delays": {{"kind": "uniform_random", "d_hi": 16}},
                "learner": {learner},
                "episodes": 500,
                "hindsight": "final_only"
            }}"#
        ))
        .unwrap();
        group.bench_function(cfg.learner.label(), |b| {
            b.iter_batched(
                || cfg.clone(),
                |cfg| run_experiment(&cfg, 0).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, primitives, episode_loops);
criterion_main!(benches);
