use dmdp::delay::{arrivals, missing_count};
use dmdp::estimation::{contains_truth, optimistic_transition, upper_occupancy, ConfidenceSet};
use dmdp::mdp::{initial_value, occupancy_measure, policy_value};
use dmdp::oppo::softmax_policy;
use dmdp::wrappers::{skip_filter, DoublingController, SkipDecision};
use dmdp::{CostFunction, DelaySchedule, Dims, Policy, TabularMdp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, s: usize, a: usize, h: usize) -> (TabularMdp, Policy, CostFunction) {
    let dims = Dims::new(s, a, h).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mdp = TabularMdp::random(dims, &mut rng);
    let mut probs = Vec::with_capacity(dims.hsa());
    for _ in 0..dims.horizon * dims.states {
        let row: Vec<f64> = (0..a).map(|_| rng.random::<f64>() + 1e-3).collect();
        let z: f64 = row.iter().sum();
        probs.extend(row.iter().map(|x| x / z));
    }
    let policy = Policy::new(dims, probs).unwrap();
    let cost = CostFunction::new(dims, (0..dims.hsa()).map(|_| rng.random()).collect()).unwrap();
    (mdp, policy, cost)
}

fn delays() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..40, 1..120)
}

proptest! {
    #[test]
    fn value_equals_occupancy_dot_cost(seed in any::<u64>(), s in 1usize..6, a in 1usize..4, h in 1usize..5) {
        let (mdp, policy, cost) = instance(seed, s, a, h);
        let v = policy_value(&mdp, &policy, &cost).unwrap().v(0, mdp.initial_state());
        let q = occupancy_measure(&mdp, &policy).unwrap();
        prop_assert!((v - q.dot(&cost)).abs() < 1e-12);
        prop_assert!((v - initial_value(&mdp, &policy, &cost).unwrap()).abs() < 1e-12);
        prop_assert!(v >= -1e-12 && v <= h as f64 + 1e-12);
    }

    #[test]
    fn optimistic_row_stays_in_box_and_simplex(
        seed in any::<u64>(),
        n in 2usize..8,
        radius in 0.0f64..0.6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let z: f64 = raw.iter().sum();
        let p_bar: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let eps: Vec<f64> = (0..n).map(|_| radius * rng.random::<f64>()).collect();
        let v: Vec<f64> = (0..n).map(|_| 3.0 * rng.random::<f64>()).collect();
        let p = optimistic_transition(&p_bar, &eps, &v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..n {
            prop_assert!(p[i] >= 0.0);
            prop_assert!((p[i] - p_bar[i]).abs() <= eps[i] + 1e-12);
        }
        let value = |q: &[f64]| q.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!(value(&p) <= value(&p_bar) + 1e-12);
    }

    #[test]
    fn upper_occupancy_dominates_truth_inside_the_set(seed in any::<u64>(), radius in 0.0f64..0.3) {
        let (mdp, policy, _) = instance(seed, 3, 2, 3);
        let set = ConfidenceSet::with_uniform_radius(mdp.dims(), mdp.transitions().to_vec(), radius);
        prop_assert!(contains_truth(&set, &mdp));
        let u = upper_occupancy(&set, &policy, mdp.initial_state()).unwrap();
        let truth = occupancy_measure(&mdp, &policy).unwrap().state_marginals();
        for (hi, lo) in u.iter().zip(&truth) {
            prop_assert!(*hi >= lo - 1e-12 && *hi <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), eta in 1e-3f64..50.0) {
        let dims = Dims::new(3, 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..dims.hsa()).map(|_| 1e3 * rng.random::<f64>()).collect();
        let p = softmax_policy(dims, &scores, eta);
        for row in p.values().chunks(dims.actions) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }

    #[test]
    fn arrivals_partition_delivered_episodes(d in delays()) {
        let k = d.len();
        let schedule = DelaySchedule::new(d.clone());
        let mut seen = vec![0usize; k + 1];
        for t in 1..=k {
            for j in arrivals(&schedule, t) {
                prop_assert_eq!(j + d[j - 1], t);
                seen[j] += 1;
            }
        }
        for j in 1..=k {
            prop_assert_eq!(seen[j], usize::from(j + d[j - 1] <= k));
        }
    }

    #[test]
    fn missing_sum_is_bounded_by_total_delay(d in delays()) {
        let k = d.len();
        let schedule = DelaySchedule::new(d.clone());
        let sum: usize = (1..=k).map(|t| missing_count(&schedule, t)).sum();
        prop_assert!(sum <= schedule.total());
        if (1..=k).all(|j| d[j - 1] <= k - j) {
            prop_assert_eq!(sum, schedule.total());
        }
        let mut ctl = DoublingController::new();
        for t in 1..=k {
            ctl.observe(t, arrivals(&schedule, t).len()).unwrap();
        }
        prop_assert_eq!(ctl.missing_sum(), sum);
    }

    #[test]
    fn skipped_count_is_at_most_total_delay_over_beta(d in delays(), beta in 0.5f64..30.0) {
        let schedule = DelaySchedule::new(d.clone());
        let skipped = d.iter().filter(|&&x| skip_filter(x, beta) == SkipDecision::Drop).count();
        prop_assert!(skipped as f64 <= schedule.total() as f64 / beta);
    }
}
