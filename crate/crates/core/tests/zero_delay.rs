//! With `d ≡ 0` the delayed learners must coincide bit for bit with
//! straightforward non-delayed implementations.

mod common;

use common::reference::{ReferenceOppo, ReferenceOreps};
use common::{bits, config, oppo, played_policies, played_with, REGIMES};
use dmdp::harness::{build_environment, build_learner};
use dmdp::Policy;
use serde_json::json;

const K: usize = 200;

#[test]
fn delayed_oppo_with_zero_delay_matches_reference() {
    for (feedback, dynamics) in REGIMES {
        let cfg = config(
            oppo(feedback, dynamics),
            json!({"kind": "fixed", "d": 0}),
            K,
        );
        for seed in [0, 1, 2] {
            let env = build_environment(&cfg, seed).unwrap();
            let (_, params) = build_learner(&cfg, &env).unwrap();
            let mut reference = ReferenceOppo::new(&cfg, &env, &params);
            let expected = played_with(&env, &mut reference, seed);
            let got = played_policies(&cfg, seed);
            assert_eq!(got.len(), K);
            assert!(
                bits(&got) == bits(&expected),
                "{feedback}/{dynamics} seed {seed}"
            );
            assert_ne!(bits(&got[..1]), bits(&got[K - 1..]), "policy never moved");
        }
    }
}

#[test]
fn delayed_oreps_with_zero_delay_matches_reference() {
    let cfg = config(
        json!({"kind": "oreps"}),
        json!({"kind": "fixed", "d": 0}),
        K,
    );
    for seed in [0, 1] {
        let env = build_environment(&cfg, seed).unwrap();
        let (_, params) = build_learner(&cfg, &env).unwrap();
        let mut reference = ReferenceOreps::new(&env, &params);
        let expected = played_with(&env, &mut reference, seed);
        let got = played_policies(&cfg, seed);
        assert!(bits(&got) == bits(&expected), "seed {seed}");
    }
}

#[test]
fn positive_delays_do_change_the_sequence() {
    let zero = played_policies(
        &config(
            oppo("full_info", "known"),
            json!({"kind": "fixed", "d": 0}),
            50,
        ),
        0,
    );
    let three = played_policies(
        &config(
            oppo("full_info", "known"),
            json!({"kind": "fixed", "d": 3}),
            50,
        ),
        0,
    );
    assert_eq!(bits(&zero[..1]), bits(&three[..1]));
    assert_ne!(bits(&zero), bits(&three));
    // Nothing has arrived during the first d + 1 episodes.
    assert!(three[..4].iter().all(|p| p == &Policy::uniform(p.dims())));
}
