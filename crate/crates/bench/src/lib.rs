//! Shared fixtures for the benchmarks in `benches/`.

use dmdp::estimation::TransitionCounts;
use dmdp::{CostFunction, Dims, Policy, TabularMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub mdp: TabularMdp,
    pub policy: Policy,
    pub cost: CostFunction,
    /// `visits` samples per `(h,s,a)` drawn from the true kernel.
    pub counts: TransitionCounts,
}

pub fn fixture(states: usize, actions: usize, horizon: usize, visits: usize) -> Fixture {
    let dims = Dims::new(states, actions, horizon).expect("positive dims");
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mdp = TabularMdp::random(dims, &mut rng);
    let cost = CostFunction::new(dims, (0..dims.hsa()).map(|_| rng.random()).collect())
        .expect("unit costs");
    let mut counts = TransitionCounts::new(dims);
    for h in 0..horizon {
        for s in 0..states {
            for a in 0..actions {
                let row = mdp.row(h, s, a);
                for _ in 0..visits {
                    let next = dmdp::mdp::sample_categorical(row, &mut rng);
                    counts.add(h, s, a, next);
                }
            }
        }
    }
    Fixture {
        mdp,
        policy: Policy::uniform(dims),
        cost,
        counts,
    }
}
