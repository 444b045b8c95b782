//! Non-delayed implementations that update at the end of each episode with
//! that episode's own feedback and never look at packets.

use dmdp::estimation::{log_term, upper_occupancy, ConfidenceSet, TransitionCounts};
use dmdp::harness::{Environment, ExperimentConfig, ResolvedParams};
use dmdp::mdp::occupancy_measure;
use dmdp::oppo::{optimistic_values, Dynamics};
use dmdp::oreps::{broadcast_cost, log_occupancy, project_log};
use dmdp::{
    CostSequence, Dims, DynamicsMode, EpisodePlan, FeedbackMode, FeedbackPacket, Learner, Policy,
    Result, TabularMdp, Trajectory,
};

pub struct ReferenceOppo {
    dims: Dims,
    mdp: Option<TabularMdp>,
    costs: CostSequence,
    feedback: FeedbackMode,
    eta: f64,
    gamma: f64,
    log_term: f64,
    counts: TransitionCounts,
    scores: Vec<f64>,
    policy: Policy,
}

impl Learner for ReferenceOppo {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn begin_episode(&mut self, _k: usize) -> Result<EpisodePlan> {
        Ok(EpisodePlan::plain(self.policy.clone()))
    }

    fn end_episode(&mut self, k: usize, trajectory: &Trajectory) -> Result<()> {
        let d = self.dims;
        self.counts.add_trajectory(trajectory);
        let set = self
            .mdp
            .is_none()
            .then(|| ConfidenceSet::from_counts(&self.counts, self.log_term));
        let dynamics = match (&self.mdp, &set) {
            (Some(m), _) => Dynamics::Known(m),
            (None, Some(s)) => Dynamics::Optimistic(s),
            _ => unreachable!(),
        };
        let cost = match self.feedback {
            FeedbackMode::FullInfo => self.costs.episode(k).values().to_vec(),
            FeedbackMode::Bandit => {
                let u = match &self.mdp {
                    Some(m) => occupancy_measure(m, &self.policy)?.state_marginals(),
                    None => {
                        upper_occupancy(set.as_ref().unwrap(), &self.policy, trajectory.steps[0].0)?
                    }
                };
                let mut c = vec![0.0; d.hsa()];
                for (h, &(s, a)) in trajectory.steps.iter().enumerate() {
                    let denom = u[d.hs_index(h, s)] * self.policy.get(h, s, a) + self.gamma;
                    c[d.sa_index(h, s, a)] = trajectory.suffered_costs[h] / denom;
                }
                c
            }
        };
        let values = optimistic_values(&self.policy, &cost, dynamics)?;
        for (s, q) in self.scores.iter_mut().zip(&values.q) {
            *s += q;
        }
        let mut probs = vec![0.0; d.hsa()];
        for (row, out) in self
            .scores
            .chunks(d.actions)
            .zip(probs.chunks_mut(d.actions))
        {
            let best = row.iter().copied().fold(f64::INFINITY, f64::min);
            let mut z = 0.0;
            for (o, &x) in out.iter_mut().zip(row) {
                *o = (-self.eta * (x - best)).exp();
                z += *o;
            }
            for o in out.iter_mut() {
                *o /= z;
            }
        }
        self.policy = Policy::new(d, probs)?;
        Ok(())
    }

    fn on_feedback(&mut self, _k: usize, _packets: &[FeedbackPacket]) -> Result<()> {
        Ok(())
    }
}

pub struct ReferenceOreps {
    mdp: TabularMdp,
    costs: CostSequence,
    eta: f64,
    log_q: Vec<f64>,
    policy: Policy,
}

impl Learner for ReferenceOreps {
    fn dims(&self) -> Dims {
        self.mdp.dims()
    }

    fn begin_episode(&mut self, _k: usize) -> Result<EpisodePlan> {
        Ok(EpisodePlan::plain(self.policy.clone()))
    }

    fn end_episode(&mut self, k: usize, _trajectory: &Trajectory) -> Result<()> {
        let c = broadcast_cost(self.costs.episode(k));
        let tilde: Vec<f64> = self
            .log_q
            .iter()
            .zip(&c)
            .map(|(l, c)| l - self.eta * c)
            .collect();
        let p = project_log(&tilde, &self.mdp)?;
        self.log_q = p.log_q;
        self.policy = p.policy;
        Ok(())
    }

    fn on_feedback(&mut self, _k: usize, _packets: &[FeedbackPacket]) -> Result<()> {
        Ok(())
    }
}

impl ReferenceOppo {
    pub fn new(cfg: &ExperimentConfig, env: &Environment, params: &ResolvedParams) -> Self {
        let d = env.dims();
        Self {
            dims: d,
            mdp: (cfg.learner.dynamics() == DynamicsMode::Known).then(|| env.mdp.clone()),
            costs: env.costs.clone(),
            feedback: cfg.learner.feedback(),
            eta: params.eta,
            gamma: params.gamma,
            log_term: log_term(d, env.episodes(), params.delta),
            counts: TransitionCounts::new(d),
            scores: vec![0.0; d.hsa()],
            policy: Policy::uniform(d),
        }
    }
}

impl ReferenceOreps {
    pub fn new(env: &Environment, params: &ResolvedParams) -> Self {
        Self {
            mdp: env.mdp.clone(),
            costs: env.costs.clone(),
            eta: params.eta,
            log_q: log_occupancy(&env.mdp, &Policy::uniform(env.dims())),
            policy: Policy::uniform(env.dims()),
        }
    }
}
