use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{default_rates, ExperimentConfig, LearnerSpec, MdpSpec, ResolvedParams};
use super::costs::generate_costs;
use crate::delay::{make_schedule, CostPayload, DelaySchedule, FeedbackBuffer, FeedbackPacket};
use crate::error::{Error, Result};
use crate::learner::{
    EpisodePlan, EvaluationDiagnostics, FixedPolicyLearner, Learner, Restartable,
};
use crate::mdp::{
    best_policy_in_hindsight, hindsight_curve, initial_value, sample_episode, CostSequence, Dims,
    HindsightMode, TabularMdp, Trajectory,
};
use crate::oppo::{DynamicsMode, FeedbackMode, OppoConfig, OppoLearner};
use crate::oreps::OrepsLearner;
use crate::wrappers::{BlackBoxReduction, DoublingRates, DoublingWrapper, SkipConfig, SkipWrapper};

const STREAM_MDP: u64 = 1;
const STREAM_COSTS: u64 = 2;
const STREAM_DELAYS: u64 = 3;
const STREAM_EPISODES: u64 = 4;

/// Independent, reproducible random stream `stream` of run `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The adversary's side of a run: kernel, cost sequence and delays.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub mdp: TabularMdp,
    pub costs: CostSequence,
    pub schedule: DelaySchedule,
    pub feedback: FeedbackMode,
}

impl Environment {
    pub fn new(
        mdp: TabularMdp,
        costs: CostSequence,
        schedule: DelaySchedule,
        feedback: FeedbackMode,
    ) -> Result<Self> {
        mdp.dims().check_same(&costs.dims(), "environment")?;
        if costs.len() != schedule.episodes() {
            return Err(Error::config(format!(
                "{} cost tables but {} delays",
                costs.len(),
                schedule.episodes()
            )));
        }
        Ok(Self {
            mdp,
            costs,
            schedule,
            feedback,
        })
    }

    pub fn episodes(&self) -> usize {
        self.costs.len()
    }

    pub fn dims(&self) -> Dims {
        self.mdp.dims()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub k: usize,
    /// `V^{k,π^k}_1(s_init)` of the policy actually played.
    pub value: f64,
    pub cum_value: f64,
    /// `min_π Σ_{j≤k} V^{j,π}_1`, at checkpoints only.
    pub hindsight: Option<f64>,
    pub regret: Option<f64>,
    /// `M^k`.
    pub missing: usize,
    pub skipped: usize,
    pub phase: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub label: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub params: ResolvedParams,
    pub rows: Vec<RegretRow>,
    /// Sum of the suffered costs of each episode.
    pub suffered: Vec<f64>,
    pub diagnostics: Option<EvaluationDiagnostics>,
}

impl RegretRecord {
    pub fn final_regret(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.regret)
    }

    pub fn phases(&self) -> usize {
        self.rows.last().map_or(1, |r| r.phase)
    }

    pub fn skipped(&self) -> usize {
        self.rows.last().map_or(0, |r| r.skipped)
    }
}

/// What an observer sees at the end of every episode.
pub struct EpisodeEvent<'a> {
    pub k: usize,
    pub plan: &'a EpisodePlan,
    pub trajectory: &'a Trajectory,
    pub arrived: &'a [FeedbackPacket],
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<RegretRow>,
    pub suffered: Vec<f64>,
    pub diagnostics: Option<EvaluationDiagnostics>,
}

/// Execute the interaction protocol for all `K` episodes.
pub fn run_with_learner<R: Rng + ?Sized>(
    env: &Environment,
    learner: &mut dyn Learner,
    hindsight: HindsightMode,
    rng: &mut R,
    mut observer: Option<&mut dyn FnMut(&EpisodeEvent<'_>)>,
) -> Result<RunOutcome> {
    let dims = env.dims();
    dims.check_same(&learner.dims(), "learner")?;
    let episodes = env.episodes();
    let comparator = hindsight_curve(&env.mdp, env.costs.as_slice(), hindsight)?;
    let mut buffer = FeedbackBuffer::new(dims, episodes);
    let mut rows = Vec::with_capacity(episodes);
    let mut suffered = Vec::with_capacity(episodes);
    let mut cum_value = 0.0;
    for k in 1..=episodes {
        let cost = env.costs.episode(k);
        let plan = learner.begin_episode(k)?;
        let value = initial_value(&env.mdp, &plan.played, cost)?;
        let trajectory = sample_episode(&env.mdp, &plan.played, cost, rng)?;
        learner.end_episode(k, &trajectory)?;
        buffer.record_visit(&trajectory);
        let payload = match env.feedback {
            FeedbackMode::FullInfo => CostPayload::Full(cost.clone()),
            FeedbackMode::Bandit => CostPayload::Bandit(trajectory.suffered_costs.clone()),
        };
        buffer.schedule(
            FeedbackPacket {
                episode: k,
                delay: env.schedule.delay(k),
                trajectory: trajectory.clone(),
                cost: payload,
                policy: plan.snapshot.clone(),
            },
            episodes,
        );
        let arrived = buffer.deliver(k)?;
        learner.on_feedback(k, &arrived)?;

        cum_value += value;
        let best = comparator[k - 1];
        rows.push(RegretRow {
            k,
            value,
            cum_value,
            hindsight: best,
            regret: best.map(|b| cum_value - b),
            missing: buffer.missing(),
            skipped: learner.skipped(),
            phase: learner.phase(),
        });
        suffered.push(trajectory.total_cost());
        if let Some(obs) = observer.as_mut() {
            obs(&EpisodeEvent {
                k,
                plan: &plan,
                trajectory: &trajectory,
                arrived: &arrived,
                value,
            });
        }
    }
    Ok(RunOutcome {
        rows,
        suffered,
        diagnostics: learner.diagnostics(),
    })
}

fn load_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn build_environment(cfg: &ExperimentConfig, seed: u64) -> Result<Environment> {
    cfg.validate()?;
    let mdp = match &cfg.mdp {
        MdpSpec::Random {
            states,
            actions,
            horizon,
            seed: mdp_seed,
        } => {
            let dims = Dims::new(*states, *actions, *horizon)?;
            TabularMdp::random(dims, &mut stream_rng(mdp_seed.unwrap_or(seed), STREAM_MDP))
        }
        MdpSpec::Chain {
            states,
            actions,
            horizon,
        } => TabularMdp::chain(Dims::new(*states, *actions, *horizon)?),
        MdpSpec::File { path } => load_json(path)?,
    };
    let costs = generate_costs(
        &cfg.costs,
        mdp.dims(),
        cfg.episodes,
        &mut stream_rng(seed, STREAM_COSTS),
    )?;
    let schedule = make_schedule(
        &cfg.delays,
        cfg.episodes,
        &mut stream_rng(seed, STREAM_DELAYS),
    )?;
    Environment::new(mdp, costs, schedule, cfg.learner.feedback())
}

fn oppo_config(
    cfg: &ExperimentConfig,
    feedback: FeedbackMode,
    dynamics: DynamicsMode,
    eta: f64,
    gamma: f64,
    episodes: usize,
) -> OppoConfig {
    let mut c = OppoConfig::new(eta, feedback, dynamics, episodes);
    c.exploration = gamma;
    c.delta = cfg.delta();
    c.union_split = cfg.union_split;
    c
}

fn attach_oracle(learner: OppoLearner, cfg: &ExperimentConfig, env: &Environment) -> OppoLearner {
    if cfg.diagnostics && learner.config().dynamics == DynamicsMode::Unknown {
        learner.with_oracle(env.mdp.clone())
    } else {
        learner
    }
}

/// Assemble the learner stack described by `cfg` for `env`.
pub fn build_learner(
    cfg: &ExperimentConfig,
    env: &Environment,
) -> Result<(Box<dyn Learner>, ResolvedParams)> {
    let dims = env.dims();
    let k = env.episodes();
    let total_delay = env.schedule.total();
    let max_delay = env.schedule.max();
    let feedback = cfg.learner.feedback();
    let (eta0, gamma0) = default_rates(dims.horizon, feedback, k, total_delay);
    let mut params = ResolvedParams {
        eta: cfg.overrides.eta.unwrap_or(eta0),
        gamma: match feedback {
            FeedbackMode::FullInfo => 0.0,
            FeedbackMode::Bandit => cfg.overrides.gamma.unwrap_or(gamma0),
        },
        delta: cfg.delta(),
        beta: None,
        total_delay,
        max_delay,
    };

    let base: Box<dyn Restartable> = match &cfg.learner {
        LearnerSpec::Oppo {
            feedback,
            dynamics,
            trajectory_delayed,
            explicit_exploration,
        } => {
            let mut c = oppo_config(cfg, *feedback, *dynamics, params.eta, params.gamma, k);
            c.trajectory_delayed = *trajectory_delayed;
            c.explicit_exploration = *explicit_exploration;
            if *explicit_exploration {
                c.d_max_hint = Some(max_delay);
            }
            let known = (*dynamics == DynamicsMode::Known).then(|| env.mdp.clone());
            Box::new(attach_oracle(OppoLearner::new(dims, c, known)?, cfg, env))
        }
        LearnerSpec::Oreps => Box::new(OrepsLearner::new(env.mdp.clone(), params.eta)?),
        LearnerSpec::Blackbox { feedback, dynamics } => {
            let copies = max_delay + 1;
            let per_instance = k.div_ceil(copies);
            let (eta_i, gamma_i) = default_rates(dims.horizon, *feedback, per_instance, 0);
            params.eta = cfg.overrides.eta.unwrap_or(eta_i);
            if *feedback == FeedbackMode::Bandit {
                params.gamma = cfg.overrides.gamma.unwrap_or(gamma_i);
            }
            let (f, dy) = (*feedback, *dynamics);
            let reduction = BlackBoxReduction::new(max_delay, |_| {
                let c = oppo_config(cfg, f, dy, params.eta, params.gamma, per_instance);
                let known = (dy == DynamicsMode::Known).then(|| env.mdp.clone());
                Ok(attach_oracle(OppoLearner::new(dims, c, known)?, cfg, env))
            })?;
            return Ok((Box::new(reduction), params));
        }
        LearnerSpec::HindsightCheater => {
            let (policy, _) = best_policy_in_hindsight(&env.mdp, env.costs.as_slice())?;
            return Ok((Box::new(FixedPolicyLearner::new(policy)), params));
        }
    };

    let skip = cfg.wrappers.skip;
    if cfg.wrappers.doubling {
        let rates = match feedback {
            FeedbackMode::FullInfo => DoublingRates::FullInfo,
            FeedbackMode::Bandit => DoublingRates::Bandit,
        };
        let wrapper = DoublingWrapper::new(base, rates, skip.is_some())?;
        let p = *wrapper.params();
        params.eta = p.learning_rate;
        params.gamma = p.exploration;
        params.beta = skip.map(|_| p.skip_threshold);
        return Ok((Box::new(wrapper), params));
    }
    if let Some(spec) = skip {
        let sc = match spec.beta {
            Some(b) => SkipConfig::new(b)?,
            None => SkipConfig::from_total_delay(total_delay, dims),
        };
        params.beta = Some(sc.threshold);
        let wrapper = SkipWrapper::new(base, sc).feed_skipped_trajectories(spec.feed_trajectories);
        return Ok((Box::new(wrapper), params));
    }
    Ok((Box::new(base), params))
}

/// Run one seed of `cfg` end to end.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RegretRecord> {
    let env = build_environment(cfg, seed)?;
    let (mut learner, params) = build_learner(cfg, &env)?;
    let outcome = run_with_learner(
        &env,
        learner.as_mut(),
        cfg.hindsight,
        &mut stream_rng(seed, STREAM_EPISODES),
        None,
    )?;
    Ok(RegretRecord {
        label: cfg.learner.label(),
        seed,
        config: cfg.clone(),
        params,
        rows: outcome.rows,
        suffered: outcome.suffered,
        diagnostics: outcome.diagnostics,
    })
}

/// The random stream the harness uses for trajectories of run `seed`.
pub fn episode_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, STREAM_EPISODES)
}
