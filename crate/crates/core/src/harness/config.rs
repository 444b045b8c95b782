use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::delay::ScheduleKind;
use crate::error::{Error, Result};
use crate::mdp::HindsightMode;
use crate::oppo::{DynamicsMode, FeedbackMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MdpSpec {
    /// Dirichlet(1) transition rows. Without a seed the run seed is used.
    Random {
        states: usize,
        actions: usize,
        horizon: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Chain {
        states: usize,
        actions: usize,
        horizon: usize,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostDistribution {
    #[default]
    Bernoulli,
    Beta,
}

fn default_concentration() -> f64 {
    4.0
}

fn default_gap() -> f64 {
    0.4
}

fn default_base_range() -> (f64, f64) {
    (0.3, 0.7)
}

fn default_amplitude() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    IidStochastic {
        #[serde(default)]
        distribution: CostDistribution,
        /// Per-`(h,s,a)` means; drawn uniformly from `[0,1]` when absent.
        #[serde(default)]
        means: Option<Vec<f64>>,
        /// `α + β` of the Beta draws.
        #[serde(default = "default_concentration")]
        concentration: f64,
    },
    PiecewiseSwitching {
        period: usize,
        #[serde(default = "default_gap")]
        gap: f64,
        #[serde(default = "default_base_range")]
        base_range: (f64, f64),
    },
    SinusoidalDrift {
        period: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    FixedFile {
        path: PathBuf,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Oppo {
        feedback: FeedbackMode,
        dynamics: DynamicsMode,
        #[serde(default = "default_true")]
        trajectory_delayed: bool,
        #[serde(default)]
        explicit_exploration: bool,
    },
    Oreps,
    /// `d_max + 1` round-robin copies of non-delayed OPPO.
    Blackbox {
        feedback: FeedbackMode,
        dynamics: DynamicsMode,
    },
    /// Plays the best fixed policy in hindsight from episode 1.
    HindsightCheater,
}

impl LearnerSpec {
    pub fn feedback(&self) -> FeedbackMode {
        match self {
            LearnerSpec::Oppo { feedback, .. } | LearnerSpec::Blackbox { feedback, .. } => {
                *feedback
            }
            LearnerSpec::Oreps | LearnerSpec::HindsightCheater => FeedbackMode::FullInfo,
        }
    }

    pub fn dynamics(&self) -> DynamicsMode {
        match self {
            LearnerSpec::Oppo { dynamics, .. } | LearnerSpec::Blackbox { dynamics, .. } => {
                *dynamics
            }
            LearnerSpec::Oreps | LearnerSpec::HindsightCheater => DynamicsMode::Known,
        }
    }

    pub fn label(&self) -> String {
        let regime = |f: FeedbackMode, d: DynamicsMode| {
            format!(
                "{}-{}",
                match f {
                    FeedbackMode::FullInfo => "full",
                    FeedbackMode::Bandit => "bandit",
                },
                match d {
                    DynamicsMode::Known => "known",
                    DynamicsMode::Unknown => "unknown",
                }
            )
        };
        match self {
            LearnerSpec::Oppo {
                feedback, dynamics, ..
            } => format!("oppo-{}", regime(*feedback, *dynamics)),
            LearnerSpec::Oreps => "oreps".into(),
            LearnerSpec::Blackbox { feedback, dynamics } => {
                format!("blackbox-{}", regime(*feedback, *dynamics))
            }
            LearnerSpec::HindsightCheater => "hindsight-cheater".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SkipSpec {
    /// Threshold β; defaults to `√(D/(S H))`.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Let skipped packets still contribute transitions.
    #[serde(default)]
    pub feed_trajectories: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WrapperSpec {
    #[serde(default)]
    pub skip: Option<SkipSpec>,
    #[serde(default)]
    pub doubling: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mdp: MdpSpec,
    pub costs: CostSpec,
    pub delays: ScheduleKind,
    pub learner: LearnerSpec,
    #[serde(default)]
    pub wrappers: WrapperSpec,
    #[serde(default)]
    pub overrides: Overrides,
    pub episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub hindsight: HindsightMode,
    /// Track confidence coverage and optimism against the true kernel.
    #[serde(default)]
    pub diagnostics: bool,
    /// Use `δ/9` inside the confidence radius.
    #[serde(default)]
    pub union_split: bool,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Make file references relative to the config's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let MdpSpec::File { path } = &mut self.mdp {
            fix(path);
        }
        if let CostSpec::FixedFile { path } = &mut self.costs {
            fix(path);
        }
        if let Some(dir) = &mut self.output.dir {
            fix(dir);
        }
    }

    /// Checks that do not need the generated instance.
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("episodes must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seed list is empty"));
        }
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(Error::config(format!("{name} must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        positive("eta", self.overrides.eta)?;
        positive("gamma", self.overrides.gamma)?;
        if let Some(d) = self.overrides.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::config(format!("delta must lie in (0, 1), got {d}")));
            }
        }
        if let Some(skip) = self.wrappers.skip {
            positive("beta", skip.beta)?;
        }
        match &self.learner {
            LearnerSpec::Blackbox { .. } | LearnerSpec::HindsightCheater
                if self.wrappers.skip.is_some() || self.wrappers.doubling =>
            {
                return Err(Error::config(format!(
                    "the {} learner does not take wrappers",
                    self.learner.label()
                )));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.overrides.delta.unwrap_or_else(default_delta)
    }
}

/// Learning parameters after defaults have been filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub eta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub beta: Option<f64>,
    pub total_delay: usize,
    pub max_delay: usize,
}

/// `η, γ` for a learner facing `n` episodes with total delay `D`.
pub fn default_rates(
    horizon: usize,
    feedback: FeedbackMode,
    episodes: usize,
    total_delay: usize,
) -> (f64, f64) {
    let h = horizon as f64;
    let budget = (episodes + total_delay).max(1) as f64;
    match feedback {
        FeedbackMode::FullInfo => (1.0 / (h * budget.sqrt()), 0.0),
        FeedbackMode::Bandit => (1.0 / (h * budget.powf(2.0 / 3.0)), budget.powf(-1.0 / 3.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "mdp": {"kind": "random", "states": 4, "actions": 3, "horizon": 3},
        "costs": {"kind": "piecewise_switching", "period": 100},
        "delays": {"kind": "fixed", "d": 8},
        "learner": {"kind": "oppo", "feedback": "full_info", "dynamics": "known"},
        "episodes": 1000
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(SAMPLE).unwrap();
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.hindsight, HindsightMode::LogSpaced);
        assert_eq!(cfg.delta(), 0.1);
        assert_eq!(cfg.learner.label(), "oppo-full-known");
        let again: ExperimentConfig =
            serde_json::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let mut v: serde_json::Value = serde_json::from_str(SAMPLE).unwrap();
        v["episodes"] = 0.into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(SAMPLE).unwrap();
        v["learner"] =
            serde_json::json!({"kind": "blackbox", "feedback": "full_info", "dynamics": "known"});
        v["wrappers"] = serde_json::json!({"doubling": true});
        assert!(matches!(
            ExperimentConfig::from_json(&v.to_string()),
            Err(Error::Config(_))
        ));
        let mut v: serde_json::Value = serde_json::from_str(SAMPLE).unwrap();
        v["overrides"] = serde_json::json!({"delta": 1.5});
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(SAMPLE).unwrap();
        v["learner"]["kind"] = "sarsa".into();
        assert!(matches!(
            ExperimentConfig::from_json(&v.to_string()),
            Err(Error::Json(_))
        ));
    }

    #[test]
    fn default_rate_formulas() {
        let (eta, gamma) = default_rates(3, FeedbackMode::FullInfo, 90, 10);
        assert!((eta - 1.0 / 30.0).abs() < 1e-15);
        assert_eq!(gamma, 0.0);
        let (eta, gamma) = default_rates(2, FeedbackMode::Bandit, 960, 40);
        assert!((eta - 0.005).abs() < 1e-12);
        assert!((gamma - 0.1).abs() < 1e-12);
    }
}
