use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::config::{CostDistribution, CostSpec};
use crate::error::{Error, Result};
use crate::mdp::{CostFunction, CostSequence, Dims};

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in [0, 1], got {x}")))
    }
}

/// Build the `K` cost tables of an experiment.
pub fn generate_costs<R: Rng + ?Sized>(
    spec: &CostSpec,
    dims: Dims,
    episodes: usize,
    rng: &mut R,
) -> Result<CostSequence> {
    if episodes == 0 {
        return Err(Error::config("episodes must be positive"));
    }
    let n = dims.hsa();
    let tables: Vec<Vec<f64>> = match spec {
        CostSpec::IidStochastic {
            distribution,
            means,
            concentration,
        } => {
            let means = match means {
                Some(m) if m.len() != n => {
                    return Err(Error::config(format!(
                        "{} means given for {n} cells",
                        m.len()
                    )));
                }
                Some(m) => m.clone(),
                None => (0..n).map(|_| rng.random()).collect(),
            };
            for &m in &means {
                check_unit("cost mean", m)?;
            }
            match distribution {
                CostDistribution::Bernoulli => (0..episodes)
                    .map(|_| {
                        means
                            .iter()
                            .map(|&m| if rng.random::<f64>() < m { 1.0 } else { 0.0 })
                            .collect()
                    })
                    .collect(),
                CostDistribution::Beta => {
                    if !(*concentration > 0.0 && concentration.is_finite()) {
                        return Err(Error::config("Beta concentration must be positive"));
                    }
                    let draws: Vec<Option<Beta<f64>>> = means
                        .iter()
                        .map(|&m| {
                            if m <= 0.0 || m >= 1.0 {
                                None
                            } else {
                                Beta::new(m * concentration, (1.0 - m) * concentration).ok()
                            }
                        })
                        .collect();
                    (0..episodes)
                        .map(|_| {
                            means
                                .iter()
                                .zip(&draws)
                                .map(|(&m, b)| b.as_ref().map_or(m, |b| b.sample(rng)))
                                .collect()
                        })
                        .collect()
                }
            }
        }
        CostSpec::PiecewiseSwitching {
            period,
            gap,
            base_range,
        } => {
            if *period == 0 {
                return Err(Error::config("switching period must be positive"));
            }
            check_unit("gap", *gap)?;
            let (lo, hi) = *base_range;
            check_unit("base range", lo)?;
            check_unit("base range", hi)?;
            if lo > hi {
                return Err(Error::config("base range is reversed"));
            }
            let base: Vec<f64> = (0..n)
                .map(|_| lo + (hi - lo) * rng.random::<f64>())
                .collect();
            let offsets: Vec<usize> = (0..dims.horizon * dims.states)
                .map(|_| rng.random_range(0..dims.actions))
                .collect();
            (0..episodes)
                .map(|k| {
                    let phase = k / period;
                    let mut table = vec![0.0; n];
                    for h in 0..dims.horizon {
                        for s in 0..dims.states {
                            let favored = (offsets[dims.hs_index(h, s)] + phase) % dims.actions;
                            for a in 0..dims.actions {
                                let i = dims.sa_index(h, s, a);
                                let shift = if a == favored { -gap / 2.0 } else { gap / 2.0 };
                                table[i] = (base[i] + shift).clamp(0.0, 1.0);
                            }
                        }
                    }
                    table
                })
                .collect()
        }
        CostSpec::SinusoidalDrift { period, amplitude } => {
            if !(*period > 0.0 && period.is_finite()) {
                return Err(Error::config("drift period must be positive"));
            }
            if !(0.0..=0.5).contains(amplitude) {
                return Err(Error::config(format!(
                    "amplitude must lie in [0, 0.5], got {amplitude}"
                )));
            }
            let phases: Vec<f64> = (0..n).map(|_| TAU * rng.random::<f64>()).collect();
            (0..episodes)
                .map(|k| {
                    let t = TAU * (k + 1) as f64 / period;
                    phases
                        .iter()
                        .map(|&phi| (0.5 + amplitude * (t + phi).sin()).clamp(0.0, 1.0))
                        .collect()
                })
                .collect()
        }
        CostSpec::FixedFile { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let seq: CostSequence = serde_json::from_str(&text)?;
            dims.check_same(&seq.dims(), "cost file")?;
            if seq.len() < episodes {
                return Err(Error::config(format!(
                    "cost file holds {} episodes, {episodes} requested",
                    seq.len()
                )));
            }
            return seq.truncated(episodes);
        }
    };
    let episodes = tables
        .into_iter()
        .map(|t| CostFunction::new(dims, t))
        .collect::<Result<Vec<_>>>()?;
    CostSequence::new(dims, episodes)
}
