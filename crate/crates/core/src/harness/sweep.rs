use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LearnerSpec, OutputSpec, WrapperSpec};
use super::experiment::run_experiment;
use crate::delay::ScheduleKind;
use crate::error::{Error, Result};

/// Environment variable that caps the number of worker threads.
pub const WORKERS_ENV: &str = "DMDP_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLearner {
    #[serde(default)]
    pub name: Option<String>,
    pub learner: LearnerSpec,
    #[serde(default)]
    pub wrappers: WrapperSpec,
}

/// A grid over `K`, delay schedules and learners. Empty axes fall back to
/// the base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub episodes: Vec<usize>,
    #[serde(default)]
    pub delays: Vec<ScheduleKind>,
    #[serde(default)]
    pub learners: Vec<SweepLearner>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub label: String,
    pub config: ExperimentConfig,
}

impl SweepConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.base.resolve_paths(base);
        if let Some(dir) = &mut cfg.output.dir {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn cells(&self) -> Vec<SweepCell> {
        let episodes = if self.episodes.is_empty() {
            vec![self.base.episodes]
        } else {
            self.episodes.clone()
        };
        let delays = if self.delays.is_empty() {
            vec![self.base.delays.clone()]
        } else {
            self.delays.clone()
        };
        let learners = if self.learners.is_empty() {
            vec![SweepLearner {
                name: None,
                learner: self.base.learner.clone(),
                wrappers: self.base.wrappers,
            }]
        } else {
            self.learners.clone()
        };
        let mut out = Vec::new();
        for l in &learners {
            for d in &delays {
                for &k in &episodes {
                    let mut config = self.base.clone();
                    config.episodes = k;
                    config.delays = d.clone();
                    config.learner = l.learner.clone();
                    config.wrappers = l.wrappers;
                    if let Some(seeds) = &self.seeds {
                        config.seeds = seeds.clone();
                    }
                    out.push(SweepCell {
                        index: out.len(),
                        label: l.name.clone().unwrap_or_else(|| l.learner.label()),
                        config,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_regret: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub label: String,
    pub episodes: usize,
    pub delays: ScheduleKind,
    pub seeds: Vec<SeedResult>,
    /// Mean and standard error over the seeds that finished.
    pub mean_final_regret: Option<f64>,
    pub stderr_final_regret: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// Mean and standard error (`s/√n`, zero for a single value).
pub fn mean_stderr(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

/// Worker count from `DMDP_WORKERS`, if set to a positive integer.
pub fn worker_override() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

/// Run `f` inside a pool honoring `DMDP_WORKERS`.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match worker_override() {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Run every `(cell, seed)` pair and aggregate per cell. Failures are
/// recorded in the affected rows; the sweep itself only fails on an empty
/// grid.
pub fn sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    let cells = cfg.cells();
    if cells.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    let jobs: Vec<(usize, u64)> = cells
        .iter()
        .flat_map(|c| c.config.seeds.iter().map(move |&s| (c.index, s)))
        .collect();
    let results: Vec<SeedResult> = with_workers(|| {
        jobs.par_iter()
            .map(
                |&(cell, seed)| match run_experiment(&cells[cell].config, seed) {
                    Ok(rec) => SeedResult {
                        seed,
                        final_regret: rec.final_regret(),
                        error: None,
                    },
                    Err(e) => SeedResult {
                        seed,
                        final_regret: None,
                        error: Some(e.to_string()),
                    },
                },
            )
            .collect()
    })?;
    let mut per_cell: Vec<Vec<SeedResult>> = vec![Vec::new(); cells.len()];
    for ((cell, _), r) in jobs.iter().zip(results) {
        per_cell[*cell].push(r);
    }
    let rows = cells
        .iter()
        .zip(per_cell)
        .map(|(c, seeds)| {
            let finals: Vec<f64> = seeds.iter().filter_map(|s| s.final_regret).collect();
            let stats = mean_stderr(&finals);
            let error = seeds.iter().find_map(|s| s.error.clone());
            SweepRow {
                cell: c.index,
                label: c.label.clone(),
                episodes: c.config.episodes,
                delays: c.config.delays.clone(),
                seeds,
                mean_final_regret: stats.map(|s| s.0),
                stderr_final_regret: stats.map(|s| s.1),
                error,
            }
        })
        .collect();
    Ok(SweepTable { rows })
}

#[derive(Debug, Serialize)]
struct SummaryLine<'a> {
    cell: usize,
    label: &'a str,
    episodes: usize,
    delays: String,
    seeds: usize,
    mean_final_regret: Option<f64>,
    stderr_final_regret: Option<f64>,
    error: Option<&'a str>,
}

impl SweepTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(SummaryLine {
                cell: r.cell,
                label: &r.label,
                episodes: r.episodes,
                delays: serde_json::to_string(&r.delays)?,
                seeds: r.seeds.len(),
                mean_final_regret: r.mean_final_regret,
                stderr_final_regret: r.stderr_final_regret,
                error: r.error.as_deref(),
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Write `sweep.csv` and `sweep.json` into `dir`.
    pub fn emit(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("sweep.csv");
        let json = dir.join("sweep.json");
        self.write_csv(&csv)?;
        self.write_json(&json)?;
        Ok(vec![csv, json])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        assert_eq!(mean_stderr(&[]), None);
        assert_eq!(mean_stderr(&[2.0]), Some((2.0, 0.0)));
        let (m, se) = mean_stderr(&[1.0, 2.0, 6.0]).unwrap();
        assert!((m - 3.0).abs() < 1e-15);
        assert!((se - (7.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
