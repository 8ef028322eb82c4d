//! Seeded batches and their success statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EpisodeConfig;
use super::episode::{run_episode_in, EpisodeReport};
use crate::envs::{make_scene, Scene};
use crate::error::{contract, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    pub error: Option<String>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub scene: String,
    pub episodes: Vec<EpisodeSummary>,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean steps over successful episodes.
    pub mean_steps: Option<f64>,
    /// 1.96·sd/√m over successful episodes.
    pub ci_half_width: Option<f64>,
}

impl BatchSummary {
    pub fn line(&self) -> String {
        match (self.mean_steps, self.ci_half_width) {
            (Some(m), Some(h)) => {
                format!(
                    "{}: {}/{} succeeded, steps {:.1} ± {:.1}",
                    self.scene, self.successes, self.trials, m, h
                )
            }
            _ => format!(
                "{}: {}/{} succeeded",
                self.scene, self.successes, self.trials
            ),
        }
    }
}

/// Mean and 95% half-width of a sample (sample standard deviation).
pub fn mean_ci(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Some((mean, 1.96 * var.sqrt() / m.sqrt()))
}

/// Aggregates reports in the order given.
pub fn summarize(scene: &str, reports: &[EpisodeReport]) -> BatchSummary {
    let episodes: Vec<EpisodeSummary> = reports
        .iter()
        .map(|r| EpisodeSummary {
            seed: r.config.seed,
            success: r.success,
            steps: r.steps,
            error: r.error.clone(),
            wall_clock_s: r.wall_clock_s,
        })
        .collect();
    summarize_episodes(scene, episodes)
}

pub fn summarize_episodes(scene: &str, episodes: Vec<EpisodeSummary>) -> BatchSummary {
    let steps: Vec<f64> = episodes
        .iter()
        .filter(|e| e.success)
        .map(|e| e.steps as f64)
        .collect();
    let trials = episodes.len();
    let ci = mean_ci(&steps);
    BatchSummary {
        scene: scene.to_string(),
        trials,
        successes: steps.len(),
        success_rate: if trials == 0 {
            0.0
        } else {
            steps.len() as f64 / trials as f64
        },
        mean_steps: ci.map(|c| c.0),
        ci_half_width: ci.map(|c| c.1),
        episodes,
    }
}

/// Runs one episode per seed in parallel; reports come back in seed order.
pub fn run_batch_in(
    cfg: &EpisodeConfig,
    scene: &Scene,
    seeds: &[u64],
) -> Result<(Vec<EpisodeReport>, BatchSummary)> {
    if seeds.is_empty() {
        return Err(contract("a batch needs at least one seed"));
    }
    let reports: Vec<EpisodeReport> = seeds
        .par_iter()
        .map(|s| run_episode_in(&cfg.clone().with_seed(*s), scene))
        .collect();
    let summary = summarize(&scene.name, &reports);
    Ok((reports, summary))
}

pub fn run_batch(cfg: &EpisodeConfig, seeds: &[u64]) -> Result<(Vec<EpisodeReport>, BatchSummary)> {
    let scene = make_scene(&cfg.scene)?;
    run_batch_in(cfg, &scene, seeds)
}

/// Parses `a..b` (exclusive), `a..=b` or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || crate::error::Error::Config(format!("bad seed list `{text}`"));
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let (b, inclusive) = match b.strip_prefix('=') {
            Some(rest) => (rest, true),
            None => (b, false),
        };
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        let seeds: Vec<u64> = if inclusive {
            (a..=b).collect()
        } else {
            (a..b).collect()
        };
        if seeds.is_empty() {
            return Err(bad());
        }
        return Ok(seeds);
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(seed: u64, success: bool, steps: usize) -> EpisodeSummary {
        EpisodeSummary {
            seed,
            success,
            steps,
            error: None,
            wall_clock_s: 0.0,
        }
    }

    #[test]
    fn identical_successes_have_zero_width() {
        let s = summarize_episodes(
            "x",
            vec![ep(0, true, 40), ep(1, true, 40), ep(2, false, 750)],
        );
        assert_eq!(s.successes, 2);
        assert_eq!(s.mean_steps, Some(40.0));
        assert_eq!(s.ci_half_width, Some(0.0));
    }

    #[test]
    fn no_successes_have_no_statistics() {
        let s = summarize_episodes("x", vec![ep(0, false, 750), ep(1, false, 750)]);
        assert_eq!(s.success_rate, 0.0);
        assert!(s.mean_steps.is_none() && s.ci_half_width.is_none());
    }

    #[test]
    fn ci_formula() {
        let (m, h) = mean_ci(&[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(m, 20.0);
        assert!((h - 1.96 * 10.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("0..=2").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
