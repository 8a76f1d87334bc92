//! Episode scoring and aggregation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::EpisodeRecord;
use crate::reward::exact_sum;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("negative or non-finite path length {0}")]
    BadPathLength(f64),
    #[error("invalid optimal length g = {0}")]
    BadOptimum(f64),
    #[error("found {found} of {k} targets")]
    BadCounts { found: usize, k: usize },
    #[error("cannot aggregate an empty list")]
    Empty,
}

/// What the metrics need to know about a finished episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub k: usize,
    pub found: usize,
    pub timesteps: usize,
    pub path_length: f64,
}

impl EpisodeResult {
    pub fn success(&self) -> bool {
        self.found == self.k
    }
}

impl From<&EpisodeRecord> for EpisodeResult {
    fn from(r: &EpisodeRecord) -> Self {
        Self {
            k: r.targets,
            found: r.final_state.found_log.len(),
            timesteps: r.final_state.t,
            path_length: r.final_state.path_length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub success: bool,
    pub sub_success: f64,
    pub timesteps: usize,
    pub path_length: f64,
    pub g: f64,
    pub gspl: f64,
}

/// `success · g / max(g, p)`; a zero-length optimum met with a zero-length path scores 1.
pub fn gspl(success: bool, g: f64, p: f64) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = g.max(p);
    if denom == 0.0 {
        1.0
    } else {
        g / denom
    }
}

pub fn score_episode(result: &EpisodeResult, g: f64) -> Result<EpisodeMetrics, MetricsError> {
    if !(result.path_length >= 0.0) || !result.path_length.is_finite() {
        return Err(MetricsError::BadPathLength(result.path_length));
    }
    if !(g >= 0.0) || !g.is_finite() {
        return Err(MetricsError::BadOptimum(g));
    }
    if result.k == 0 || result.found > result.k {
        return Err(MetricsError::BadCounts { found: result.found, k: result.k });
    }
    let success = result.success();
    Ok(EpisodeMetrics {
        success,
        sub_success: result.found as f64 / result.k as f64,
        timesteps: result.timesteps,
        path_length: result.path_length,
        g,
        gspl: gspl(success, g, result.path_length),
    })
}

/// Percentages over all episodes; timestep and path means over successes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub successes: usize,
    pub success_pct: f64,
    pub sub_success_pct: f64,
    pub gspl_pct: f64,
    pub mean_timesteps: Option<f64>,
    pub mean_path_length: Option<f64>,
}

fn mean(values: &[f64]) -> f64 {
    exact_sum(values) / values.len() as f64
}

pub fn aggregate(metrics: &[EpisodeMetrics]) -> Result<Summary, MetricsError> {
    if metrics.is_empty() {
        return Err(MetricsError::Empty);
    }
    let ok: Vec<&EpisodeMetrics> = metrics.iter().filter(|m| m.success).collect();
    let pct = |f: &dyn Fn(&EpisodeMetrics) -> f64| 100.0 * mean(&metrics.iter().map(f).collect::<Vec<_>>());
    let over_ok = |f: &dyn Fn(&EpisodeMetrics) -> f64| (!ok.is_empty()).then(|| mean(&ok.iter().map(|m| f(m)).collect::<Vec<_>>()));
    Ok(Summary {
        episodes: metrics.len(),
        successes: ok.len(),
        success_pct: 100.0 * ok.len() as f64 / metrics.len() as f64,
        sub_success_pct: pct(&|m| m.sub_success),
        gspl_pct: pct(&|m| m.gspl),
        mean_timesteps: over_ok(&|m| m.timesteps as f64),
        mean_path_length: over_ok(&|m| m.path_length),
    })
}
