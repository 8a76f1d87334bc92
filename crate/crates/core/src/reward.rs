//! Per-step rewards for the sequence-agnostic learner and the
//! semantic-exploration baseline.
//!
//! ```text
//! reward    = R_subgoal + alpha_process * R_process + cnr
//! R_subgoal = r_subgoal per category credited this step
//! d_t       = sum_i (dtg_{i,t-1} - dtg_{i,t})       over remaining categories
//! R_process = n / N + d_t   if n >= 1 categories got strictly closer
//!           = d_t           otherwise
//! R_semexp  = alpha_semexp * d_t
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::CategoryId;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("distance snapshots cover different categories")]
    MismatchedCategories,
    #[error("snapshot has no remaining category")]
    EmptySnapshot,
    #[error("category {0} has an infinite distance")]
    InfiniteDistance(CategoryId),
    #[error("macro-step has no per-step rewards")]
    EmptyMacroStep,
    #[error("invalid reward config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub r_subgoal: f64,
    pub alpha_process: f64,
    pub cnr: f64,
    pub alpha_semexp: f64,
    /// Count only strictly decreasing distances toward `n`.
    pub strict_decrease: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { r_subgoal: 2.0, alpha_process: 0.1, cnr: -0.01, alpha_semexp: 1.0, strict_decrease: true }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.r_subgoal > 0.0) {
            return Err(RewardError::InvalidConfig("r_subgoal must be positive"));
        }
        if !(self.alpha_process > 0.0) {
            return Err(RewardError::InvalidConfig("alpha_process must be positive"));
        }
        if !(self.cnr < 0.0) {
            return Err(RewardError::InvalidConfig("cnr must be negative"));
        }
        Ok(())
    }
}

/// Which reward drives an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardKind {
    SequenceAgnostic,
    SemExp,
}

/// Distances to the nearest instance of each remaining category at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtgSnapshot {
    /// Sorted by category id.
    entries: Vec<(CategoryId, f64)>,
}

impl DtgSnapshot {
    pub fn new(mut entries: Vec<(CategoryId, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        Self { entries }
    }

    pub fn entries(&self) -> &[(CategoryId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The three additive terms of one step's reward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub sub_goal: f64,
    pub process: f64,
    pub cnr: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.sub_goal + self.process + self.cnr
    }
}

fn deltas(prev: &DtgSnapshot, curr: &DtgSnapshot) -> Result<Vec<f64>, RewardError> {
    if prev.len() != curr.len() {
        return Err(RewardError::MismatchedCategories);
    }
    if prev.is_empty() {
        return Err(RewardError::EmptySnapshot);
    }
    prev.entries
        .iter()
        .zip(&curr.entries)
        .map(|(&(ca, a), &(cb, b))| {
            if ca != cb {
                return Err(RewardError::MismatchedCategories);
            }
            if !a.is_finite() {
                return Err(RewardError::InfiniteDistance(ca));
            }
            if !b.is_finite() {
                return Err(RewardError::InfiniteDistance(cb));
            }
            Ok(a - b)
        })
        .collect()
}

pub fn step_reward_terms(
    prev: &DtgSnapshot,
    curr: &DtgSnapshot,
    subgoals_reached: usize,
    cfg: &RewardConfig,
) -> Result<RewardTerms, RewardError> {
    let deltas = deltas(prev, curr)?;
    let big_n = deltas.len() as f64;
    let d_t = exact_sum(&deltas);
    let n = deltas.iter().filter(|&&d| if cfg.strict_decrease { d > 0.0 } else { d >= 0.0 }).count();
    let r_process = if n >= 1 { n as f64 / big_n + d_t } else { d_t };
    Ok(RewardTerms {
        sub_goal: subgoals_reached as f64 * cfg.r_subgoal,
        process: cfg.alpha_process * r_process,
        cnr: cfg.cnr,
    })
}

pub fn step_reward(prev: &DtgSnapshot, curr: &DtgSnapshot, subgoals_reached: usize, cfg: &RewardConfig) -> Result<f64, RewardError> {
    step_reward_terms(prev, curr, subgoals_reached, cfg).map(|t| t.total())
}

pub fn semexp_reward(prev: &DtgSnapshot, curr: &DtgSnapshot, cfg: &RewardConfig) -> Result<f64, RewardError> {
    let deltas = deltas(prev, curr)?;
    Ok(cfg.alpha_semexp * exact_sum(&deltas))
}

/// Dispatches on [`RewardKind`]; the baseline reward has no sub-goal or CNR terms.
pub fn reward_terms(
    kind: RewardKind,
    prev: &DtgSnapshot,
    curr: &DtgSnapshot,
    subgoals_reached: usize,
    cfg: &RewardConfig,
) -> Result<RewardTerms, RewardError> {
    match kind {
        RewardKind::SequenceAgnostic => step_reward_terms(prev, curr, subgoals_reached, cfg),
        RewardKind::SemExp => Ok(RewardTerms { process: semexp_reward(prev, curr, cfg)?, ..Default::default() }),
    }
}

/// Reward for one long-term-goal decision: the sum of its per-step rewards.
pub fn macro_reward(per_step: &[f64]) -> Result<f64, RewardError> {
    if per_step.is_empty() {
        return Err(RewardError::EmptyMacroStep);
    }
    Ok(exact_sum(per_step))
}

/// Correctly rounded floating-point sum (Shewchuk's partials), so the result
/// does not depend on summation order.
pub fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in values {
        let mut x = v;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // round the partials to a single double (see Python's math.fsum)
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}
