//! Episode execution for the evaluation, paired and ablation protocols.

use std::collections::BTreeMap;
use std::path::Path;

use multion_core::agents::{run_episode, Agent, AgentKind, EpisodeRecord, GoalDriver, PsmOracle, RandomAgent, SamOracle};
use multion_core::env::{EnvConfig, Episode, EpisodeSpec};
use multion_core::geodesy::{optimal_multigoal_length, MultiGoalQuery};
use multion_core::metrics::{score_episode, EpisodeMetrics, EpisodeResult};
use multion_core::reward::{RewardConfig, RewardKind};
use multion_core::scene::CategoryId;
use multion_learn::agent::{learned_agent, Variant};
use multion_learn::checkpoint::{self, Policy};

use crate::config::{PsmSequence, RunConfig};
use crate::dataset::{EpisodeDataset, LoadedScenes};
use crate::error::{HarnessError, Result};

pub struct RunOptions {
    pub seed: u64,
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub psm_opportunistic: bool,
    pub policies: BTreeMap<AgentKind, Policy>,
}

impl RunOptions {
    /// Options for `agents`, loading a checkpoint for every learned one.
    pub fn from_config(cfg: &RunConfig, agents: &[AgentKind]) -> Result<Self> {
        let mut policies = BTreeMap::new();
        for &kind in agents.iter().filter(|k| k.is_learned()) {
            let path = cfg.checkpoints.get(&kind).ok_or_else(|| HarnessError::Config(format!("agent {kind} needs checkpoint.{kind} = <path>")))?;
            policies.insert(kind, load_policy(kind, path)?);
        }
        Ok(Self { seed: cfg.seed, env: cfg.env.clone(), reward: cfg.reward.clone(), psm_opportunistic: cfg.psm_opportunistic, policies })
    }
}

pub fn load_policy(kind: AgentKind, path: &Path) -> Result<Policy> {
    let policy = checkpoint::load(path)?;
    if Some(policy.variant) != Variant::from_kind(kind) {
        return Err(HarnessError::Config(format!("{} holds a {:?} policy, not {kind}", path.display(), policy.variant)));
    }
    Ok(policy)
}

pub fn reward_kind(kind: AgentKind) -> RewardKind {
    Variant::from_kind(kind).map_or(RewardKind::SequenceAgnostic, |v| v.reward_kind())
}

/// Per-episode seed for stochastic agents, independent of run order.
pub fn episode_seed(master: u64, index: usize) -> u64 {
    master ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn build_agent(kind: AgentKind, opts: &RunOptions, index: usize) -> Result<Box<dyn Agent>> {
    Ok(match kind {
        AgentKind::Random => Box::new(RandomAgent::new(episode_seed(opts.seed, index))),
        AgentKind::SamOracle => Box::new(GoalDriver::new(SamOracle)),
        AgentKind::PsmOracle => Box::new(GoalDriver::new(PsmOracle)),
        learned => {
            let p = opts.policies.get(&learned).ok_or_else(|| HarnessError::Config(format!("no checkpoint loaded for {learned}")))?;
            Box::new(learned_agent(p.arch.clone(), p.params.clone(), p.train.goal_period))
        }
    })
}

/// Length of the shortest path from the start that comes within the
/// success radius of one instance of every target category.
pub fn optimum(spec: &EpisodeSpec) -> Result<f64> {
    let scene = spec.scene.scene();
    let cs = scene.cell_size();
    let query = MultiGoalQuery {
        start: spec.start.cell(cs),
        goal_sets: spec.targets.iter().map(|&t| scene.instances_of(t)).collect(),
        radius: spec.success_radius,
    };
    Ok(optimal_multigoal_length(scene, &query, cs)?)
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub agent: AgentKind,
    pub index: usize,
    pub id: String,
    pub scene: usize,
    pub k: usize,
    pub sequence: Option<Vec<CategoryId>>,
    pub max_steps: usize,
    pub record: EpisodeRecord,
    pub metrics: EpisodeMetrics,
}

impl Outcome {
    /// Categories in the order they were credited.
    pub fn found_order(&self) -> Vec<CategoryId> {
        self.record.final_state.found_log.iter().map(|f| f.category).collect()
    }
}

/// Runs episode `index` with `kind`. Sequenced agents use `sequence`, or the
/// dataset's random order when it is `None`.
pub fn run_one(
    ds: &EpisodeDataset,
    scenes: &LoadedScenes,
    index: usize,
    kind: AgentKind,
    opts: &RunOptions,
    sequence: Option<Vec<CategoryId>>,
) -> Result<Outcome> {
    let entry = &ds.episodes[index];
    let sequence = kind.is_sequenced().then(|| sequence.unwrap_or_else(|| entry.sequence.clone()));
    let mut spec = ds.spec(scenes, index, sequence.clone())?;
    spec.opportunistic = opts.psm_opportunistic;
    let g = optimum(&spec)?;
    let max_steps = spec.max_steps;
    let episode = Episode::reset(spec, opts.env.clone())?;
    let mut agent = build_agent(kind, opts, index)?;
    let record = run_episode(episode, agent.as_mut(), reward_kind(kind), &opts.reward)?;
    let metrics = score_episode(&EpisodeResult::from(&record), g)?;
    Ok(Outcome { agent: kind, index, id: entry.id.clone(), scene: entry.scene, k: entry.targets.len(), sequence, max_steps, record, metrics })
}

/// Every agent on every episode, agent-major in the given order.
pub fn run_eval(ds: &EpisodeDataset, scenes: &LoadedScenes, agents: &[AgentKind], opts: &RunOptions) -> Result<Vec<Outcome>> {
    let mut out = Vec::with_capacity(agents.len() * ds.episodes.len());
    for &kind in agents {
        for i in 0..ds.episodes.len() {
            out.push(run_one(ds, scenes, i, kind, opts, None)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Pair {
    pub sam: Outcome,
    pub psm: Outcome,
}

#[derive(Debug, Clone)]
pub struct PairedRun {
    pub sam_kind: AgentKind,
    pub psm_kind: AgentKind,
    pub mode: PsmSequence,
    pub pairs: Vec<Pair>,
    /// Episode ids where the sequence-agnostic agent failed.
    pub excluded: Vec<String>,
}

/// Runs the sequence-agnostic agent on each episode and, when it succeeds,
/// the sequenced agent on the identical spec.
pub fn run_paired(
    ds: &EpisodeDataset,
    scenes: &LoadedScenes,
    sam_kind: AgentKind,
    psm_kind: AgentKind,
    mode: PsmSequence,
    opts: &RunOptions,
) -> Result<PairedRun> {
    if sam_kind.is_sequenced() || !psm_kind.is_sequenced() {
        return Err(HarnessError::Config(format!("paired runs need a sequence-agnostic and a sequenced agent, got {sam_kind} and {psm_kind}")));
    }
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    for i in 0..ds.episodes.len() {
        let sam = run_one(ds, scenes, i, sam_kind, opts, None)?;
        if !sam.metrics.success {
            excluded.push(sam.id.clone());
            continue;
        }
        let sequence = match mode {
            PsmSequence::Realized => Some(sam.found_order()),
            PsmSequence::Dataset => None,
        };
        let psm = run_one(ds, scenes, i, psm_kind, opts, sequence)?;
        pairs.push(Pair { sam, psm });
    }
    Ok(PairedRun { sam_kind, psm_kind, mode, pairs, excluded })
}

/// Success and sub-success of a recorded trajectory cut off after `budget` steps.
pub fn truncate(outcome: &Outcome, budget: usize) -> Result<(bool, f64)> {
    if budget > outcome.max_steps {
        return Err(HarnessError::Budget { budget, recorded: outcome.max_steps });
    }
    let found = outcome.record.final_state.found_log.iter().filter(|f| f.timestep <= budget).count();
    Ok((found == outcome.k, found as f64 / outcome.k as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub agent: AgentKind,
    pub k: usize,
    pub budget: usize,
    pub episodes: usize,
    pub success_pct: f64,
    pub sub_success_pct: f64,
}

/// Re-scores recorded trajectories at every budget of their k.
pub fn run_ablation(outcomes: &[Outcome], budgets: &BTreeMap<usize, Vec<usize>>) -> Result<Vec<AblationRow>> {
    let mut groups: BTreeMap<(AgentKind, usize), Vec<&Outcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry((o.agent, o.k)).or_default().push(o);
    }
    let mut rows = Vec::new();
    for ((agent, k), group) in groups {
        let grid = budgets.get(&k).ok_or_else(|| HarnessError::Config(format!("no budgets_{k} configured")))?;
        let mut grid = grid.clone();
        grid.sort_unstable();
        for budget in grid {
            let mut succ = Vec::with_capacity(group.len());
            let mut sub = Vec::with_capacity(group.len());
            for o in &group {
                let (s, f) = truncate(o, budget)?;
                succ.push(if s { 1.0 } else { 0.0 });
                sub.push(f);
            }
            let n = group.len() as f64;
            rows.push(AblationRow {
                agent,
                k,
                budget,
                episodes: group.len(),
                success_pct: 100.0 * multion_core::reward::exact_sum(&succ) / n,
                sub_success_pct: 100.0 * multion_core::reward::exact_sum(&sub) / n,
            });
        }
    }
    Ok(rows)
}
