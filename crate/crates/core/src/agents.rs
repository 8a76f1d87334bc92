//! Scripted agents and the goal-following local policy they share.
//!
//! Goal-driven agents pick a long-term goal cell and walk to it with
//! [`LocalPlanner`], which descends a fast-marching field computed on the
//! agent's own map (unexplored cells count as free). Moves are restricted to
//! the four axis directions so the agent always stays on cell centres.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{Action, EnvError, Episode, EpisodeState, Heading, Pose, SemanticMap, OBSTACLE_PLANE};
use crate::geodesy::{distance_field_fmm, DistanceField, GeodesyError};
use crate::reward::{exact_sum, reward_terms, RewardConfig, RewardError, RewardKind, RewardTerms};
use crate::scene::{CategoryId, Cell, Traversable};

/// Default number of timesteps between long-term goal decisions.
pub const GOAL_PERIOD: usize = 25;
const HEADING_TOLERANCE: u32 = 15;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("goal {0:?} is unreachable on the current map")]
    ReplanNeeded(Cell),
    #[error("no reachable instance of the remaining categories")]
    Unreachable,
    #[error("episode has no target sequence")]
    NoSequence,
    #[error("unknown agent kind {0:?}")]
    UnknownKind(String),
    #[error("agent failed: {0}")]
    Other(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LongTermGoal {
    pub cell: Cell,
    pub issued_at: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentKind {
    Random,
    SamOracle,
    PsmOracle,
    LearnedSam,
    LearnedPsm,
    LearnedMSemExp,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::Random,
        AgentKind::SamOracle,
        AgentKind::PsmOracle,
        AgentKind::LearnedSam,
        AgentKind::LearnedPsm,
        AgentKind::LearnedMSemExp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Random => "random",
            AgentKind::SamOracle => "sam-oracle",
            AgentKind::PsmOracle => "psm-oracle",
            AgentKind::LearnedSam => "learned-sam",
            AgentKind::LearnedPsm => "learned-psm",
            AgentKind::LearnedMSemExp => "learned-msemexp",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, AgentKind::LearnedSam | AgentKind::LearnedPsm | AgentKind::LearnedMSemExp)
    }

    /// Whether episodes run with a pre-set category sequence.
    pub fn is_sequenced(self) -> bool {
        matches!(self, AgentKind::PsmOracle | AgentKind::LearnedPsm)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| AgentError::UnknownKind(s.to_string()))
    }
}

pub trait Agent {
    /// Called once after [`Episode::reset`].
    fn reset(&mut self, episode: &Episode);
    fn act(&mut self, episode: &Episode) -> Result<Action, AgentError>;
}

/// Uniform over the three motion primitives; never stops.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn next_action(&mut self) -> Action {
        Action::MOVES[self.rng.random_range(0..3)]
    }
}

impl Agent for RandomAgent {
    fn reset(&mut self, _: &Episode) {}

    fn act(&mut self, _: &Episode) -> Result<Action, AgentError> {
        Ok(self.next_action())
    }
}

/// The agent's belief grid restricted to the scene extent: known obstacles
/// block, everything else (including unexplored cells) is traversable.
pub struct MapGrid<'a> {
    map: &'a SemanticMap,
    width: usize,
    height: usize,
}

impl<'a> MapGrid<'a> {
    pub fn new(map: &'a SemanticMap, width: usize, height: usize) -> Self {
        assert!(width <= map.side() && height <= map.side());
        Self { map, width, height }
    }
}

impl Traversable for MapGrid<'_> {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn is_free(&self, c: Cell) -> bool {
        self.map.get(OBSTACLE_PLANE, c) == 0
    }
}

fn axis_heading(from: Cell, to: Cell) -> u32 {
    match (to.x as isize - from.x as isize, to.y as isize - from.y as isize) {
        (1, 0) => 0,
        (0, -1) => 90,
        (-1, 0) => 180,
        (0, 1) => 270,
        d => unreachable!("not an axis step: {d:?}"),
    }
}

/// Primitive that rotates `heading` toward `target_deg` or advances.
pub fn steer(heading: Heading, target_deg: u32) -> Action {
    let err = (target_deg + 360 - heading.degrees()) % 360;
    if err <= HEADING_TOLERANCE || err >= 360 - HEADING_TOLERANCE {
        Action::MoveForward
    } else if err <= 180 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    }
}

/// Next cell of steepest descent over the four axis neighbours.
fn descend<G: Traversable>(grid: &G, field: &DistanceField, here: Cell, heading: Heading) -> Option<Cell> {
    let current = field.get(here);
    let mut best: Option<(f64, bool, Cell)> = None;
    for (dx, dy) in [(1isize, 0isize), (0, -1), (-1, 0), (0, 1)] {
        let (nx, ny) = (here.x as isize + dx, here.y as isize + dy);
        if !grid.in_bounds(nx, ny) {
            continue;
        }
        let n = Cell::new(nx as usize, ny as usize);
        let v = field.get(n);
        if !grid.is_free(n) || !(v < current) {
            continue;
        }
        let aligned = axis_heading(here, n) == heading.degrees();
        let better = match best {
            None => true,
            Some((bv, ba, _)) => v < bv || (v == bv && aligned && !ba),
        };
        if better {
            best = Some((v, aligned, n));
        }
    }
    best.map(|b| b.2)
}

/// One primitive toward `goal` on the planning grid; `Stop` means the agent
/// is within one cell of the goal.
pub fn local_policy_step<G: Traversable>(grid: &G, pose: &Pose, cell_size: f64, goal: Cell) -> Result<Action, AgentError> {
    let mut planner = LocalPlanner::default();
    planner.step_on(grid, usize::MAX, pose, cell_size, goal)
}

/// [`local_policy_step`] with the field cached until the goal or the set of
/// known obstacles changes.
#[derive(Debug, Clone, Default)]
pub struct LocalPlanner {
    cache: Option<(Cell, usize, DistanceField)>,
}

impl LocalPlanner {
    pub fn step(&mut self, map: &SemanticMap, width: usize, height: usize, pose: &Pose, cell_size: f64, goal: Cell) -> Result<Action, AgentError> {
        let obstacles = map.plane(OBSTACLE_PLANE).iter().filter(|&&v| v != 0).count();
        self.step_on(&MapGrid::new(map, width, height), obstacles, pose, cell_size, goal)
    }

    fn step_on<G: Traversable>(&mut self, grid: &G, version: usize, pose: &Pose, cell_size: f64, goal: Cell) -> Result<Action, AgentError> {
        let here = pose.cell(cell_size);
        if here.chebyshev(goal) <= 1 {
            return Ok(Action::Stop);
        }
        if goal.x >= grid.width() || goal.y >= grid.height() || !grid.is_free(goal) {
            return Err(AgentError::ReplanNeeded(goal));
        }
        let stale = !matches!(&self.cache, Some((g, v, _)) if *g == goal && *v == version && version != usize::MAX);
        if stale {
            let field = distance_field_fmm(grid, &[goal], cell_size)?;
            self.cache = Some((goal, version, field));
        }
        let field = &self.cache.as_ref().expect("field cached").2;
        if !field.get(here).is_finite() {
            return Err(AgentError::ReplanNeeded(goal));
        }
        let next = descend(grid, field, here, pose.heading).ok_or(AgentError::ReplanNeeded(goal))?;
        Ok(steer(pose.heading, axis_heading(here, next)))
    }
}

/// Chooses long-term goal cells for a [`GoalDriver`].
pub trait GoalSource {
    fn reset(&mut self, _episode: &Episode) {}
    fn propose(&mut self, episode: &Episode) -> Result<Cell, AgentError>;
}

/// Nearest instance (ground-truth geodesic) among `categories`; ties go to
/// the lower category id, then the row-major smaller cell.
pub fn nearest_instance(episode: &Episode, categories: &[CategoryId]) -> Result<Cell, AgentError> {
    let scene = episode.scene();
    let here = episode.agent_cell();
    let mut best: Option<(f64, CategoryId, Cell)> = None;
    for (i, o) in scene.objects().iter().enumerate() {
        if !categories.contains(&o.category) {
            continue;
        }
        let d = episode.fields().instance_field(i).get(here);
        if !d.is_finite() {
            continue;
        }
        let key = (d, o.category, o.cell);
        if best.is_none_or(|b| key.0 < b.0 || (key.0 == b.0 && (key.1, key.2) < (b.1, b.2))) {
            best = Some(key);
        }
    }
    best.map(|b| b.2).ok_or(AgentError::Unreachable)
}

/// Greedy sequence-agnostic oracle: always heads for the nearest remaining target.
#[derive(Debug, Clone, Default)]
pub struct SamOracle;

impl GoalSource for SamOracle {
    fn propose(&mut self, episode: &Episode) -> Result<Cell, AgentError> {
        nearest_instance(episode, &episode.state().remaining)
    }
}

/// Pre-sequenced oracle: nearest instance of the current sequence category.
#[derive(Debug, Clone, Default)]
pub struct PsmOracle;

impl GoalSource for PsmOracle {
    fn propose(&mut self, episode: &Episode) -> Result<Cell, AgentError> {
        let current = episode.sequence_cursor().ok_or(AgentError::NoSequence)?;
        nearest_instance(episode, &[current])
    }
}

/// Runs a [`GoalSource`] through the local policy, re-issuing goals every
/// `period` steps, on arrival, when the goal becomes unreachable, or after a
/// sub-goal is credited.
#[derive(Debug, Clone)]
pub struct GoalDriver<S> {
    source: S,
    period: usize,
    planner: LocalPlanner,
    goal: Option<LongTermGoal>,
    credited: usize,
    issued: usize,
}

impl<S: GoalSource> GoalDriver<S> {
    pub fn new(source: S) -> Self {
        Self::with_period(source, GOAL_PERIOD)
    }

    pub fn with_period(source: S, period: usize) -> Self {
        assert!(period >= 1);
        Self { source, period, planner: LocalPlanner::default(), goal: None, credited: 0, issued: 0 }
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    pub fn source_mut(&mut self) -> &mut S {
        &mut self.source
    }

    pub fn goal(&self) -> Option<LongTermGoal> {
        self.goal
    }

    /// Number of goals issued since reset.
    pub fn issued(&self) -> usize {
        self.issued
    }

    fn issue(&mut self, episode: &Episode) -> Result<Cell, AgentError> {
        let cell = self.source.propose(episode)?;
        self.goal = Some(LongTermGoal { cell, issued_at: episode.state().t });
        self.issued += 1;
        Ok(cell)
    }
}

impl<S: GoalSource> Agent for GoalDriver<S> {
    fn reset(&mut self, episode: &Episode) {
        self.source.reset(episode);
        self.goal = None;
        self.credited = episode.state().found_log.len();
        self.issued = 0;
        self.planner = LocalPlanner::default();
    }

    fn act(&mut self, episode: &Episode) -> Result<Action, AgentError> {
        let state = episode.state();
        let scene = episode.scene();
        let expired = match self.goal {
            None => true,
            Some(g) => state.t >= g.issued_at + self.period || state.found_log.len() != self.credited,
        };
        self.credited = state.found_log.len();
        let mut fresh = expired;
        let mut goal = match (expired, self.goal) {
            (false, Some(g)) => g.cell,
            _ => self.issue(episode)?,
        };
        loop {
            match self.planner.step(episode.map(), scene.width(), scene.height(), &state.pose, scene.cell_size(), goal) {
                Ok(Action::Stop) | Err(AgentError::ReplanNeeded(_)) => {
                    if fresh {
                        // a brand-new goal that is already reached or blocked: look around instead
                        return Ok(Action::TurnLeft);
                    }
                    goal = self.issue(episode)?;
                    fresh = true;
                }
                Ok(a) => return Ok(a),
                Err(e) => return Err(e),
            }
        }
    }
}

/// One executed timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub action: Action,
    pub pose: Pose,
    pub collided: bool,
    pub found: Vec<CategoryId>,
    pub terms: RewardTerms,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub final_state: EpisodeState,
    pub targets: usize,
    /// Categories credited at reset, before any action.
    pub found_at_reset: usize,
    pub steps: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn total_reward(&self) -> f64 {
        exact_sum(&self.steps.iter().map(|s| s.reward).collect::<Vec<_>>())
    }

    pub fn sub_goal_reward(&self) -> f64 {
        exact_sum(&self.steps.iter().map(|s| s.terms.sub_goal).collect::<Vec<_>>())
    }

    pub fn success(&self) -> bool {
        self.final_state.remaining.is_empty()
    }
}

/// Per-step reward: snapshot the creditable categories before acting and
/// evaluate the same set afterwards.
pub fn step_with_reward(episode: &mut Episode, action: Action, kind: RewardKind, cfg: &RewardConfig) -> Result<StepRecord, AgentError> {
    let active = episode.active_targets();
    let prev = episode.dtg_snapshot(&active)?;
    let events = episode.step(action)?;
    let curr = episode.dtg_snapshot(&active)?;
    let terms = reward_terms(kind, &prev, &curr, events.categories_found.len(), cfg)?;
    Ok(StepRecord {
        t: episode.state().t,
        action,
        pose: episode.state().pose,
        collided: events.collided,
        found: events.categories_found,
        terms,
        reward: terms.total(),
    })
}

/// Runs `agent` until the episode terminates.
pub fn run_episode<A: Agent + ?Sized>(mut episode: Episode, agent: &mut A, kind: RewardKind, cfg: &RewardConfig) -> Result<EpisodeRecord, AgentError> {
    agent.reset(&episode);
    let found_at_reset = episode.state().found_log.len();
    let mut steps = Vec::new();
    while !episode.is_done() {
        let action = agent.act(&episode)?;
        steps.push(step_with_reward(&mut episode, action, kind, cfg)?);
    }
    Ok(EpisodeRecord { targets: episode.spec().targets.len(), found_at_reset, final_state: episode.state().clone(), steps })
}
