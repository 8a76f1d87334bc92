//! Learned long-term-goal policy plugged into the shared goal driver.

use std::sync::Arc;

use multion_core::agents::{AgentError, AgentKind, GoalDriver, GoalSource};
use multion_core::env::Episode;
use multion_core::reward::RewardKind;
use multion_core::scene::{Cell, Traversable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::{action_to_cell, map_tensor, snap_to_free, to_real};
use crate::model::{Arch, NetParams};

/// The three learned agents share every network; they differ in the target
/// encoding they see and the reward they are trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Sam,
    Psm,
    MSemExp,
}

impl Variant {
    pub fn reward_kind(self) -> RewardKind {
        match self {
            Variant::MSemExp => RewardKind::SemExp,
            _ => RewardKind::SequenceAgnostic,
        }
    }

    /// Whether episodes carry a category sequence (single active target slot).
    pub fn sequenced(self) -> bool {
        self == Variant::Psm
    }

    pub fn kind(self) -> AgentKind {
        match self {
            Variant::Sam => AgentKind::LearnedSam,
            Variant::Psm => AgentKind::LearnedPsm,
            Variant::MSemExp => AgentKind::LearnedMSemExp,
        }
    }

    pub fn from_kind(kind: AgentKind) -> Option<Self> {
        match kind {
            AgentKind::LearnedSam => Some(Variant::Sam),
            AgentKind::LearnedPsm => Some(Variant::Psm),
            AgentKind::LearnedMSemExp => Some(Variant::MSemExp),
            _ => None,
        }
    }
}

/// A goal decision as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub obs: Vec<u8>,
    pub enc: Vec<f32>,
    pub action: [f32; 2],
    pub cell: Cell,
    pub t: usize,
}

#[derive(Debug, Clone)]
enum Exploration {
    Greedy,
    Uniform(ChaCha8Rng),
    Gaussian(ChaCha8Rng, f64),
}

/// Goal source backed by the actor network.
#[derive(Debug, Clone)]
pub struct LearnedGoals {
    arch: Arc<Arch>,
    params: Arc<NetParams<f32>>,
    exploration: Exploration,
    last: Option<Decision>,
}

impl LearnedGoals {
    pub fn greedy(arch: Arc<Arch>, params: Arc<NetParams<f32>>) -> Self {
        Self { arch, params, exploration: Exploration::Greedy, last: None }
    }

    pub fn uniform(arch: Arc<Arch>, params: Arc<NetParams<f32>>, seed: u64) -> Self {
        Self { arch, params, exploration: Exploration::Uniform(ChaCha8Rng::seed_from_u64(seed)), last: None }
    }

    pub fn gaussian(arch: Arc<Arch>, params: Arc<NetParams<f32>>, std: f64, seed: u64) -> Self {
        Self { arch, params, exploration: Exploration::Gaussian(ChaCha8Rng::seed_from_u64(seed), std), last: None }
    }

    pub fn set_params(&mut self, params: Arc<NetParams<f32>>) {
        self.params = params;
    }

    /// Switches a uniform-exploration source to Gaussian noise, keeping its RNG stream.
    pub fn set_gaussian(&mut self, std: f64) {
        let rng = match std::mem::replace(&mut self.exploration, Exploration::Greedy) {
            Exploration::Uniform(r) | Exploration::Gaussian(r, _) => r,
            Exploration::Greedy => ChaCha8Rng::seed_from_u64(0),
        };
        self.exploration = Exploration::Gaussian(rng, std);
    }

    pub fn take_decision(&mut self) -> Option<Decision> {
        self.last.take()
    }

    fn check_episode(&self, episode: &Episode) -> Result<(), AgentError> {
        let cfg = &self.arch.cfg;
        let map = episode.map();
        if map.planes() != cfg.in_channels {
            return Err(AgentError::Other(format!("network expects {} map planes, episode has {}", cfg.in_channels, map.planes())));
        }
        let width = episode.scene().catalog().encoding_width();
        if width != cfg.enc_width {
            return Err(AgentError::Other(format!("network expects encoding width {}, catalog has {width}", cfg.enc_width)));
        }
        Ok(())
    }
}

impl GoalSource for LearnedGoals {
    fn reset(&mut self, _episode: &Episode) {
        self.last = None;
    }

    fn propose(&mut self, episode: &Episode) -> Result<Cell, AgentError> {
        self.check_episode(episode)?;
        let cfg = &self.arch.cfg;
        let obs = episode.observe();
        let tensor = map_tensor(obs.map, cfg.map_side);
        let enc = obs.remaining_encoding;
        let action = match &mut self.exploration {
            Exploration::Uniform(rng) => [rng.random::<f32>(), rng.random::<f32>()],
            other => {
                let a = self
                    .arch
                    .act(&self.params, &to_real::<f32>(&tensor), &enc, 1)
                    .map_err(|e| AgentError::Other(e.to_string()))?;
                let mut a = [a[0], a[1]];
                if let Exploration::Gaussian(rng, std) = other {
                    if *std > 0.0 {
                        let normal = Normal::new(0.0, *std).expect("valid std");
                        for v in a.iter_mut() {
                            let eps: f64 = normal.sample(rng);
                            *v = (*v as f64 + eps).clamp(0.0, 1.0) as f32;
                        }
                    }
                }
                a
            }
        };
        let scene = episode.scene();
        let raw = action_to_cell(action, obs.map.side(), scene.width(), scene.height());
        let cell = snap_to_free(obs.map, scene.width(), scene.height(), raw, episode.agent_cell()).unwrap_or(episode.agent_cell());
        self.last = Some(Decision { obs: tensor, enc, action, cell, t: episode.state().t });
        Ok(cell)
    }
}

/// Evaluation-time learned agent (no exploration noise).
pub fn learned_agent(arch: Arc<Arch>, params: Arc<NetParams<f32>>, goal_period: usize) -> GoalDriver<LearnedGoals> {
    GoalDriver::with_period(LearnedGoals::greedy(arch, params), goal_period)
}
