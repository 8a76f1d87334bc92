//! Clipped double-Q actor-critic updates with target networks, delayed actor
//! updates and target-policy smoothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{random_offset, shift_with};
use crate::model::{build, Arch, ModelError, NetConfig, NetParams};
use crate::optim::Adam;
use crate::real::Real;
use crate::replay::Transition;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    /// Critic updates per actor update.
    pub actor_period: usize,
    /// Exploration noise std on normalized goals, decayed linearly to `expl_noise_final`.
    pub expl_noise: f64,
    pub expl_noise_final: f64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub shift_pad: usize,
    pub goal_period: usize,
    pub episodes: usize,
    pub replay_capacity: usize,
    /// Transitions collected with uniform random goals before learning starts.
    pub warmup_transitions: usize,
    pub updates_per_transition: usize,
    pub optimizer: String,
    pub seed: u64,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.01,
            actor_period: 2,
            expl_noise: 0.2,
            expl_noise_final: 0.02,
            target_noise: 0.1,
            target_noise_clip: 0.3,
            batch_size: 64,
            lr: 1e-4,
            shift_pad: 4,
            goal_period: 25,
            episodes: 1000,
            replay_capacity: 50_000,
            warmup_transitions: 500,
            updates_per_transition: 1,
            optimizer: "adam".into(),
            seed: 0,
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(TrainError::Config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("tau", self.tau)?;
        unit("lr", self.lr)?;
        for (name, v) in [("actor_period", self.actor_period), ("goal_period", self.goal_period), ("batch_size", self.batch_size), ("replay_capacity", self.replay_capacity)] {
            if v < 1 {
                return Err(TrainError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.expl_noise < 0.0 || self.expl_noise_final < 0.0 || self.target_noise < 0.0 || self.target_noise_clip < 0.0 {
            return Err(TrainError::Config("noise scales must be non-negative".into()));
        }
        if self.optimizer != "adam" {
            return Err(TrainError::Config(format!("unsupported optimizer {:?}", self.optimizer)));
        }
        self.net.validate()?;
        Ok(())
    }

    /// Exploration std for training episode `ep`.
    pub fn noise_at(&self, ep: usize) -> f64 {
        let frac = if self.episodes <= 1 { 1.0 } else { ep as f64 / (self.episodes - 1) as f64 };
        self.expl_noise + (self.expl_noise_final - self.expl_noise) * frac.min(1.0)
    }
}

/// Sample-major training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub size: usize,
    pub obs: Vec<T>,
    pub enc: Vec<T>,
    pub action: Vec<T>,
    pub reward: Vec<T>,
    pub steps: Vec<u32>,
    pub next_obs: Vec<T>,
    pub next_enc: Vec<T>,
    pub done: Vec<T>,
}

impl<T: Real> Batch<T> {
    /// Stacks transitions, shifting each sample's current and next map by the same offset.
    pub fn from_transitions<R: Rng>(items: &[&Transition], planes: usize, side: usize, pad: usize, rng: &mut R) -> Self {
        let real = |b: &u8| if *b != 0 { T::one() } else { T::zero() };
        let mut batch = Batch {
            size: items.len(),
            obs: Vec::new(),
            enc: Vec::new(),
            action: Vec::new(),
            reward: Vec::new(),
            steps: Vec::new(),
            next_obs: Vec::new(),
            next_enc: Vec::new(),
            done: Vec::new(),
        };
        for t in items {
            let (ox, oy) = random_offset(pad, rng);
            batch.obs.extend(shift_with(&t.obs, planes, side, pad, ox, oy).iter().map(real));
            batch.next_obs.extend(shift_with(&t.next_obs, planes, side, pad, ox, oy).iter().map(real));
            batch.enc.extend(t.enc.iter().map(|&v| T::of(v as f64)));
            batch.next_enc.extend(t.next_enc.iter().map(|&v| T::of(v as f64)));
            batch.action.extend(t.action.iter().map(|&v| T::of(v as f64)));
            batch.reward.push(T::of(t.reward));
            batch.steps.push(t.steps);
            batch.done.push(if t.done { T::one() } else { T::zero() });
        }
        batch
    }
}

/// `y = r + γ·(1 − done)·min(q1, q2)`.
pub fn clipped_target<T: Real>(reward: T, gamma: T, done: T, q1: T, q2: T) -> T {
    reward + gamma * (T::one() - done) * q1.min(q2)
}

#[derive(Debug, Clone)]
pub struct Td3<T> {
    pub cfg: TrainConfig,
    pub arch: Arch,
    pub online: NetParams<T>,
    pub target: NetParams<T>,
    critic_opt: [Adam<T>; 4],
    actor_opt: [Adam<T>; 2],
    rng: ChaCha8Rng,
    critic_updates: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}

impl<T: Real> Td3<T> {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let (arch, online) = build::<T>(&cfg.net, cfg.seed)?;
        Ok(Self::from_parts(cfg, arch, online))
    }

    pub fn from_parts(cfg: TrainConfig, arch: Arch, online: NetParams<T>) -> Self {
        let lr = cfg.lr;
        let critic_opt = [
            Adam::new(&online.trunk, lr),
            Adam::new(&online.critic_head, lr),
            Adam::new(&online.q1, lr),
            Adam::new(&online.q2, lr),
        ];
        let actor_opt = [Adam::new(&online.actor_head, lr), Adam::new(&online.actor, lr)];
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7d3_7d3);
        Self { target: online.clone(), cfg, arch, online, critic_opt, actor_opt, rng, critic_updates: 0 }
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    /// Bootstrapped regression targets using the target networks and
    /// smoothed target actions.
    pub fn critic_targets(&mut self, batch: &Batch<T>) -> Result<Vec<T>, TrainError> {
        let n = batch.size;
        let mut next_a = self.arch.act(&self.target, &batch.next_obs, &batch.next_enc, n)?;
        if self.cfg.target_noise > 0.0 {
            let normal = Normal::new(0.0, self.cfg.target_noise).expect("valid std");
            let clip = self.cfg.target_noise_clip;
            for a in next_a.iter_mut() {
                let eps: f64 = normal.sample(&mut self.rng);
                *a = (*a + T::of(eps.clamp(-clip, clip))).max(T::zero()).min(T::one());
            }
        }
        let (q1, q2) = self.arch.q_values(&self.target, &batch.next_obs, &batch.next_enc, &next_a, n)?;
        // discounting per primitive step keeps short and long decisions on one clock
        Ok((0..n)
            .map(|i| {
                let gamma = T::of(self.cfg.gamma.powi(batch.steps[i].max(1) as i32));
                clipped_target(batch.reward[i], gamma, batch.done[i], q1[i], q2[i])
            })
            .collect())
    }

    /// Regresses both Q-functions onto the clipped targets. The only update
    /// that touches the convolutional trunk.
    pub fn critic_update(&mut self, batch: &Batch<T>) -> Result<f64, TrainError> {
        if batch.size == 0 {
            return Err(TrainError::EmptyBatch);
        }
        let y = self.critic_targets(batch)?;
        let mut g = self.online.zeros_like();
        let loss = self.arch.critic_loss(&self.online, &batch.obs, &batch.enc, &batch.action, &y, batch.size, Some(&mut g))?;
        let [o_trunk, o_head, o_q1, o_q2] = &mut self.critic_opt;
        o_trunk.apply(&mut self.online.trunk, &g.trunk);
        o_head.apply(&mut self.online.critic_head, &g.critic_head);
        o_q1.apply(&mut self.online.q1, &g.q1);
        o_q2.apply(&mut self.online.q2, &g.q2);
        self.critic_updates += 1;
        Ok(loss.to_f64().unwrap_or(f64::NAN))
    }

    /// Ascends `Q₁(s, π(s))` through the actor head and MLP, then moves all
    /// target networks toward the online ones.
    pub fn actor_update(&mut self, batch: &Batch<T>) -> Result<f64, TrainError> {
        if batch.size == 0 {
            return Err(TrainError::EmptyBatch);
        }
        let mut g = self.online.zeros_like();
        let loss = self.arch.actor_loss(&self.online, &batch.obs, &batch.enc, batch.size, Some(&mut g))?;
        let [o_head, o_mlp] = &mut self.actor_opt;
        o_head.apply(&mut self.online.actor_head, &g.actor_head);
        o_mlp.apply(&mut self.online.actor, &g.actor);
        self.target.soft_update(&self.online, T::of(self.cfg.tau));
        Ok(loss.to_f64().unwrap_or(f64::NAN))
    }

    /// One critic update, plus an actor update every `actor_period` calls.
    pub fn update(&mut self, batch: &Batch<T>) -> Result<UpdateStats, TrainError> {
        let critic_loss = self.critic_update(batch)?;
        let actor_loss = if self.critic_updates % self.cfg.actor_period as u64 == 0 { Some(self.actor_update(batch)?) } else { None };
        Ok(UpdateStats { critic_loss, actor_loss })
    }
}
