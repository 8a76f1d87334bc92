//! Episode loop that turns goal decisions into replay transitions and
//! interleaves network updates.

use std::fmt::Write as _;
use std::sync::Arc;

use multion_core::agents::{step_with_reward, Agent, AgentError, GoalDriver};
use multion_core::env::{EnvConfig, Episode, EpisodeSpec, EnvError, Termination};
use multion_core::reward::{exact_sum, RewardConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{LearnedGoals, Variant};
use crate::features::map_tensor;
use crate::replay::{ReplayBuffer, Transition};
use crate::td3::{Batch, Td3, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub episode: usize,
    pub ret: f64,
    pub success: bool,
    pub sub_success: f64,
    pub steps: usize,
    pub path_length: f64,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("episode,return,success,sub_success,steps,path_length\n");
    for r in rows {
        writeln!(s, "{},{:.9},{},{:.6},{},{:.6}", r.episode, r.ret, r.success as u8, r.sub_success, r.steps, r.path_length).expect("write to string");
    }
    s
}

pub struct TrainOutcome {
    pub learner: Td3<f32>,
    pub log: Vec<LogRow>,
    pub transitions: usize,
}

/// Trains one learned variant. `make_spec(i, rng)` supplies the `i`-th
/// training episode (for sequenced variants it must carry a sequence).
pub fn train<F>(
    cfg: TrainConfig,
    variant: Variant,
    env_cfg: &EnvConfig,
    reward_cfg: &RewardConfig,
    mut make_spec: F,
    mut progress: impl FnMut(&LogRow),
) -> Result<TrainOutcome, LoopError>
where
    F: FnMut(usize, &mut ChaCha8Rng) -> EpisodeSpec,
{
    let mut learner = Td3::<f32>::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let arch = Arc::new(learner.arch.clone());
    let mut params = Arc::new(learner.online.clone());
    let (planes, side) = (cfg.net.in_channels, cfg.net.map_side);
    let mut log = Vec::with_capacity(cfg.episodes);
    let mut transitions = 0usize;
    let kind = variant.reward_kind();

    for ep_idx in 0..cfg.episodes {
        let spec = make_spec(ep_idx, &mut rng);
        let mut episode = Episode::reset(spec, env_cfg.clone())?;
        let source = LearnedGoals::uniform(arch.clone(), params.clone(), cfg.seed ^ (ep_idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut driver = GoalDriver::with_period(source, cfg.goal_period);
        driver.reset(&episode);
        let mut pending: Option<(crate::agent::Decision, Vec<f64>)> = None;
        let mut rewards_all = Vec::new();

        while !episode.is_done() {
            let noise = cfg.noise_at(ep_idx);
            if replay.len() >= cfg.warmup_transitions {
                driver.source_mut().set_gaussian(noise);
            }
            let before = driver.issued();
            let action = driver.act(&episode)?;
            if driver.issued() != before {
                let decision = driver.source_mut().take_decision().expect("goal source records its decisions");
                if let Some((prev, rewards)) = pending.take() {
                    replay.push(Transition {
                        obs: prev.obs,
                        enc: prev.enc,
                        action: prev.action,
                        reward: exact_sum(&rewards),
                        steps: rewards.len() as u32,
                        next_obs: decision.obs.clone(),
                        next_enc: decision.enc.clone(),
                        done: false,
                    });
                    transitions += 1;
                    if learn(&mut learner, &replay, &cfg, planes, side, &mut sample_rng)? {
                        params = Arc::new(learner.online.clone());
                        driver.source_mut().set_params(params.clone());
                    }
                }
                pending = Some((decision, Vec::new()));
            }
            let rec = step_with_reward(&mut episode, action, kind, reward_cfg)?;
            rewards_all.push(rec.reward);
            if let Some((_, rewards)) = pending.as_mut() {
                rewards.push(rec.reward);
            }
        }

        let state = episode.state();
        if let Some((prev, rewards)) = pending.take() {
            let obs = episode.observe();
            replay.push(Transition {
                obs: prev.obs,
                enc: prev.enc,
                action: prev.action,
                reward: exact_sum(&rewards),
                steps: rewards.len() as u32,
                next_obs: map_tensor(obs.map, side),
                next_enc: obs.remaining_encoding,
                // time-limit endings still bootstrap
                done: state.terminated == Some(Termination::AllFound),
            });
            transitions += 1;
            if learn(&mut learner, &replay, &cfg, planes, side, &mut sample_rng)? {
                params = Arc::new(learner.online.clone());
            }
        }
        let k = episode.spec().targets.len();
        let row = LogRow {
            episode: ep_idx,
            ret: exact_sum(&rewards_all),
            success: state.remaining.is_empty(),
            sub_success: state.found_log.len() as f64 / k as f64,
            steps: state.t,
            path_length: state.path_length,
        };
        progress(&row);
        log.push(row);
    }
    Ok(TrainOutcome { learner, log, transitions })
}

fn learn(learner: &mut Td3<f32>, replay: &ReplayBuffer, cfg: &TrainConfig, planes: usize, side: usize, rng: &mut ChaCha8Rng) -> Result<bool, TrainError> {
    if replay.len() < cfg.warmup_transitions.max(cfg.batch_size) {
        return Ok(false);
    }
    for _ in 0..cfg.updates_per_transition {
        let items = replay.sample(cfg.batch_size, rng);
        let batch = Batch::<f32>::from_transitions(&items, planes, side, cfg.shift_pad, rng);
        learner.update(&batch)?;
    }
    Ok(cfg.updates_per_transition > 0)
}
