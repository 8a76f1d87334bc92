//! Training of learned agents on a dataset disjoint from evaluation data.

use std::sync::Arc;

use multion_core::agents::AgentKind;
use multion_learn::agent::Variant;
use multion_learn::checkpoint::Policy;
use multion_learn::train::{train, LogRow};

use crate::config::RunConfig;
use crate::dataset::{make_dataset, EpisodeDataset};
use crate::error::{HarnessError, Result};

/// Mixed into the master seed so training scenes never coincide with the
/// evaluation scenes drawn from the same config.
pub const TRAIN_SALT: u64 = 0x7472_6169_6e00_0001;

/// One episode per generated scene, `train.episodes` of them; with a scene
/// directory the episodes are spread over its scenes.
pub fn training_dataset(cfg: &RunConfig) -> Result<EpisodeDataset> {
    let mut c = cfg.clone();
    c.seed = cfg.seed ^ TRAIN_SALT;
    if c.scene_dir.is_some() {
        c.episodes_per_scene = cfg.train.episodes;
    } else {
        c.scenes = cfg.train.episodes;
        c.episodes_per_scene = 1;
    }
    make_dataset(&c)
}

pub struct Trained {
    pub policy: Policy,
    pub log: Vec<LogRow>,
    pub transitions: usize,
    pub updates: u64,
}

pub fn train_agent(cfg: &RunConfig, kind: AgentKind, data: &EpisodeDataset, progress: impl FnMut(&LogRow)) -> Result<Trained> {
    let variant = Variant::from_kind(kind).ok_or_else(|| HarnessError::Config(format!("{kind} is not a learned agent")))?;
    let scenes = data.load_scenes()?;
    if let Some(f) = scenes.fields.first() {
        let catalog = f.scene().catalog();
        let net = &cfg.train.net;
        if net.in_channels != catalog.len() + 5 || net.enc_width != catalog.encoding_width() {
            return Err(HarnessError::Config(format!(
                "network expects {} planes and encoding width {}, scenes give {} and {}",
                net.in_channels,
                net.enc_width,
                catalog.len() + 5,
                catalog.encoding_width()
            )));
        }
    }
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let n = data.episodes.len();
    // specs are validated up front so the closure below cannot fail
    let specs = (0..n)
        .map(|i| {
            let seq = variant.sequenced().then(|| data.episodes[i].sequence.clone());
            let mut spec = data.spec(&scenes, i, seq)?;
            spec.opportunistic = cfg.psm_opportunistic;
            Ok(spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let out = train(train_cfg.clone(), variant, &cfg.env, &cfg.reward, |i, _| specs[i % n].clone(), progress)?;
    let updates = out.learner.critic_updates();
    let policy = Policy { variant, train: train_cfg, arch: Arc::new(out.learner.arch.clone()), params: Arc::new(out.learner.online.clone()) };
    Ok(Trained { policy, log: out.log, transitions: out.transitions, updates })
}
