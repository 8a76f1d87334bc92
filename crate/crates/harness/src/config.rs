//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown keys are errors so typos do not pass silently.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use multion_core::agents::AgentKind;
use multion_core::env::{EnvConfig, SuccessMetric};
use multion_core::reward::RewardConfig;
use multion_learn::td3::TrainConfig;

use crate::error::{HarnessError, Result};

/// Where PSM agents get their category order from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsmSequence {
    /// The uniformly random order stored with each dataset episode.
    Dataset,
    /// The order in which the paired SAM agent actually found the targets.
    Realized,
}

impl FromStr for PsmSequence {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset" | "random" => Ok(PsmSequence::Dataset),
            "realized" => Ok(PsmSequence::Realized),
            _ => Err(HarnessError::Config(format!("psm_sequence must be dataset or realized, got {s:?}"))),
        }
    }
}

impl PsmSequence {
    fn as_str(self) -> &'static str {
        match self {
            PsmSequence::Dataset => "dataset",
            PsmSequence::Realized => "realized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub scene_dir: Option<PathBuf>,
    pub scene_width: usize,
    pub scene_height: usize,
    pub rooms: usize,
    pub instances: RangeInclusive<usize>,
    pub scenes: usize,
    pub episodes_per_scene: usize,
    pub k: RangeInclusive<usize>,
    /// Step budget per k; k=2 → 600, k=3 → 1000 unless overridden.
    pub max_steps: BTreeMap<usize, usize>,
    pub success_radius: f64,
    pub agents: Vec<AgentKind>,
    pub psm_sequence: PsmSequence,
    pub psm_opportunistic: bool,
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub checkpoints: BTreeMap<AgentKind, PathBuf>,
    pub budgets: BTreeMap<usize, Vec<usize>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene_dir: None,
            scene_width: 16,
            scene_height: 16,
            rooms: 3,
            instances: 1..=2,
            scenes: 5,
            episodes_per_scene: 40,
            k: 2..=2,
            max_steps: BTreeMap::from([(1, 400), (2, 600), (3, 1000), (4, 800)]),
            success_radius: 1.0,
            agents: vec![AgentKind::SamOracle],
            psm_sequence: PsmSequence::Dataset,
            psm_opportunistic: false,
            env: EnvConfig::default(),
            reward: RewardConfig::default(),
            train: TrainConfig::default(),
            checkpoints: BTreeMap::new(),
            budgets: BTreeMap::from([(2, vec![200, 300, 600]), (3, vec![300, 500, 1000])]),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| HarnessError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(HarnessError::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

/// `"2"`, `"2..3"` or `"2-3"`.
fn parse_range(key: &str, value: &str) -> Result<RangeInclusive<usize>> {
    let (lo, hi) = match value.split_once("..").or_else(|| value.split_once('-')) {
        Some((a, b)) => (parse(key, a.trim())?, parse(key, b.trim())?),
        None => {
            let v = parse(key, value)?;
            (v, v)
        }
    };
    if lo > hi {
        return Err(HarnessError::Config(format!("{key}: empty range {value:?}")));
    }
    Ok(lo..=hi)
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn range_text(r: &RangeInclusive<usize>) -> String {
    if r.start() == r.end() {
        r.start().to_string()
    } else {
        format!("{}..{}", r.start(), r.end())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(k) = key.strip_prefix("max_steps_") {
            self.max_steps.insert(parse(key, k)?, parse(key, value)?);
            return Ok(());
        }
        if let Some(k) = key.strip_prefix("budgets_") {
            self.budgets.insert(parse(key, k)?, parse_list(key, value)?);
            return Ok(());
        }
        if let Some(agent) = key.strip_prefix("checkpoint.") {
            let kind: AgentKind = agent.parse()?;
            self.checkpoints.insert(kind, PathBuf::from(value));
            return Ok(());
        }
        if let Some(k) = key.strip_prefix("reward.") {
            let r = &mut self.reward;
            match k {
                "r_subgoal" => r.r_subgoal = parse(key, value)?,
                "alpha_process" => r.alpha_process = parse(key, value)?,
                "cnr" => r.cnr = parse(key, value)?,
                "alpha_semexp" => r.alpha_semexp = parse(key, value)?,
                "strict_decrease" => r.strict_decrease = parse_bool(key, value)?,
                _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
            }
            return Ok(());
        }
        if let Some(k) = key.strip_prefix("train.") {
            return self.set_train(key, k, value);
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "scene_dir" => self.scene_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "scene_width" => self.scene_width = parse(key, value)?,
            "scene_height" => self.scene_height = parse(key, value)?,
            "rooms" => self.rooms = parse(key, value)?,
            "instances" => self.instances = parse_range(key, value)?,
            "scenes" => self.scenes = parse(key, value)?,
            "episodes_per_scene" => self.episodes_per_scene = parse(key, value)?,
            "k" => self.k = parse_range(key, value)?,
            "success_radius" => self.success_radius = parse(key, value)?,
            "agents" => {
                self.agents = value.split(',').map(|a| a.trim().parse()).collect::<Result<_, _>>()?;
            }
            "psm_sequence" => self.psm_sequence = value.parse()?,
            "psm_opportunistic" => self.psm_opportunistic = parse_bool(key, value)?,
            "success_metric" => {
                self.env.success_metric = value.parse().map_err(|e| HarnessError::Config(format!("{key}: {e}")))?;
            }
            "require_seen" => self.env.require_seen = parse_bool(key, value)?,
            "fov_degrees" => self.env.fov_degrees = parse(key, value)?,
            "sensor_range" => self.env.sensor_range = parse(key, value)?,
            "map_side" => self.env.map_side = if value == "auto" { None } else { Some(parse(key, value)?) },
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    fn set_train(&mut self, key: &str, k: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match k {
            "gamma" => t.gamma = parse(key, value)?,
            "tau" => t.tau = parse(key, value)?,
            "actor_period" => t.actor_period = parse(key, value)?,
            "expl_noise" => t.expl_noise = parse(key, value)?,
            "expl_noise_final" => t.expl_noise_final = parse(key, value)?,
            "target_noise" => t.target_noise = parse(key, value)?,
            "target_noise_clip" => t.target_noise_clip = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "shift_pad" => t.shift_pad = parse(key, value)?,
            "goal_period" => t.goal_period = parse(key, value)?,
            "episodes" => t.episodes = parse(key, value)?,
            "replay_capacity" => t.replay_capacity = parse(key, value)?,
            "warmup_transitions" => t.warmup_transitions = parse(key, value)?,
            "updates_per_transition" => t.updates_per_transition = parse(key, value)?,
            "optimizer" => t.optimizer = value.to_string(),
            "map_side" => t.net.map_side = parse(key, value)?,
            "conv_channels" => t.net.conv_channels = parse(key, value)?,
            "conv_layers" => t.net.conv_layers = parse(key, value)?,
            "embed" => t.net.embed = parse(key, value)?,
            "hidden" => t.net.hidden = parse(key, value)?,
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.scene_width < 4 || self.scene_height < 4 {
            return bad("generated scenes need at least 4 cells per side");
        }
        if self.rooms == 0 || *self.instances.start() == 0 {
            return bad("rooms and instances must be positive");
        }
        if self.scenes == 0 || self.episodes_per_scene == 0 {
            return bad("scenes and episodes_per_scene must be positive");
        }
        if *self.k.start() == 0 || *self.k.end() > 16 {
            return bad("k must lie in 1..=16");
        }
        for k in self.k.clone() {
            match self.max_steps.get(&k) {
                Some(&m) if m > 0 => {}
                _ => return Err(HarnessError::Config(format!("no positive max_steps_{k}"))),
            }
        }
        if !(self.success_radius >= 0.0) {
            return bad("success_radius must be non-negative");
        }
        if self.agents.is_empty() {
            return bad("at least one agent is required");
        }
        for (k, b) in &self.budgets {
            if b.is_empty() || b.contains(&0) {
                return Err(HarnessError::Config(format!("budgets_{k} must be a nonempty list of positive budgets")));
            }
        }
        self.train.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn max_steps_for(&self, k: usize) -> Result<usize> {
        self.max_steps.get(&k).copied().ok_or_else(|| HarnessError::Config(format!("no max_steps_{k}")))
    }

    /// Canonical text form; `from_text(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("write to string");
        kv("seed", self.seed.to_string());
        if let Some(d) = &self.scene_dir {
            kv("scene_dir", d.display().to_string());
        }
        kv("scene_width", self.scene_width.to_string());
        kv("scene_height", self.scene_height.to_string());
        kv("rooms", self.rooms.to_string());
        kv("instances", range_text(&self.instances));
        kv("scenes", self.scenes.to_string());
        kv("episodes_per_scene", self.episodes_per_scene.to_string());
        kv("k", range_text(&self.k));
        for (k, m) in &self.max_steps {
            kv(&format!("max_steps_{k}"), m.to_string());
        }
        kv("success_radius", self.success_radius.to_string());
        kv("agents", self.agents.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(","));
        kv("psm_sequence", self.psm_sequence.as_str().into());
        kv("psm_opportunistic", self.psm_opportunistic.to_string());
        kv(
            "success_metric",
            match self.env.success_metric {
                SuccessMetric::Geodesic => "geodesic".into(),
                SuccessMetric::Euclidean => "euclidean".into(),
            },
        );
        kv("require_seen", self.env.require_seen.to_string());
        kv("fov_degrees", self.env.fov_degrees.to_string());
        kv("sensor_range", self.env.sensor_range.to_string());
        kv("map_side", self.env.map_side.map_or("auto".into(), |m| m.to_string()));
        let r = &self.reward;
        kv("reward.r_subgoal", r.r_subgoal.to_string());
        kv("reward.alpha_process", r.alpha_process.to_string());
        kv("reward.cnr", r.cnr.to_string());
        kv("reward.alpha_semexp", r.alpha_semexp.to_string());
        kv("reward.strict_decrease", r.strict_decrease.to_string());
        let t = &self.train;
        for (k, v) in [
            ("gamma", t.gamma.to_string()),
            ("tau", t.tau.to_string()),
            ("actor_period", t.actor_period.to_string()),
            ("expl_noise", t.expl_noise.to_string()),
            ("expl_noise_final", t.expl_noise_final.to_string()),
            ("target_noise", t.target_noise.to_string()),
            ("target_noise_clip", t.target_noise_clip.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lr", t.lr.to_string()),
            ("shift_pad", t.shift_pad.to_string()),
            ("goal_period", t.goal_period.to_string()),
            ("episodes", t.episodes.to_string()),
            ("replay_capacity", t.replay_capacity.to_string()),
            ("warmup_transitions", t.warmup_transitions.to_string()),
            ("updates_per_transition", t.updates_per_transition.to_string()),
            ("optimizer", t.optimizer.clone()),
            ("map_side", t.net.map_side.to_string()),
            ("conv_channels", t.net.conv_channels.to_string()),
            ("conv_layers", t.net.conv_layers.to_string()),
            ("embed", t.net.embed.to_string()),
            ("hidden", t.net.hidden.to_string()),
        ] {
            kv(&format!("train.{k}"), v);
        }
        for (agent, path) in &self.checkpoints {
            kv(&format!("checkpoint.{agent}"), path.display().to_string());
        }
        for (k, b) in &self.budgets {
            kv(&format!("budgets_{k}"), b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        }
        s
    }
}
