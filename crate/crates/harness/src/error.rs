use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Dataset(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Agent(#[from] multion_core::agents::AgentError),
    #[error(transparent)]
    Env(#[from] multion_core::env::EnvError),
    #[error(transparent)]
    Geodesy(#[from] multion_core::geodesy::GeodesyError),
    #[error(transparent)]
    Scene(#[from] multion_core::scene::SceneError),
    #[error(transparent)]
    Metrics(#[from] multion_core::metrics::MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] multion_learn::checkpoint::CheckpointError),
    #[error(transparent)]
    Train(#[from] multion_learn::train::LoopError),
    #[error("budget {budget} exceeds the recorded maximum of {recorded} steps; re-run with a larger max_steps")]
    Budget { budget: usize, recorded: usize },
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Short class name printed with the error and mapped to the exit code.
    pub fn class(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Dataset(_) | HarnessError::Scene(_) => "dataset",
            HarnessError::Io { .. } => "io",
            HarnessError::Agent(_) | HarnessError::Env(_) | HarnessError::Geodesy(_) => "episode",
            HarnessError::Metrics(_) => "metrics",
            HarnessError::Checkpoint(_) => "checkpoint",
            HarnessError::Train(_) => "train",
            HarnessError::Budget { .. } => "budget",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.class() {
            "config" => 2,
            "dataset" => 3,
            "io" => 4,
            "episode" => 5,
            "metrics" => 6,
            "checkpoint" => 7,
            "train" => 8,
            _ => 9,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
