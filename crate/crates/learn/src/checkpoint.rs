//! Checkpoint container: a text magic line, one JSON header line with the
//! configs and tensor shapes, then every tensor as little-endian `f32`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Variant;
use crate::model::{build, Arch, ModelError, NetParams};
use crate::td3::TrainConfig;

const MAGIC: &str = "multion-checkpoint v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint file (bad magic line)")]
    Magic,
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("tensor {0} does not match the network layout")]
    Layout(String),
    #[error("checkpoint truncated")]
    Truncated,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A trained learned agent ready for evaluation.
#[derive(Debug, Clone)]
pub struct Policy {
    pub variant: Variant,
    pub train: TrainConfig,
    pub arch: Arc<Arch>,
    pub params: Arc<NetParams<f32>>,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    group: String,
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    variant: Variant,
    train: TrainConfig,
    tensors: Vec<TensorInfo>,
}

pub fn save(policy: &Policy, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (group, ps) in policy.params.groups() {
        for t in &ps.tensors {
            tensors.push(TensorInfo { group: group.to_string(), name: t.name.clone(), shape: t.shape.clone() });
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = Header { variant: policy.variant, train: policy.train.clone(), tensors };
    let json = serde_json::to_string(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut f = fs::File::create(path).map_err(io)?;
    writeln!(f, "{MAGIC}").map_err(io)?;
    writeln!(f, "{json}").map_err(io)?;
    f.write_all(&payload).map_err(io)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Policy, CheckpointError> {
    let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
    let mut r = BufReader::new(fs::File::open(path).map_err(io)?);
    let mut line = String::new();
    r.read_line(&mut line).map_err(io)?;
    if line.trim_end() != MAGIC {
        return Err(CheckpointError::Magic);
    }
    line.clear();
    r.read_line(&mut line).map_err(io)?;
    let header: Header = serde_json::from_str(line.trim_end()).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let (arch, mut params) = build::<f32>(&header.train.net, 0)?;
    let mut infos = header.tensors.iter();
    for (group, ps) in params.groups_mut() {
        for t in &mut ps.tensors {
            let info = infos.next().ok_or_else(|| CheckpointError::Layout(format!("{group}/{}", t.name)))?;
            if info.group != group || info.name != t.name || info.shape != t.shape {
                return Err(CheckpointError::Layout(format!("{}/{}", info.group, info.name)));
            }
            let mut buf = vec![0u8; t.data.len() * 4];
            r.read_exact(&mut buf).map_err(|_| CheckpointError::Truncated)?;
            for (v, chunk) in t.data.iter_mut().zip(buf.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            }
        }
    }
    if let Some(extra) = infos.next() {
        return Err(CheckpointError::Layout(format!("{}/{}", extra.group, extra.name)));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(io)?;
    if !rest.is_empty() {
        return Err(CheckpointError::Header("trailing bytes after tensors".into()));
    }
    Ok(Policy { variant: header.variant, train: header.train, arch: Arc::new(arch), params: Arc::new(params) })
}
