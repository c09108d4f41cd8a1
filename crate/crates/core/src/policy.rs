//! Policies that can fill a pursuer slot without being trained: scripted
//! pursuers, the uniform random baseline, and frozen checkpoints.

use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng as _;
use thiserror::Error;

use crate::config::EnvConfig;
use crate::nn::{ActorCritic, Checkpoint, CheckpointError};
use crate::rng::Rng;
use crate::scripted::{pursuer_action, ScriptedKind};
use crate::sim::WorldState;
use crate::teammate::{NahtModel, TeamShape, HISTORY_LEN, NAHT_KIND};

/// A frozen pursuer policy. Learned policies act with their mean action.
#[derive(Clone)]
pub enum Agent {
    Scripted(ScriptedKind),
    Random,
    Actor { id: String, net: Arc<ActorCritic<f32>> },
    Naht { id: String, net: Arc<NahtModel<f32>> },
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("unknown policy id `{0}`")]
    UnknownId(String),
    #[error("checkpoint {path}: {source}")]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error("policy `{id}` expects observations of length {expected}, environment gives {got}")]
    ObsDim { id: String, expected: usize, got: usize },
}

impl Agent {
    pub fn id(&self) -> String {
        match self {
            Agent::Scripted(ScriptedKind::Greedy) => "greedy".into(),
            Agent::Scripted(ScriptedKind::Vicsek) => "vicsek".into(),
            Agent::Scripted(ScriptedKind::Evader) => "evader:potential".into(),
            Agent::Random => "random".into(),
            Agent::Actor { id, .. } | Agent::Naht { id, .. } => id.clone(),
        }
    }

    pub fn actor(id: impl Into<String>, net: ActorCritic<f32>) -> Self {
        Agent::Actor { id: id.into(), net: Arc::new(net) }
    }

    /// Observation length the policy was built for, if it has one.
    pub fn obs_len(&self) -> Option<usize> {
        match self {
            Agent::Actor { net, .. } => Some(net.actor.input_dim()),
            Agent::Naht { net, .. } => Some(net.shape().layout.len()),
            _ => None,
        }
    }

    pub fn check_env(&self, cfg: &EnvConfig) -> Result<(), PolicyError> {
        let got = crate::sim::ObsLayout::new(cfg).len();
        match self.obs_len() {
            Some(expected) if expected != got => Err(PolicyError::ObsDim { id: self.id(), expected, got }),
            _ => Ok(()),
        }
    }

    pub fn needs_window(&self) -> bool {
        matches!(self, Agent::Naht { .. })
    }

    /// Unclamped steer for pursuer `slot`.
    pub fn act(&self, cfg: &EnvConfig, state: &WorldState, slot: usize, obs: &[f32], window: &[f32], rng: &mut Rng) -> f64 {
        match self {
            Agent::Scripted(k) => pursuer_action(*k, cfg, state, slot).steer(),
            Agent::Random => rng.random_range(-1.0..=1.0),
            Agent::Actor { net, .. } => net.mean_action(obs).map(|a| a[0] as f64).unwrap_or(0.0),
            Agent::Naht { net, .. } => net.mean_action(obs, window).map(f64::from).unwrap_or(0.0),
        }
    }
}

/// Resolve a policy id: `greedy`, `vicsek`, `random`, `evader:potential`,
/// `ckpt:<path>`, or a bare path to a checkpoint archive.
pub fn load_agent(id: &str) -> Result<Agent, PolicyError> {
    match id {
        "greedy" => Ok(Agent::Scripted(ScriptedKind::Greedy)),
        "vicsek" => Ok(Agent::Scripted(ScriptedKind::Vicsek)),
        "evader:potential" => Ok(Agent::Scripted(ScriptedKind::Evader)),
        "random" => Ok(Agent::Random),
        _ => {
            let path = id.strip_prefix("ckpt:").unwrap_or(id);
            let p = Path::new(path);
            if id.starts_with("ckpt:") || p.exists() {
                load_checkpoint_agent(p)
            } else {
                Err(PolicyError::UnknownId(id.to_string()))
            }
        }
    }
}

pub fn load_checkpoint_agent(path: &Path) -> Result<Agent, PolicyError> {
    let wrap = |source| PolicyError::Checkpoint { path: path.to_path_buf(), source };
    let ck = Checkpoint::load(path).map_err(wrap)?;
    let id = format!("ckpt:{}", path.display());
    if ck.kind == NAHT_KIND {
        Ok(Agent::Naht { id, net: Arc::new(NahtModel::from_checkpoint(&ck).map_err(wrap)?) })
    } else {
        Ok(Agent::Actor { id, net: Arc::new(ActorCritic::from_checkpoint(&ck).map_err(wrap)?) })
    }
}

/// Last `k` entries of (observation, previous own action), oldest first and
/// zero-padded at the front.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    k: usize,
    entry_len: usize,
    entries: VecDeque<Vec<f32>>,
    prev_action: f32,
}

impl History {
    pub fn new(k: usize, obs_len: usize) -> Self {
        Self { k, entry_len: obs_len + 1, entries: VecDeque::with_capacity(k), prev_action: 0.0 }
    }

    pub fn for_shape(shape: &TeamShape) -> Self {
        Self::new(shape.history, shape.layout.len())
    }

    pub fn default_for(cfg: &EnvConfig) -> Self {
        Self::new(HISTORY_LEN, crate::sim::ObsLayout::new(cfg).len())
    }

    /// Record the observation for the coming decision.
    pub fn push_obs(&mut self, obs: &[f32]) {
        let mut e = Vec::with_capacity(self.entry_len);
        e.extend_from_slice(obs);
        e.push(self.prev_action);
        if self.entries.len() == self.k {
            self.entries.pop_front();
        }
        self.entries.push_back(e);
    }

    /// Record the (clamped) action taken after the latest observation.
    pub fn push_action(&mut self, a: f32) {
        self.prev_action = a;
    }

    pub fn window(&self) -> Vec<f32> {
        let mut w = vec![0.0; (self.k - self.entries.len()) * self.entry_len];
        for e in &self.entries {
            w.extend_from_slice(e);
        }
        w
    }
}
