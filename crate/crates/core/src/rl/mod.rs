//! PPO machinery shared by every trainer: advantage estimation, the clipped
//! surrogate update, parallel rollout collection, and the self-play, PBT
//! and centralized-critic trainers.

mod gae;
mod ppo;
mod rollout;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnvConfig;
use crate::nn::{ActorCritic, Checkpoint, CheckpointError, GaussianHead, NnError, Real};
use crate::policy::{Agent, PolicyError};
use crate::sim::{Observation, SimError, WorldState};
use crate::teammate::TeamShape;

pub use gae::{compute_gae, gae_brute_force, normalize_advantages};
pub use ppo::{minibatch_loss, ppo_update, Batch, UpdateStats};
pub use rollout::{EnvPool, EpisodeRecord, Rollout, Stream, TeamSampler};
pub use train::{
    batch_from_rollout, iterations_for, mappo_train, pbt_exploit, pbt_train, selfplay_train, train_iteration, train_loop, uniform_team,
    MetricsRow, MetricsSink, PbtConfig, PbtMember, TrainConfig, TrainOutput,
};
pub(crate) use train::run_training;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub lr: f64,
    pub clip_ratio: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub batch: usize,
    pub minibatch: usize,
    pub total_steps: u64,
    /// Global gradient-norm clip per minibatch step; `None` disables it.
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            lr: 3e-4,
            clip_ratio: 0.2,
            value_coef: 1.0,
            entropy_coef: 0.01,
            epochs: 20,
            batch: 1024,
            minibatch: 256,
            total_steps: 1_000_000,
            max_grad_norm: Some(0.5),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gae_lambda must be in (0, 1]");
        }
        if self.minibatch == 0 || self.batch == 0 || self.batch % self.minibatch != 0 {
            return bad("minibatch must divide batch");
        }
        if !(self.lr > 0.0) || !(self.clip_ratio > 0.0) {
            return bad("lr and clip_ratio must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("batch has {got} samples, config wants {expected}")]
    BatchSize { expected: usize, got: usize },
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("metrics: {0}")]
    Csv(#[from] csv::Error),
}

/// One learner decision.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    pub obs: Vec<f32>,
    pub critic_in: Vec<f32>,
    /// Teammate-model history window; empty for plain actor-critics.
    pub window: Vec<f32>,
    /// Current relative rows and clamped actions of the uncontrolled
    /// teammates; only filled for teammate-modeling learners.
    pub mate_rows: Vec<[f32; 3]>,
    pub mate_actions: Vec<f32>,
    pub action: f32,
    pub log_prob: f32,
    pub value: f32,
    pub reward: f32,
    /// Episode ended after this step (terminal or timeout).
    pub done: bool,
}

/// Per-sample loss components (or minibatch means).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossTerms {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub recon: f64,
    pub clipped: f64,
    pub approx_kl: f64,
    pub ratio: f64,
}

impl LossTerms {
    pub fn add(&mut self, o: &LossTerms) {
        self.total += o.total;
        self.policy += o.policy;
        self.value += o.value;
        self.entropy += o.entropy;
        self.recon += o.recon;
        self.clipped += o.clipped;
        self.approx_kl += o.approx_kl;
        self.ratio += o.ratio;
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.total *= k;
        self.policy *= k;
        self.value *= k;
        self.entropy *= k;
        self.recon *= k;
        self.clipped *= k;
        self.approx_kl *= k;
        self.ratio *= k;
        self
    }
}

/// What the value network sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticInput {
    /// The slot's own observation.
    Local,
    /// All learner observations in slot order plus every evader position.
    Central { learners: usize },
}

impl CriticInput {
    pub fn len(&self, obs_len: usize, num_e: usize) -> usize {
        match self {
            CriticInput::Local => obs_len,
            CriticInput::Central { learners } => learners * obs_len + 2 * num_e,
        }
    }

    pub fn build(&self, cfg: &EnvConfig, state: &WorldState, obs: &[Observation], slot: usize) -> Vec<f32> {
        match self {
            CriticInput::Local => obs[slot].0.clone(),
            CriticInput::Central { learners } => {
                let mut v = Vec::with_capacity(self.len(obs[0].0.len(), state.evaders.len()));
                for o in &obs[..*learners] {
                    v.extend_from_slice(&o.0);
                }
                let (w, h) = (cfg.site.boundary.width, cfg.site.boundary.height);
                for e in &state.evaders {
                    v.push((2.0 * e.x / w - 1.0) as f32);
                    v.push((2.0 * e.y / h - 1.0) as f32);
                }
                v
            }
        }
    }
}

/// A trainable policy as seen by rollout collection and the PPO update.
pub trait PolicyModel: Clone + Send + Sync {
    fn num_params(&self) -> usize;
    fn flat(&self) -> Vec<f32>;
    fn set_flat(&mut self, p: &[f32]) -> Result<(), NnError>;
    fn critic_input(&self) -> CriticInput;
    /// Set when the model consumes a history window.
    fn team_shape(&self) -> Option<TeamShape> {
        None
    }
    fn head_and_value(&self, obs: &[f32], critic_in: &[f32], window: &[f32]) -> Result<(GaussianHead<f32>, f32), NnError>;
    fn value(&self, critic_in: &[f32]) -> Result<f32, NnError>;
    /// Add this sample's loss gradient into `grad` and return its loss terms.
    fn sample_grad(&self, s: &Sample, adv: f32, ret: f32, cfg: &PpoConfig, grad: &mut [f32]) -> Result<LossTerms, NnError>;
    fn checkpoint(&self, meta: serde_json::Value) -> Checkpoint;
    fn frozen(&self, id: String) -> Agent;
}

fn to_t<T: Real>(v: &[f32]) -> Vec<T> {
    v.iter().map(|x| T::of(*x as f64)).collect()
}

/// Clipped-surrogate, value and entropy terms for one sample plus the
/// gradients with respect to (mean, log_std, value).
pub fn ppo_terms<T: Real>(head: &GaussianHead<T>, value: T, s: &Sample, adv: T, ret: T, cfg: &PpoConfig) -> (LossTerms, Vec<T>, Vec<T>, T) {
    let a = [T::of(s.action as f64)];
    let logp = head.log_prob(&a);
    let ratio = (logp - T::of(s.log_prob as f64)).exp();
    let eps = T::of(cfg.clip_ratio);
    let clipped_ratio = ratio.max(T::one() - eps).min(T::one() + eps);
    let s1 = ratio * adv;
    let s2 = clipped_ratio * adv;
    let policy = -s1.min(s2);
    let (dm, ds) = head.log_prob_grad(&a);
    let d_logp = if s1 <= s2 { -adv * ratio } else { T::zero() };
    let ce = T::of(cfg.entropy_coef);
    let d_mean: Vec<T> = dm.iter().map(|g| *g * d_logp).collect();
    let d_log_std: Vec<T> = ds.iter().map(|g| *g * d_logp - ce).collect();
    let cv = T::of(cfg.value_coef);
    let verr = value - ret;
    let entropy = head.entropy();
    let r = ratio.to_f64_lossy();
    let terms = LossTerms {
        total: (policy + cv * verr * verr - ce * entropy).to_f64_lossy(),
        policy: policy.to_f64_lossy(),
        value: (verr * verr).to_f64_lossy(),
        entropy: entropy.to_f64_lossy(),
        recon: 0.0,
        clipped: if s2 < s1 { 1.0 } else { 0.0 },
        approx_kl: (r - 1.0) - r.ln(),
        ratio: r,
    };
    (terms, d_mean, d_log_std, T::of(2.0) * cv * verr)
}

/// Per-sample loss and gradient for a plain actor-critic.
pub fn ac_sample_grad<T: Real>(net: &ActorCritic<T>, s: &Sample, adv: T, ret: T, cfg: &PpoConfig, grad: &mut [T]) -> Result<LossTerms, NnError> {
    let (head, ca) = net.head(&to_t::<T>(&s.obs))?;
    let (v, cc) = net.value(&to_t::<T>(&s.critic_in))?;
    let (terms, dm, ds, dv) = ppo_terms(&head, v, s, adv, ret, cfg);
    net.actor_backward(&ca, &dm, &ds, grad)?;
    net.critic_backward(&cc, dv, grad)?;
    Ok(terms)
}

/// Actor-critic trained with PPO; the critic input mode selects IPPO or
/// the centralized critic.
#[derive(Debug, Clone, PartialEq)]
pub struct AcLearner {
    pub net: ActorCritic<f32>,
    pub critic: CriticInput,
}

impl PolicyModel for AcLearner {
    fn num_params(&self) -> usize {
        self.net.num_params()
    }

    fn flat(&self) -> Vec<f32> {
        self.net.flat()
    }

    fn set_flat(&mut self, p: &[f32]) -> Result<(), NnError> {
        self.net.set_flat(p)
    }

    fn critic_input(&self) -> CriticInput {
        self.critic
    }

    fn head_and_value(&self, obs: &[f32], critic_in: &[f32], _window: &[f32]) -> Result<(GaussianHead<f32>, f32), NnError> {
        let (h, _) = self.net.head(obs)?;
        Ok((h, self.value(critic_in)?))
    }

    fn value(&self, critic_in: &[f32]) -> Result<f32, NnError> {
        Ok(self.net.critic.predict(critic_in)?[0])
    }

    fn sample_grad(&self, s: &Sample, adv: f32, ret: f32, cfg: &PpoConfig, grad: &mut [f32]) -> Result<LossTerms, NnError> {
        ac_sample_grad(&self.net, s, adv, ret, cfg, grad)
    }

    fn checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        self.net.to_checkpoint(meta)
    }

    fn frozen(&self, id: String) -> Agent {
        Agent::actor(id, self.net.clone())
    }
}
