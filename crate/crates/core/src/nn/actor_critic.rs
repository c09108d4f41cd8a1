use serde_json::json;

use super::{check_dim, Checkpoint, CheckpointError, GaussianHead, Mlp, MlpCache, NnError, Real, LOG_STD_MAX, LOG_STD_MIN};
use crate::rng::Rng;

pub const ACTOR_CRITIC_KIND: &str = "actor-critic";

/// Gaussian policy MLP with a state-independent `log_std` and a separate value
/// MLP. Flat parameter order: actor, log_std, critic.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic<T> {
    pub actor: Mlp<T>,
    pub log_std: Vec<T>,
    pub critic: Mlp<T>,
}

impl<T: Real> ActorCritic<T> {
    pub fn new(actor_in: usize, critic_in: usize, hidden: &[usize], action_dim: usize, rng: &mut Rng) -> Self {
        let mut a = vec![actor_in];
        a.extend_from_slice(hidden);
        a.push(action_dim);
        let mut c = vec![critic_in];
        c.extend_from_slice(hidden);
        c.push(1);
        let actor = Mlp::init(&a, rng, 0.01);
        let critic = Mlp::init(&c, rng, 1.0);
        Self { actor, log_std: vec![T::of(0.5f64.ln()); action_dim], critic }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn num_params(&self) -> usize {
        self.actor.num_params() + self.log_std.len() + self.critic.num_params()
    }

    pub fn log_std_offset(&self) -> usize {
        self.actor.num_params()
    }

    pub fn critic_offset(&self) -> usize {
        self.actor.num_params() + self.log_std.len()
    }

    pub fn flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(self.actor.params());
        v.extend_from_slice(&self.log_std);
        v.extend_from_slice(self.critic.params());
        v
    }

    pub fn set_flat(&mut self, p: &[T]) -> Result<(), NnError> {
        check_dim(self.num_params(), p.len())?;
        let (a, rest) = p.split_at(self.actor.num_params());
        let (s, c) = rest.split_at(self.log_std.len());
        self.actor.params_mut().copy_from_slice(a);
        self.log_std.copy_from_slice(s);
        self.critic.params_mut().copy_from_slice(c);
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ActorCritic<U> {
        ActorCritic {
            actor: self.actor.cast(),
            log_std: self.log_std.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
            critic: self.critic.cast(),
        }
    }

    pub fn head(&self, actor_in: &[T]) -> Result<(GaussianHead<T>, MlpCache<T>), NnError> {
        let cache = self.actor.forward(actor_in)?;
        let head = GaussianHead::new(cache.output().to_vec(), &self.log_std);
        Ok((head, cache))
    }

    pub fn mean_action(&self, actor_in: &[T]) -> Result<Vec<T>, NnError> {
        self.actor.predict(actor_in)
    }

    pub fn value(&self, critic_in: &[T]) -> Result<(T, MlpCache<T>), NnError> {
        let cache = self.critic.forward(critic_in)?;
        Ok((cache.output()[0], cache))
    }

    /// Accumulate policy gradients into the flat `grad`. Entries of `log_std`
    /// sitting outside the clamp range receive no gradient.
    pub fn actor_backward(&self, cache: &MlpCache<T>, d_mean: &[T], d_log_std: &[T], grad: &mut [T]) -> Result<Vec<T>, NnError> {
        check_dim(self.num_params(), grad.len())?;
        check_dim(self.log_std.len(), d_log_std.len())?;
        let na = self.actor.num_params();
        let d_in = self.actor.backward_into(cache, d_mean, &mut grad[..na])?;
        let (lo, hi) = (T::of(LOG_STD_MIN), T::of(LOG_STD_MAX));
        for (i, d) in d_log_std.iter().enumerate() {
            let raw = self.log_std[i];
            if raw >= lo && raw <= hi {
                grad[na + i] += *d;
            }
        }
        Ok(d_in)
    }

    pub fn critic_backward(&self, cache: &MlpCache<T>, d_value: T, grad: &mut [T]) -> Result<(), NnError> {
        check_dim(self.num_params(), grad.len())?;
        let off = self.critic_offset();
        self.critic.backward_into(cache, &[d_value], &mut grad[off..])?;
        Ok(())
    }
}

impl ActorCritic<f32> {
    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        let mut c = Checkpoint::new(
            ACTOR_CRITIC_KIND,
            json!({
                "actor_sizes": self.actor.sizes(),
                "critic_sizes": self.critic.sizes(),
                "info": meta,
            }),
        );
        c.push("actor", vec![self.actor.num_params()], self.actor.params().to_vec());
        c.push("log_std", vec![self.log_std.len()], self.log_std.clone());
        c.push("critic", vec![self.critic.num_params()], self.critic.params().to_vec());
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, CheckpointError> {
        c.expect_kind(ACTOR_CRITIC_KIND)?;
        let sizes = |key: &str| -> Result<Vec<usize>, CheckpointError> {
            serde_json::from_value(c.meta.get(key).cloned().unwrap_or_default())
                .map_err(|e| CheckpointError::Manifest(format!("{key}: {e}")))
        };
        let a = sizes("actor_sizes")?;
        let cr = sizes("critic_sizes")?;
        let bad = |e: NnError| CheckpointError::Manifest(e.to_string());
        let actor = Mlp::from_params(&a, c.tensor("actor")?.data.clone()).map_err(bad)?;
        let critic = Mlp::from_params(&cr, c.tensor("critic")?.data.clone()).map_err(bad)?;
        let log_std = c.tensor("log_std")?.data.clone();
        check_dim(actor.output_dim(), log_std.len()).map_err(bad)?;
        Ok(Self { actor, log_std, critic })
    }
}
