//! Teammate modeling: a history encoder whose embedding conditions the
//! actor, a decoder that reconstructs the uncontrolled teammates' action
//! distributions, and the trainer that optimizes both with PPO.

mod model;

pub use model::{
    decode, new_decoder, reconstruction_grad, reconstruction_loss, EncoderCache, NahtModel, TeamEncoder, TeamShape, EMBED_DIM,
    ENCODER_HIDDEN, HISTORY_LEN, NAHT_KIND, RECON_WEIGHT, SIGMA_TARGET,
};

use crate::config::EnvConfig;
use crate::nn::{Checkpoint, GaussianHead, NnError, Real};
use crate::policy::Agent;
use crate::rl::{ppo_terms, run_training, uniform_team, CriticInput, LossTerms, PolicyModel, PpoConfig, RlError, Sample, TrainConfig, TrainOutput};
use crate::rng::substream;
use crate::sim::ObsLayout;

fn to_t<T: Real>(v: &[f32]) -> Vec<T> {
    v.iter().map(|x| T::of(*x as f64)).collect()
}

/// Joint per-sample loss `PPO + beta * reconstruction` and its gradient over
/// the flat parameters (actor-critic, encoder, decoder).
pub fn naht_sample_grad<T: Real>(m: &NahtModel<T>, s: &Sample, adv: T, ret: T, cfg: &PpoConfig, grad: &mut [T]) -> Result<LossTerms, NnError> {
    crate::nn::check_dim(m.num_params(), grad.len())?;
    let obs: Vec<T> = to_t(&s.obs);
    let (emb, enc_cache) = m.embed(&to_t::<T>(&s.window))?;
    let (head, ca) = m.ac.head(&m.actor_input(&obs, &emb))?;
    let (v, cc) = m.ac.value(&to_t::<T>(&s.critic_in))?;
    let (mut terms, dm, ds, dv) = ppo_terms(&head, v, s, adv, ret, cfg);
    let na = m.ac.num_params();
    let ne = m.encoder.num_params();
    let (g_ac, rest) = grad.split_at_mut(na);
    let (g_enc, g_dec) = rest.split_at_mut(ne);
    let d_in = m.ac.actor_backward(&ca, &dm, &ds, g_ac)?;
    m.ac.critic_backward(&cc, dv, g_ac)?;
    let mut d_emb: Vec<T> = d_in[obs.len()..].to_vec();
    if let Some(dec) = &m.decoder {
        let rows: Vec<[T; 3]> = s.mate_rows.iter().map(|r| [T::of(r[0] as f64), T::of(r[1] as f64), T::of(r[2] as f64)]).collect();
        let targets: Vec<T> = to_t(&s.mate_actions);
        let (loss, de) = reconstruction_grad(dec, &emb, &rows, &targets, m.sigma_t, T::of(m.beta), g_dec)?;
        for (a, b) in d_emb.iter_mut().zip(&de) {
            *a += *b;
        }
        terms.recon = loss.to_f64_lossy();
        terms.total += m.beta * terms.recon;
    }
    if let Some(c) = &enc_cache {
        m.encoder.backward(c, &d_emb, g_enc)?;
    }
    Ok(terms)
}

/// Teammate-modeling learner: shared actor over `obs ++ embedding`,
/// centralized critic, encoder and optional decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct NahtLearner {
    pub net: NahtModel<f32>,
    pub critic: CriticInput,
}

impl PolicyModel for NahtLearner {
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

    fn team_shape(&self) -> Option<TeamShape> {
        Some(self.net.shape())
    }

    fn head_and_value(&self, obs: &[f32], critic_in: &[f32], window: &[f32]) -> Result<(GaussianHead<f32>, f32), NnError> {
        let (emb, _) = self.net.embed(window)?;
        let (h, _) = self.net.ac.head(&self.net.actor_input(obs, &emb))?;
        Ok((h, self.value(critic_in)?))
    }

    fn value(&self, critic_in: &[f32]) -> Result<f32, NnError> {
        Ok(self.net.ac.critic.predict(critic_in)?[0])
    }

    fn sample_grad(&self, s: &Sample, adv: f32, ret: f32, cfg: &PpoConfig, grad: &mut [f32]) -> Result<LossTerms, NnError> {
        naht_sample_grad(&self.net, s, adv, ret, cfg, grad)
    }

    fn checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        self.net.to_checkpoint(meta)
    }

    fn frozen(&self, id: String) -> Agent {
        Agent::Naht { id, net: std::sync::Arc::new(self.net.clone()) }
    }
}

impl NahtLearner {
    pub fn new(cfg: &EnvConfig, hidden: &[usize], with_decoder: bool, seed: u64) -> Self {
        let layout = ObsLayout::new(cfg);
        let n = cfg.players.num_ctrl;
        let shape = TeamShape { layout, num_ctrl: n, history: HISTORY_LEN };
        let critic = CriticInput::Central { learners: n };
        let net = NahtModel::new(shape, critic.len(layout.len(), cfg.players.num_e), hidden, with_decoder, &mut substream(seed, "init", &[]));
        Self { net, critic }
    }
}

/// Train the teammate-modeling learner in the `num_ctrl` slots with
/// teammates drawn uniformly from `pool` every episode. `with_decoder =
/// false` is the decoder-free ablation.
pub fn naht_d_train(cfg: &EnvConfig, pool: Vec<Agent>, seed: u64, tc: &TrainConfig, with_decoder: bool) -> Result<TrainOutput<NahtLearner>, RlError> {
    if pool.is_empty() {
        return Err(RlError::Config("teammate pool is empty".into()));
    }
    let model = NahtLearner::new(cfg, &tc.hidden, with_decoder, seed);
    let n = cfg.players.num_ctrl;
    let sampler = uniform_team(pool, cfg.players.num_p - n);
    let algo = if with_decoder { "naht-d" } else { "naht-d-nodec" };
    run_training(model, cfg, seed, n, &*sampler, tc, algo)
}
