use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PolicyModel, RlError, Sample};
use crate::config::EnvConfig;
use crate::policy::{Agent, History};
use crate::rng::{derive_seed, substream, Rng};
use crate::sim::{reset, step, ActionCmd, ObsLayout, Observation, Terminal, WorldState};
use crate::teammate::HISTORY_LEN;

/// Draws the fixed teammates for slots `learners..num_p` of a new episode.
pub type TeamSampler = dyn Fn(&mut Rng) -> Vec<Agent> + Send + Sync;

/// Outcome of one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub terminal: Terminal,
    pub steps: u32,
    #[serde(rename = "return")]
    pub ret: f64,
    pub team: Vec<String>,
}

/// Consecutive decisions of one learner slot in one environment.
#[derive(Debug, Clone, Default)]
pub struct Stream {
    pub samples: Vec<Sample>,
    /// Value of the state after the last sample (0 if it ended an episode).
    pub bootstrap: f32,
}

#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub streams: Vec<Stream>,
    pub episodes: Vec<EpisodeRecord>,
}

impl Rollout {
    pub fn num_samples(&self) -> usize {
        self.streams.iter().map(|s| s.samples.len()).sum()
    }
}

struct EnvInstance {
    index: u64,
    state: WorldState,
    obs: Vec<Observation>,
    fixed: Vec<Agent>,
    hist: Vec<History>,
    episodes: u64,
    seed: u64,
    ret: f64,
    rng: Rng,
}

/// Independent environment instances that keep running across collection
/// calls; episodes reset automatically.
pub struct EnvPool {
    pub cfg: EnvConfig,
    pub learners: usize,
    pub num_envs: usize,
    seed: u64,
    envs: Vec<EnvInstance>,
}

impl EnvPool {
    pub fn new(cfg: &EnvConfig, seed: u64, num_envs: usize, learners: usize) -> Self {
        assert!(learners >= 1 && learners <= cfg.players.num_p, "learner slots must be in 1..=num_p");
        Self { cfg: cfg.clone(), learners, num_envs, seed, envs: Vec::new() }
    }

    fn start_episode(&self, env: &mut EnvInstance, sampler: &TeamSampler) -> Result<(), RlError> {
        let seed = derive_seed(self.seed, "episode", &[env.index, env.episodes]);
        let (state, obs) = reset(&self.cfg, seed)?;
        env.fixed = sampler(&mut env.rng);
        assert_eq!(env.fixed.len(), self.cfg.players.num_p - self.learners, "sampler must fill every non-learner slot");
        let obs_len = ObsLayout::new(&self.cfg).len();
        env.hist = (0..self.cfg.players.num_p).map(|_| History::new(HISTORY_LEN, obs_len)).collect();
        for (h, o) in env.hist.iter_mut().zip(&obs) {
            h.push_obs(&o.0);
        }
        env.state = state;
        env.obs = obs;
        env.seed = seed;
        env.ret = 0.0;
        Ok(())
    }

    fn ensure_envs(&mut self, sampler: &TeamSampler) -> Result<(), RlError> {
        while self.envs.len() < self.num_envs {
            let index = self.envs.len() as u64;
            let (state, obs) = reset(&self.cfg, 0)?;
            let mut env = EnvInstance {
                index,
                state,
                obs,
                fixed: Vec::new(),
                hist: Vec::new(),
                episodes: 0,
                seed: 0,
                ret: 0.0,
                rng: substream(self.seed, "rollout", &[index]),
            };
            self.start_episode(&mut env, sampler)?;
            self.envs.push(env);
        }
        Ok(())
    }

    /// Run every instance for `steps_per_env` steps with `model` in the
    /// learner slots (sampling its stochastic policy) and the sampled fixed
    /// agents elsewhere. Only learner decisions are returned as samples.
    pub fn collect<M: PolicyModel>(&mut self, model: &M, steps_per_env: usize, sampler: &TeamSampler, parallel: bool) -> Result<Rollout, RlError> {
        self.ensure_envs(sampler)?;
        let mut envs = std::mem::take(&mut self.envs);
        let this = &*self;
        let run = |env: &mut EnvInstance| this.run_env(env, model, steps_per_env, sampler);
        let parts: Vec<Result<(Vec<Stream>, Vec<EpisodeRecord>), RlError>> =
            if parallel { envs.par_iter_mut().map(run).collect() } else { envs.iter_mut().map(run).collect() };
        self.envs = envs;
        let mut out = Rollout::default();
        for p in parts {
            let (s, e) = p?;
            out.streams.extend(s);
            out.episodes.extend(e);
        }
        Ok(out)
    }

    fn run_env<M: PolicyModel>(
        &self,
        env: &mut EnvInstance,
        model: &M,
        steps: usize,
        sampler: &TeamSampler,
    ) -> Result<(Vec<Stream>, Vec<EpisodeRecord>), RlError> {
        let cfg = &self.cfg;
        let n = self.learners;
        let num_p = cfg.players.num_p;
        let critic = model.critic_input();
        let shape = model.team_shape();
        let mut streams: Vec<Stream> = (0..n).map(|_| Stream { samples: Vec::with_capacity(steps), bootstrap: 0.0 }).collect();
        let mut episodes = Vec::new();
        for _ in 0..steps {
            let mut actions = Vec::with_capacity(num_p);
            let mut pending = Vec::with_capacity(n);
            for slot in 0..n {
                let obs = &env.obs[slot].0;
                let critic_in = critic.build(cfg, &env.state, &env.obs, slot);
                let window = if shape.is_some() { env.hist[slot].window() } else { Vec::new() };
                let (head, value) = model.head_and_value(obs, &critic_in, &window)?;
                let a = head.sample(&mut env.rng)[0];
                let log_prob = head.log_prob(&[a]);
                actions.push(a as f64);
                pending.push(Sample { obs: obs.clone(), critic_in, window, action: a, log_prob, value, ..Sample::default() });
            }
            for slot in n..num_p {
                let agent = &env.fixed[slot - n];
                let window = if agent.needs_window() { env.hist[slot].window() } else { Vec::new() };
                actions.push(agent.act(cfg, &env.state, slot, &env.obs[slot].0, &window, &mut env.rng));
            }
            let cmds: Vec<ActionCmd> = actions.iter().map(|a| ActionCmd::new(*a)).collect();
            let out = step(cfg, &mut env.state, &cmds)?;
            let done = out.terminal != Terminal::Running;
            env.ret += out.reward;
            for (h, c) in env.hist.iter_mut().zip(&cmds) {
                h.push_action(c.steer() as f32);
            }
            for (slot, mut s) in pending.into_iter().enumerate() {
                if let Some(sh) = shape {
                    let t0 = ObsLayout::new(cfg).teammate_range().start;
                    s.mate_rows = sh
                        .uncontrolled_rows(slot)
                        .iter()
                        .map(|r| {
                            let o = &s.obs[t0 + 3 * r..t0 + 3 * r + 3];
                            [o[0], o[1], o[2]]
                        })
                        .collect();
                    s.mate_actions = (sh.num_ctrl..num_p).map(|j| cmds[j].steer() as f32).collect();
                }
                s.reward = out.reward as f32;
                s.done = done;
                streams[slot].samples.push(s);
            }
            if done {
                let mut team: Vec<String> = vec!["learner".into(); n];
                team.extend(env.fixed.iter().map(Agent::id));
                episodes.push(EpisodeRecord { seed: env.seed, terminal: out.terminal, steps: env.state.step, ret: env.ret, team });
                env.episodes += 1;
                self.start_episode(env, sampler)?;
            } else {
                for (h, o) in env.hist.iter_mut().zip(&out.observations) {
                    h.push_obs(&o.0);
                }
                env.obs = out.observations;
            }
        }
        for (slot, s) in streams.iter_mut().enumerate() {
            let ended = s.samples.last().is_none_or(|x| x.done);
            s.bootstrap = if ended { 0.0 } else { model.value(&critic.build(cfg, &env.state, &env.obs, slot))? };
        }
        Ok((streams, episodes))
    }
}
