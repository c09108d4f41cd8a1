use std::fs::File;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{compute_gae, ppo_update, AcLearner, Batch, CriticInput, EnvPool, PolicyModel, PpoConfig, RlError, Rollout, TeamSampler, UpdateStats};
use crate::config::EnvConfig;
use crate::nn::{ActorCritic, Adam, AdamConfig, HIDDEN};
use crate::policy::Agent;
use crate::rng::{derive_seed, substream, Rng};
use crate::sim::{ObsLayout, Terminal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub hidden: Vec<usize>,
    /// Steps each environment instance runs per iteration; the number of
    /// instances is chosen so one iteration yields exactly `ppo.batch`
    /// learner transitions.
    pub rollout_len: usize,
    pub parallel: bool,
    /// Save a checkpoint every this many iterations (0: final only).
    pub checkpoint_every: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { ppo: PpoConfig::default(), hidden: vec![HIDDEN, HIDDEN], rollout_len: 128, parallel: true, checkpoint_every: 0, out_dir: None }
    }
}

impl TrainConfig {
    pub fn num_envs(&self, learners: usize) -> Result<usize, RlError> {
        let per_iter = learners * self.rollout_len;
        if per_iter == 0 || self.ppo.batch % per_iter != 0 {
            return Err(RlError::Config(format!(
                "batch {} is not a multiple of learners ({learners}) x rollout_len ({})",
                self.ppo.batch, self.rollout_len
            )));
        }
        Ok(self.ppo.batch / per_iter)
    }
}

/// Number of update iterations needed to spend `budget` learner transitions.
pub fn iterations_for(budget: u64, batch: usize) -> u64 {
    budget.div_ceil(batch as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub step: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub suc: f64,
    pub col: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub recon_loss: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
}

impl MetricsRow {
    pub fn new(iteration: u64, step: u64, rollout: &Rollout, u: &UpdateStats) -> Self {
        let n = rollout.episodes.len();
        let frac = |t: Terminal| {
            if n == 0 {
                f64::NAN
            } else {
                100.0 * rollout.episodes.iter().filter(|e| e.terminal == t).count() as f64 / n as f64
            }
        };
        let mean_return = if n == 0 { f64::NAN } else { rollout.episodes.iter().map(|e| e.ret).sum::<f64>() / n as f64 };
        Self {
            iteration,
            step,
            episodes: n,
            mean_return,
            suc: frac(Terminal::Success),
            col: frac(Terminal::Collision),
            policy_loss: u.policy_loss,
            value_loss: u.value_loss,
            entropy: u.entropy,
            recon_loss: u.recon_loss,
            clip_frac: u.clip_frac,
            approx_kl: u.approx_kl,
        }
    }
}

/// CSV metrics stream, flushed after every row.
pub struct MetricsSink {
    w: csv::Writer<File>,
}

impl MetricsSink {
    pub fn create(path: &Path) -> Result<Self, RlError> {
        if let Some(d) = path.parent() {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self { w: csv::Writer::from_path(path)? })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<(), RlError> {
        self.w.serialize(row)?;
        self.w.flush()?;
        Ok(())
    }
}

/// Advantages and returns for every stream, flattened in stream order.
pub fn batch_from_rollout(rollout: Rollout, gamma: f64, lambda: f64) -> Result<Batch, RlError> {
    let mut b = Batch::default();
    for s in rollout.streams {
        let r: Vec<f64> = s.samples.iter().map(|x| x.reward as f64).collect();
        let v: Vec<f64> = s.samples.iter().map(|x| x.value as f64).collect();
        let d: Vec<bool> = s.samples.iter().map(|x| x.done).collect();
        let (adv, ret) = compute_gae(&r, &v, &d, s.bootstrap as f64, gamma, lambda)?;
        b.advantages.extend(adv.iter().map(|x| *x as f32));
        b.returns.extend(ret.iter().map(|x| *x as f32));
        b.samples.extend(s.samples);
    }
    Ok(b)
}

/// One collect-and-update iteration.
pub fn train_iteration<M: PolicyModel>(
    model: &mut M,
    opt: &mut Adam<f32>,
    pool: &mut EnvPool,
    sampler: &TeamSampler,
    tc: &TrainConfig,
    rng: &mut Rng,
) -> Result<(UpdateStats, Rollout), RlError> {
    let per_env = tc.ppo.batch / (pool.learners * pool.num_envs);
    let rollout = pool.collect(model, per_env, sampler, tc.parallel)?;
    let episodes = rollout.episodes.clone();
    let batch = batch_from_rollout(rollout, tc.ppo.gamma, tc.ppo.gae_lambda)?;
    let stats = ppo_update(model, opt, &batch, &tc.ppo, rng, tc.parallel)?;
    Ok((stats, Rollout { streams: Vec::new(), episodes }))
}

/// Train until `budget` learner transitions have been consumed; `on_iter`
/// sees every metrics row (for sinks and checkpoints).
#[allow(clippy::too_many_arguments)]
pub fn train_loop<M: PolicyModel>(
    model: &mut M,
    opt: &mut Adam<f32>,
    pool: &mut EnvPool,
    sampler: &TeamSampler,
    tc: &TrainConfig,
    budget: u64,
    rng: &mut Rng,
    on_iter: &mut dyn FnMut(&M, &MetricsRow) -> Result<(), RlError>,
) -> Result<Vec<MetricsRow>, RlError> {
    tc.ppo.validate()?;
    let iters = iterations_for(budget, tc.ppo.batch);
    let mut rows = Vec::with_capacity(iters as usize);
    for it in 0..iters {
        let (stats, rollout) = train_iteration(model, opt, pool, sampler, tc, rng)?;
        let row = MetricsRow::new(it + 1, (it + 1) * tc.ppo.batch as u64, &rollout, &stats);
        log::debug!("iter {} step {} return {:.3} suc {:.1}", row.iteration, row.step, row.mean_return, row.suc);
        on_iter(model, &row)?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct TrainOutput<M> {
    pub model: M,
    pub metrics: Vec<MetricsRow>,
    pub checkpoints: Vec<PathBuf>,
}

/// Shared driver: metrics CSV and checkpoints in `tc.out_dir` when set.
pub(crate) fn run_training<M: PolicyModel>(
    mut model: M,
    cfg: &EnvConfig,
    seed: u64,
    learners: usize,
    sampler: &TeamSampler,
    tc: &TrainConfig,
    algo: &str,
) -> Result<TrainOutput<M>, RlError> {
    let mut opt = Adam::new(model.num_params(), AdamConfig { lr: tc.ppo.lr, ..AdamConfig::default() });
    let mut pool = EnvPool::new(cfg, derive_seed(seed, "env", &[]), tc.num_envs(learners)?, learners);
    let mut rng = substream(seed, "update", &[]);
    let mut sink = match &tc.out_dir {
        Some(d) => Some(MetricsSink::create(&d.join("metrics.csv"))?),
        None => None,
    };
    let mut checkpoints = Vec::new();
    let meta = |step: u64| json!({ "algo": algo, "seed": seed, "step": step });
    let every = tc.checkpoint_every as u64;
    let mut on_iter = |m: &M, row: &MetricsRow| -> Result<(), RlError> {
        if let Some(s) = sink.as_mut() {
            s.write(row)?;
        }
        if let (Some(d), true) = (&tc.out_dir, every > 0 && row.iteration % every == 0) {
            let p = d.join("checkpoints").join(format!("step_{:010}.plck", row.step));
            m.checkpoint(meta(row.step)).save(&p)?;
            checkpoints.push(p);
        }
        Ok(())
    };
    let metrics = train_loop(&mut model, &mut opt, &mut pool, sampler, tc, tc.ppo.total_steps, &mut rng, &mut on_iter)?;
    if let Some(d) = &tc.out_dir {
        let step = metrics.last().map_or(0, |r| r.step);
        let p = d.join("checkpoints").join("final.plck");
        model.checkpoint(meta(step)).save(&p)?;
        checkpoints.push(p);
    }
    Ok(TrainOutput { model, metrics, checkpoints })
}

/// Uniform draw, with replacement, of `k` agents from `pool`.
pub fn uniform_team(pool: Vec<Agent>, k: usize) -> Box<TeamSampler> {
    Box::new(move |rng: &mut Rng| (0..k).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect())
}

/// IPPO self-play: one shared actor-critic in every pursuer slot.
pub fn selfplay_train(cfg: &EnvConfig, seed: u64, tc: &TrainConfig) -> Result<TrainOutput<AcLearner>, RlError> {
    let obs = ObsLayout::new(cfg).len();
    let net = ActorCritic::new(obs, obs, &tc.hidden, 1, &mut substream(seed, "init", &[]));
    let model = AcLearner { net, critic: CriticInput::Local };
    run_training(model, cfg, seed, cfg.players.num_p, &|_: &mut Rng| Vec::new(), tc, "sp")
}

/// Shared actor in the `num_ctrl` learner slots with a centralized critic;
/// the other slots are drawn uniformly from `teammates` every episode.
pub fn mappo_train(cfg: &EnvConfig, teammates: Vec<Agent>, seed: u64, tc: &TrainConfig) -> Result<TrainOutput<AcLearner>, RlError> {
    if teammates.is_empty() {
        return Err(RlError::Config("teammate pool is empty".into()));
    }
    let n = cfg.players.num_ctrl;
    let obs = ObsLayout::new(cfg).len();
    let critic = CriticInput::Central { learners: n };
    let net = ActorCritic::new(obs, critic.len(obs, cfg.players.num_e), &tc.hidden, 1, &mut substream(seed, "init", &[]));
    let sampler = uniform_team(teammates, cfg.players.num_p - n);
    run_training(AcLearner { net, critic }, cfg, seed, n, &*sampler, tc, "mappo")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbtConfig {
    pub size: usize,
    /// Learner transitions per member between exploit steps (0 disables).
    pub exploit_interval: u64,
    pub perturb: [f64; 2],
}

impl Default for PbtConfig {
    fn default() -> Self {
        Self { size: 4, exploit_interval: 50_000, perturb: [0.8, 1.25] }
    }
}

#[derive(Debug, Clone)]
pub struct PbtMember {
    pub model: AcLearner,
    pub opt: Adam<f32>,
    pub lr: f64,
    pub entropy_coef: f64,
    /// Mean episode return of the latest iteration with finished episodes.
    pub score: f64,
    pub metrics: Vec<MetricsRow>,
}

/// Bottom-quartile members copy a uniformly chosen top-quartile member
/// (parameters and optimizer state) and perturb its lr and entropy
/// coefficient. Returns the (destination, source) pairs.
pub fn pbt_exploit(members: &mut [PbtMember], perturb: [f64; 2], rng: &mut Rng) -> Vec<(usize, usize)> {
    let p = members.len();
    let q = (p / 4).max(1);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|a, b| members[*a].score.total_cmp(&members[*b].score).then(a.cmp(b)));
    let bottom: Vec<usize> = order[..q].to_vec();
    let top: Vec<usize> = order[p - q..].to_vec();
    let mut pairs = Vec::new();
    for dst in bottom {
        let src = top[rng.random_range(0..top.len())];
        if src == dst {
            continue;
        }
        let s = members[src].clone();
        let m = &mut members[dst];
        m.model = s.model;
        m.opt = s.opt;
        m.lr = s.lr * perturb[rng.random_range(0..2)];
        m.entropy_coef = s.entropy_coef * perturb[rng.random_range(0..2)];
        m.score = s.score;
        pairs.push((dst, src));
    }
    pairs
}

/// Population-based training: each member trains in the learner slots with
/// teammates drawn uniformly from frozen snapshots of the population.
pub fn pbt_train(cfg: &EnvConfig, pbt: &PbtConfig, seed: u64, tc: &TrainConfig) -> Result<Vec<PbtMember>, RlError> {
    if pbt.size < 2 {
        return Err(RlError::Config("PBT needs at least two members".into()));
    }
    tc.ppo.validate()?;
    let n = cfg.players.num_ctrl;
    let obs = ObsLayout::new(cfg).len();
    let mut members: Vec<PbtMember> = (0..pbt.size)
        .map(|i| {
            let net = ActorCritic::new(obs, obs, &tc.hidden, 1, &mut substream(seed, "init", &[i as u64]));
            let model = AcLearner { net, critic: CriticInput::Local };
            PbtMember {
                opt: Adam::new(model.num_params(), AdamConfig { lr: tc.ppo.lr, ..AdamConfig::default() }),
                model,
                lr: tc.ppo.lr,
                entropy_coef: tc.ppo.entropy_coef,
                score: f64::NEG_INFINITY,
                metrics: Vec::new(),
            }
        })
        .collect();
    let num_envs = tc.num_envs(n)?;
    let mut pools: Vec<EnvPool> = (0..pbt.size).map(|i| EnvPool::new(cfg, derive_seed(seed, "env", &[i as u64]), num_envs, n)).collect();
    let mut rngs: Vec<Rng> = (0..pbt.size).map(|i| substream(seed, "update", &[i as u64])).collect();
    let mut exploit_rng = substream(seed, "pbt.exploit", &[]);
    let mut sinks = Vec::new();
    if let Some(d) = &tc.out_dir {
        for i in 0..pbt.size {
            sinks.push(MetricsSink::create(&d.join(format!("member_{i}")).join("metrics.csv"))?);
        }
    }
    let iters = iterations_for(tc.ppo.total_steps, tc.ppo.batch);
    let mut since_exploit = 0u64;
    for it in 0..iters {
        let snapshot: Vec<Agent> = members.iter().enumerate().map(|(i, m)| m.model.frozen(format!("pbt:{i}"))).collect();
        let sampler = uniform_team(snapshot, cfg.players.num_p - n);
        for (i, m) in members.iter_mut().enumerate() {
            let mut mtc = tc.clone();
            mtc.ppo.lr = m.lr;
            mtc.ppo.entropy_coef = m.entropy_coef;
            let (stats, rollout) = train_iteration(&mut m.model, &mut m.opt, &mut pools[i], &*sampler, &mtc, &mut rngs[i])?;
            let row = MetricsRow::new(it + 1, (it + 1) * tc.ppo.batch as u64, &rollout, &stats);
            if row.episodes > 0 {
                m.score = row.mean_return;
            }
            if let Some(s) = sinks.get_mut(i) {
                s.write(&row)?;
            }
            m.metrics.push(row);
        }
        since_exploit += tc.ppo.batch as u64;
        if pbt.exploit_interval > 0 && since_exploit >= pbt.exploit_interval {
            since_exploit = 0;
            let pairs = pbt_exploit(&mut members, pbt.perturb, &mut exploit_rng);
            log::info!("pbt exploit at iteration {}: {pairs:?}", it + 1);
        }
    }
    if let Some(d) = &tc.out_dir {
        for (i, m) in members.iter().enumerate() {
            let meta = json!({ "algo": "pbt", "seed": seed, "member": i, "lr": m.lr, "entropy_coef": m.entropy_coef });
            m.model.checkpoint(meta).save(&d.join("checkpoints").join(format!("member_{i}.plck")))?;
        }
    }
    Ok(members)
}
