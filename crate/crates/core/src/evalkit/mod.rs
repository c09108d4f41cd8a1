//! Unseen-teammate zoos, the evaluation protocol, metrics and reports.

mod render;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnvConfig;
use crate::policy::{load_agent, Agent, History, PolicyError};
use crate::rl::EpisodeRecord;
use crate::rng::{derive_seed, substream, Rng};
use crate::sim::{reset, step, ActionCmd, ObsLayout, SimError, Terminal, TrajectoryWriter};
use crate::teammate::HISTORY_LEN;

pub use render::render_svg;

pub const DEFAULT_EPISODES: usize = 250;
pub const DEFAULT_SEED_BLOCKS: usize = 5;
pub const ZOO_MANIFEST: &str = "zoo.json";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episode records")]
    Empty,
    #[error("zoo assets: {0}")]
    Assets(String),
    #[error("unknown zoo `{0}` (expected 1, 2 or 3)")]
    UnknownZoo(String),
    #[error("team needs {need} slots filled, got {learners} learner slots and an empty zoo")]
    Team { need: usize, learners: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("log: {0}")]
    Log(#[from] crate::sim::LogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZooId {
    Zoo1,
    Zoo2,
    Zoo3,
}

impl std::str::FromStr for ZooId {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "zoo1" => Ok(ZooId::Zoo1),
            "2" | "zoo2" => Ok(ZooId::Zoo2),
            "3" | "zoo3" => Ok(ZooId::Zoo3),
            _ => Err(EvalError::UnknownZoo(s.to_string())),
        }
    }
}

/// A self-play checkpoint available for zoo 2, with its measured self-play
/// success rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpAsset {
    pub id: String,
    pub path: PathBuf,
    pub selfplay_suc: f64,
}

/// Contents of a zoo directory manifest; relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZooAssets {
    pub env: String,
    pub sp: Vec<SpAsset>,
}

impl ZooAssets {
    pub fn load(dir: &Path) -> Result<Self, EvalError> {
        let path = dir.join(ZOO_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| EvalError::Assets(format!("{}: {e}", path.display())))?;
        let mut a: ZooAssets = serde_json::from_str(&text).map_err(|e| EvalError::Assets(format!("{}: {e}", path.display())))?;
        for s in &mut a.sp {
            if s.path.is_relative() {
                s.path = dir.join(&s.path);
            }
        }
        Ok(a)
    }

    pub fn save(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("zoo manifest serializes");
        std::fs::write(dir.join(ZOO_MANIFEST), text + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooSpec {
    pub id: ZooId,
    /// Policy ids (`greedy`, `ckpt:<path>`, ...).
    pub members: Vec<String>,
    /// Self-play success of checkpoint members, where known.
    pub selfplay_suc: Vec<Option<f64>>,
}

impl ZooSpec {
    pub fn agents(&self) -> Result<Vec<Agent>, EvalError> {
        Ok(self.members.iter().map(|m| load_agent(m)).collect::<Result<_, _>>()?)
    }
}

fn zoo2_members(assets: &ZooAssets) -> Result<(Vec<String>, Vec<Option<f64>>), EvalError> {
    if assets.sp.len() < 2 {
        return Err(EvalError::Assets(format!("zoo 2 needs at least two self-play checkpoints, found {}", assets.sp.len())));
    }
    // widest separation; earliest pair on ties
    let mut best = (0, 1);
    let mut gap = -1.0;
    for i in 0..assets.sp.len() {
        for j in i + 1..assets.sp.len() {
            let g = (assets.sp[i].selfplay_suc - assets.sp[j].selfplay_suc).abs();
            if g > gap {
                gap = g;
                best = (i, j);
            }
        }
    }
    let (mut hi, mut lo) = (&assets.sp[best.0], &assets.sp[best.1]);
    if lo.selfplay_suc > hi.selfplay_suc {
        std::mem::swap(&mut hi, &mut lo);
    }
    Ok((
        vec![format!("ckpt:{}", hi.path.display()), format!("ckpt:{}", lo.path.display())],
        vec![Some(hi.selfplay_suc), Some(lo.selfplay_suc)],
    ))
}

/// Zoo 1 is greedy only; zoo 2 the two self-play checkpoints with the most
/// separated self-play success (stronger first); zoo 3 their union.
pub fn build_zoo(id: ZooId, assets: &ZooAssets) -> Result<ZooSpec, EvalError> {
    match id {
        ZooId::Zoo1 => Ok(ZooSpec { id, members: vec!["greedy".into()], selfplay_suc: vec![None] }),
        ZooId::Zoo2 => {
            let (members, selfplay_suc) = zoo2_members(assets)?;
            Ok(ZooSpec { id, members, selfplay_suc })
        }
        ZooId::Zoo3 => {
            let (m2, s2) = zoo2_members(assets)?;
            let mut members = vec!["greedy".to_string()];
            members.extend(m2);
            let mut selfplay_suc = vec![None];
            selfplay_suc.extend(s2);
            Ok(ZooSpec { id, members, selfplay_suc })
        }
    }
}

/// Uniform draw, with replacement, of `k` zoo members.
pub fn sample_members(zoo: &[Agent], k: usize, rng: &mut Rng) -> Vec<Agent> {
    use rand::Rng as _;
    (0..k).map(|_| zoo[rng.random_range(0..zoo.len())].clone()).collect()
}

/// Play one episode with `team[i]` in pursuer slot `i`, acting
/// deterministically except for the random baseline.
pub fn run_episode(
    cfg: &EnvConfig,
    seed: u64,
    team: &[Agent],
    rng: &mut Rng,
    mut log: Option<&mut TrajectoryWriter<&mut dyn std::io::Write>>,
) -> Result<EpisodeRecord, EvalError> {
    let (mut state, mut obs) = reset(cfg, seed)?;
    if let Some(w) = log.as_deref_mut() {
        w.record_reset(&state)?;
    }
    let obs_len = ObsLayout::new(cfg).len();
    let mut hist: Vec<History> = (0..team.len()).map(|_| History::new(HISTORY_LEN, obs_len)).collect();
    let mut ret = 0.0;
    loop {
        let mut actions = Vec::with_capacity(team.len());
        for (i, agent) in team.iter().enumerate() {
            hist[i].push_obs(&obs[i].0);
            let window = if agent.needs_window() { hist[i].window() } else { Vec::new() };
            actions.push(ActionCmd::new(agent.act(cfg, &state, i, &obs[i].0, &window, rng)));
        }
        for (h, a) in hist.iter_mut().zip(&actions) {
            h.push_action(a.steer() as f32);
        }
        let out = step(cfg, &mut state, &actions)?;
        ret += out.reward;
        if let Some(w) = log.as_deref_mut() {
            let a: Vec<f64> = actions.iter().map(|a| a.steer()).collect();
            w.record_step(&state, &a, &out)?;
        }
        if out.terminal != Terminal::Running {
            return Ok(EpisodeRecord {
                seed,
                terminal: out.terminal,
                steps: state.step,
                ret,
                team: team.iter().map(Agent::id).collect(),
            });
        }
        obs = out.observations;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_episodes: usize,
    pub seed_blocks: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_episodes: DEFAULT_EPISODES, seed_blocks: DEFAULT_SEED_BLOCKS, seed: 0, parallel: true }
    }
}

/// Seed block of episode `k` out of `n`.
pub fn block_of(k: usize, n: usize, blocks: usize) -> usize {
    (k * blocks / n.max(1)).min(blocks.saturating_sub(1))
}

/// Learner in slots `0..learners`, zoo members drawn per episode for the
/// rest. Records come back in episode order.
pub fn run_evaluation(
    cfg: &EnvConfig,
    learner: &Agent,
    learners: usize,
    zoo: &[Agent],
    ec: &EvalConfig,
) -> Result<(EvalReport, Vec<EpisodeRecord>), EvalError> {
    learner.check_env(cfg)?;
    for z in zoo {
        z.check_env(cfg)?;
    }
    let num_p = cfg.players.num_p;
    let learners = learners.min(num_p);
    if learners < num_p && zoo.is_empty() {
        return Err(EvalError::Team { need: num_p, learners });
    }
    let one = |k: usize| -> Result<EpisodeRecord, EvalError> {
        let b = block_of(k, ec.n_episodes, ec.seed_blocks) as u64;
        let seed = derive_seed(ec.seed, "eval", &[b, k as u64]);
        let mut rng = substream(ec.seed, "eval.team", &[b, k as u64]);
        let mut team = vec![learner.clone(); learners];
        team.extend(sample_members(zoo, num_p - learners, &mut rng));
        run_episode(cfg, seed, &team, &mut rng, None)
    };
    let records: Vec<EpisodeRecord> = if ec.parallel {
        (0..ec.n_episodes).into_par_iter().map(one).collect::<Result<_, _>>()?
    } else {
        (0..ec.n_episodes).map(one).collect::<Result<_, _>>()?
    };
    let mut report = compute_metrics(&records, ec.seed_blocks)?;
    report.seed = ec.seed;
    Ok((report, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_episodes: usize,
    pub seed: u64,
    pub seed_blocks: usize,
    /// Percentage of episodes ending with every evader captured.
    pub suc: f64,
    /// Number of collision-terminated episodes.
    pub col: usize,
    pub col_pct: f64,
    pub timeout_pct: f64,
    /// Mean steps of successful episodes; `None` without successes.
    pub ast: Option<f64>,
    pub rew: f64,
    pub suc_std: f64,
    pub col_std: f64,
    pub rew_std: f64,
}

fn pop_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn summarize(records: &[EpisodeRecord]) -> (f64, usize, f64, Option<f64>, f64) {
    let n = records.len() as f64;
    let succ: Vec<&EpisodeRecord> = records.iter().filter(|r| r.terminal == Terminal::Success).collect();
    let col = records.iter().filter(|r| r.terminal == Terminal::Collision).count();
    let timeouts = records.iter().filter(|r| r.terminal == Terminal::Timeout).count();
    let ast = (!succ.is_empty()).then(|| succ.iter().map(|r| r.steps as f64).sum::<f64>() / succ.len() as f64);
    let rew = records.iter().map(|r| r.ret).sum::<f64>() / n;
    (100.0 * succ.len() as f64 / n, col, 100.0 * timeouts as f64 / n, ast, rew)
}

/// SUC, COL, AST and REW over `records`, with dispersion across
/// `seed_blocks` consecutive blocks.
pub fn compute_metrics(records: &[EpisodeRecord], seed_blocks: usize) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = records.len();
    let (suc, col, timeout_pct, ast, rew) = summarize(records);
    let blocks = seed_blocks.clamp(1, n);
    let mut per: Vec<Vec<EpisodeRecord>> = vec![Vec::new(); blocks];
    for (k, r) in records.iter().enumerate() {
        per[block_of(k, n, blocks)].push(r.clone());
    }
    let stats: Vec<_> = per.iter().filter(|b| !b.is_empty()).map(|b| summarize(b)).collect();
    let s: Vec<f64> = stats.iter().map(|x| x.0).collect();
    let c: Vec<f64> = stats.iter().map(|x| x.1 as f64).collect();
    let r: Vec<f64> = stats.iter().map(|x| x.4).collect();
    Ok(EvalReport {
        n_episodes: n,
        seed: 0,
        seed_blocks: blocks,
        suc,
        col,
        col_pct: 100.0 * col as f64 / n as f64,
        timeout_pct,
        ast,
        rew,
        suc_std: pop_std(&s),
        col_std: pop_std(&c),
        rew_std: pop_std(&r),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(self)?;
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}
