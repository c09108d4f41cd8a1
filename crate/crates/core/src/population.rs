//! Hypergraph population training: teammate-interaction hypergraphs, the
//! preference hypergraph and preference centrality, the min-step mixed
//! strategy over teammate subsets, the max-step best-response trainer, and
//! the generational loop.

use std::collections::HashMap;
use std::path::PathBuf;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnvConfig;
use crate::evalkit::{run_episode, EvalError};
use crate::nn::{ActorCritic, Adam, AdamConfig};
use crate::policy::Agent;
use crate::rl::{selfplay_train, train_loop, AcLearner, CriticInput, EnvPool, MetricsRow, MetricsSink, PolicyModel, RlError, TrainConfig};
use crate::rng::{derive_seed, substream, Rng};
use crate::sim::ObsLayout;

pub const DEFAULT_EDGE_EPISODES: usize = 20;
pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("hyperedge {edge} has {got} members, expected {expected}")]
    EdgeSize { edge: usize, expected: usize, got: usize },
    #[error("hyperedge {edge} refers to unknown node {node}")]
    UnknownNode { edge: usize, node: usize },
    #[error("hyperedge {0} has a non-finite weight")]
    NonFiniteWeight(usize),
    #[error("node {0} is not in any hyperedge")]
    Isolated(usize),
    #[error("need at least {need} non-learners, have {have}")]
    InsufficientNonLearners { need: usize, have: usize },
    #[error("mixed strategy has empty support")]
    EmptySupport,
    #[error("learner and non-learner sets overlap at node {0}")]
    Overlap(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Checkpoint(#[from] crate::nn::CheckpointError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperedge {
    /// Node ids in slot order; a node may fill several slots.
    pub members: Vec<usize>,
    pub weight: f64,
}

impl Hyperedge {
    pub fn contains(&self, node: usize) -> bool {
        self.members.contains(&node)
    }
}

/// Population interaction graph: every hyperedge is one full team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypergraph {
    pub nodes: Vec<String>,
    pub edge_size: usize,
    pub edges: Vec<Hyperedge>,
}

impl Hypergraph {
    pub fn new(nodes: Vec<String>, edge_size: usize, edges: Vec<Hyperedge>) -> Result<Self, PopulationError> {
        for (i, e) in edges.iter().enumerate() {
            if e.members.len() != edge_size {
                return Err(PopulationError::EdgeSize { edge: i, expected: edge_size, got: e.members.len() });
            }
            if let Some(&n) = e.members.iter().find(|&&n| n >= nodes.len()) {
                return Err(PopulationError::UnknownNode { edge: i, node: n });
            }
            if !e.weight.is_finite() {
                return Err(PopulationError::NonFiniteWeight(i));
            }
        }
        Ok(Self { nodes, edge_size, edges })
    }

    /// Number of hyperedges containing `node`.
    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.contains(node)).count()
    }
}

/// Each node keeps one outgoing hyperedge: its best incident edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceHypergraph {
    /// Index into the parent graph's edges, per node.
    pub outgoing: Vec<usize>,
}

impl PreferenceHypergraph {
    /// Number of other nodes whose outgoing edge contains `node`.
    pub fn in_degree(&self, g: &Hypergraph, node: usize) -> usize {
        self.outgoing.iter().enumerate().filter(|(j, e)| *j != node && g.edges[**e].contains(node)).count()
    }
}

/// Highest-weight incident edge per node; ties go to the lexicographically
/// smallest member tuple.
pub fn build_preference_hypergraph(g: &Hypergraph) -> Result<PreferenceHypergraph, PopulationError> {
    let mut outgoing = Vec::with_capacity(g.nodes.len());
    for node in 0..g.nodes.len() {
        let mut best: Option<usize> = None;
        for (i, e) in g.edges.iter().enumerate() {
            if !e.contains(node) {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let cur = &g.edges[b];
                    let better = e.weight > cur.weight || (e.weight == cur.weight && e.members < cur.members);
                    Some(if better { i } else { b })
                }
            };
        }
        outgoing.push(best.ok_or(PopulationError::Isolated(node))?);
    }
    Ok(PreferenceHypergraph { outgoing })
}

/// `eta = in-degree in the preference graph / degree in the graph`.
pub fn preference_centrality(pg: &PreferenceHypergraph, g: &Hypergraph, node: usize) -> Result<f64, PopulationError> {
    let d = g.degree(node);
    if d == 0 {
        return Err(PopulationError::Isolated(node));
    }
    Ok(pg.in_degree(g, node) as f64 / d as f64)
}

/// All size-`k` combinations of `items`, in lexicographic order.
pub fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn go(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= items.len() {
        go(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Learner slots joined with every `m`-combination of non-learners, weighted
/// by `weight(members)`.
pub fn build_learner_subgraph(
    nodes: Vec<String>,
    learners: &[usize],
    non_learners: &[usize],
    m: usize,
    mut weight: impl FnMut(&[usize]) -> Result<f64, PopulationError>,
) -> Result<Hypergraph, PopulationError> {
    if let Some(&n) = learners.iter().find(|n| non_learners.contains(n)) {
        return Err(PopulationError::Overlap(n));
    }
    if non_learners.len() < m {
        return Err(PopulationError::InsufficientNonLearners { need: m, have: non_learners.len() });
    }
    let mut edges = Vec::new();
    for combo in combinations(non_learners, m) {
        let mut members = learners.to_vec();
        members.extend(combo);
        let w = weight(&members)?;
        edges.push(Hyperedge { members, weight: w });
    }
    Hypergraph::new(nodes, learners.len() + m, edges)
}

/// How per-node centrality becomes a subset score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetScore {
    #[default]
    Mean,
    Min,
}

impl SubsetScore {
    fn score(self, etas: impl Iterator<Item = f64>) -> f64 {
        let v: Vec<f64> = etas.collect();
        match self {
            SubsetScore::Mean => v.iter().sum::<f64>() / v.len().max(1) as f64,
            SubsetScore::Min => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Distribution over teammate subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub support: Vec<Vec<usize>>,
    pub probabilities: Vec<f64>,
}

impl MixedStrategy {
    pub fn uniform(support: Vec<Vec<usize>>) -> Result<Self, PopulationError> {
        if support.is_empty() {
            return Err(PopulationError::EmptySupport);
        }
        let p = 1.0 / support.len() as f64;
        Ok(Self { probabilities: vec![p; support.len()], support })
    }

    pub fn sample(&self, rng: &mut Rng) -> &[usize] {
        let idx = WeightedIndex::new(&self.probabilities).expect("valid mixed strategy");
        &self.support[idx.sample(rng)]
    }
}

/// Probability of each subset proportional to `1 / (score + eps)`, where
/// the score lifts member centralities (`eta[node]`) to the subset.
pub fn min_step_solve(subsets: Vec<Vec<usize>>, eta: &[f64], eps: f64, lift: SubsetScore) -> Result<MixedStrategy, PopulationError> {
    if subsets.is_empty() {
        return Err(PopulationError::EmptySupport);
    }
    let raw: Vec<f64> = subsets.iter().map(|s| 1.0 / (lift.score(s.iter().map(|&n| eta[n])) + eps)).collect();
    let z: f64 = raw.iter().sum();
    Ok(MixedStrategy { support: subsets, probabilities: raw.iter().map(|r| r / z).collect() })
}

/// Memoized edge weights keyed by (member ids, env, seed).
#[derive(Debug, Clone, Default)]
pub struct EdgeCache {
    map: HashMap<(Vec<String>, String, u64), f64>,
    pub misses: usize,
}

impl EdgeCache {
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Mean return over `episodes` seeded episodes with `team[i]` in slot `i`.
pub fn estimate_edge_weight(
    cfg: &EnvConfig,
    team: &[Agent],
    episodes: usize,
    seed: u64,
    parallel: bool,
    cache: &mut EdgeCache,
) -> Result<f64, PopulationError> {
    let env = serde_json::to_string(cfg)?;
    let key = (team.iter().map(Agent::id).collect::<Vec<_>>(), env, seed);
    if let Some(w) = cache.map.get(&key) {
        return Ok(*w);
    }
    let one = |k: usize| -> Result<f64, EvalError> {
        let s = derive_seed(seed, "edge", &[k as u64]);
        let mut rng = substream(seed, "edge.act", &[k as u64]);
        Ok(run_episode(cfg, s, team, &mut rng, None)?.ret)
    };
    let rets: Vec<f64> = if parallel {
        (0..episodes).into_par_iter().map(one).collect::<Result<_, _>>()?
    } else {
        (0..episodes).map(one).collect::<Result<_, _>>()?
    };
    let w = rets.iter().sum::<f64>() / episodes.max(1) as f64;
    cache.misses += 1;
    cache.map.insert(key, w);
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolaConfig {
    pub generations: usize,
    /// Learner transitions per max step.
    pub steps_per_generation: u64,
    pub edge_episodes: usize,
    pub epsilon: f64,
    pub lift: SubsetScore,
    /// Ablation: replace the min-step strategy with the uniform mixture.
    pub uniform: bool,
    /// Learner transitions for each self-play seed of the initial population.
    pub seed_steps: u64,
    pub seed_policies: usize,
}

impl Default for HolaConfig {
    fn default() -> Self {
        Self {
            generations: 5,
            steps_per_generation: 200_000,
            edge_episodes: DEFAULT_EDGE_EPISODES,
            epsilon: DEFAULT_EPSILON,
            lift: SubsetScore::Mean,
            uniform: false,
            seed_steps: 50_000,
            seed_policies: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PopNode {
    pub id: String,
    pub agent: Agent,
}

/// Non-learner population, the learner being trained, and the edge cache.
pub struct PopulationState {
    pub generation: usize,
    pub nodes: Vec<PopNode>,
    pub learner: AcLearner,
    pub opt: Adam<f32>,
    pub pool: EnvPool,
    pub rng: Rng,
    pub cache: EdgeCache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub members: Vec<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub members: Vec<String>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    pub population: Vec<String>,
    pub learner: String,
    pub edges: Vec<EdgeReport>,
    pub eta: Vec<(String, f64)>,
    pub rho: Vec<SubsetReport>,
    pub uniform: bool,
    pub metrics: Vec<MetricsRow>,
    pub metrics_path: Option<PathBuf>,
}

impl GenerationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl PopulationState {
    /// Fresh learner next to the given non-learner population.
    pub fn new(cfg: &EnvConfig, nodes: Vec<PopNode>, seed: u64, tc: &TrainConfig) -> Result<Self, PopulationError> {
        let obs = ObsLayout::new(cfg).len();
        let net = ActorCritic::new(obs, obs, &tc.hidden, 1, &mut substream(seed, "init", &[]));
        let learner = AcLearner { net, critic: CriticInput::Local };
        let n = cfg.players.num_ctrl;
        Ok(Self {
            generation: 0,
            nodes,
            opt: Adam::new(learner.num_params(), AdamConfig { lr: tc.ppo.lr, ..AdamConfig::default() }),
            learner,
            pool: EnvPool::new(cfg, derive_seed(seed, "env", &[]), tc.num_envs(n)?, n),
            rng: substream(seed, "update", &[]),
            cache: EdgeCache::default(),
        })
    }

    pub fn learner_id(&self) -> String {
        format!("learner@{}", self.generation)
    }

    pub fn learner_agent(&self) -> Agent {
        self.learner.frozen(self.learner_id())
    }
}

/// Greedy, Vicsek and `hc.seed_policies` short self-play runs.
pub fn initial_population(cfg: &EnvConfig, hc: &HolaConfig, seed: u64, tc: &TrainConfig) -> Result<Vec<PopNode>, PopulationError> {
    let mut nodes = vec![
        PopNode { id: "greedy".into(), agent: Agent::Scripted(crate::scripted::ScriptedKind::Greedy) },
        PopNode { id: "vicsek".into(), agent: Agent::Scripted(crate::scripted::ScriptedKind::Vicsek) },
    ];
    for i in 0..hc.seed_policies {
        let mut stc = tc.clone();
        stc.ppo.total_steps = hc.seed_steps;
        stc.out_dir = None;
        let out = selfplay_train(cfg, derive_seed(seed, "population.sp", &[i as u64]), &stc)?;
        let id = format!("sp{i}");
        nodes.push(PopNode { agent: out.model.frozen(id.clone()), id });
    }
    Ok(nodes)
}

/// Train the learner in its slots with teammates drawn from `rho` every
/// episode.
pub fn max_step_train(
    state: &mut PopulationState,
    rho: &MixedStrategy,
    tc: &TrainConfig,
    budget: u64,
    on_iter: &mut dyn FnMut(&AcLearner, &MetricsRow) -> Result<(), RlError>,
) -> Result<Vec<MetricsRow>, PopulationError> {
    let agents: Vec<Vec<Agent>> = rho.support.iter().map(|s| s.iter().map(|&n| state.nodes[n].agent.clone()).collect()).collect();
    let rho = rho.clone();
    let sampler = move |rng: &mut Rng| -> Vec<Agent> {
        let idx = WeightedIndex::new(&rho.probabilities).expect("valid mixed strategy").sample(rng);
        agents[idx].clone()
    };
    let rows = train_loop(&mut state.learner, &mut state.opt, &mut state.pool, &sampler, tc, budget, &mut state.rng, on_iter)?;
    Ok(rows)
}

/// One generation: learner subgraph, preference graph and centralities,
/// mixed strategy (uniform for the ablation), max-step training, then the
/// trained learner joins the population.
pub fn hola_generation(
    cfg: &EnvConfig,
    state: &mut PopulationState,
    hc: &HolaConfig,
    tc: &TrainConfig,
    seed: u64,
) -> Result<GenerationReport, PopulationError> {
    let n = cfg.players.num_ctrl;
    let m = cfg.players.num_p - n;
    let pop = state.nodes.len();
    let learner_node = pop;
    let mut names: Vec<String> = state.nodes.iter().map(|x| x.id.clone()).collect();
    names.push(state.learner_id());
    let mut agents: Vec<Agent> = state.nodes.iter().map(|x| x.agent.clone()).collect();
    agents.push(state.learner_agent());
    let non_learners: Vec<usize> = (0..pop).collect();
    let learners = vec![learner_node; n];
    let edge_seed = derive_seed(seed, "edges", &[state.generation as u64]);
    let cache = &mut state.cache;
    let g = build_learner_subgraph(names.clone(), &learners, &non_learners, m, |members| {
        let team: Vec<Agent> = members.iter().map(|&i| agents[i].clone()).collect();
        estimate_edge_weight(cfg, &team, hc.edge_episodes, edge_seed, tc.parallel, cache)
    })?;
    let pg = build_preference_hypergraph(&g)?;
    let eta: Vec<f64> = (0..names.len()).map(|i| preference_centrality(&pg, &g, i)).collect::<Result<_, _>>()?;
    let subsets = combinations(&non_learners, m);
    let rho = if hc.uniform { MixedStrategy::uniform(subsets)? } else { min_step_solve(subsets, &eta, hc.epsilon, hc.lift)? };
    let (metrics_path, mut sink) = match &tc.out_dir {
        Some(d) => {
            let p = d.join(format!("generation_{}", state.generation)).join("metrics.csv");
            (Some(p.clone()), Some(MetricsSink::create(&p)?))
        }
        None => (None, None),
    };
    let mut on_iter = |_: &AcLearner, row: &MetricsRow| -> Result<(), RlError> {
        if let Some(s) = sink.as_mut() {
            s.write(row)?;
        }
        Ok(())
    };
    let metrics = max_step_train(state, &rho, tc, hc.steps_per_generation, &mut on_iter)?;
    let report = GenerationReport {
        generation: state.generation,
        population: names[..pop].to_vec(),
        learner: names[learner_node].clone(),
        edges: g.edges.iter().map(|e| EdgeReport { members: e.members.iter().map(|&i| names[i].clone()).collect(), weight: e.weight }).collect(),
        eta: names.iter().cloned().zip(eta.iter().copied()).collect(),
        rho: rho
            .support
            .iter()
            .zip(&rho.probabilities)
            .map(|(s, p)| SubsetReport { members: s.iter().map(|&i| names[i].clone()).collect(), probability: *p })
            .collect(),
        uniform: hc.uniform,
        metrics,
        metrics_path,
    };
    let id = format!("hola@{}", state.generation);
    state.nodes.push(PopNode { agent: state.learner.frozen(id.clone()), id });
    state.generation += 1;
    if let Some(d) = &tc.out_dir {
        std::fs::write(d.join(format!("generation_{}.json", report.generation)), report.to_json() + "\n")?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct HolaOutput {
    pub learner: AcLearner,
    pub reports: Vec<GenerationReport>,
    pub population: Vec<String>,
    pub checkpoints: Vec<PathBuf>,
}

/// Full run: initial population, then `hc.generations` generations.
pub fn hola_train(cfg: &EnvConfig, hc: &HolaConfig, seed: u64, tc: &TrainConfig) -> Result<HolaOutput, PopulationError> {
    tc.ppo.validate()?;
    let nodes = initial_population(cfg, hc, seed, tc)?;
    let mut state = PopulationState::new(cfg, nodes, seed, tc)?;
    let mut reports = Vec::with_capacity(hc.generations);
    let mut checkpoints = Vec::new();
    let algo = if hc.uniform { "hola-nog" } else { "hola" };
    for _ in 0..hc.generations {
        let r = hola_generation(cfg, &mut state, hc, tc, seed)?;
        log::info!("generation {} done, population {}", r.generation, state.nodes.len());
        if let Some(d) = &tc.out_dir {
            let step = (r.generation as u64 + 1) * hc.steps_per_generation;
            let p = d.join("checkpoints").join(format!("generation_{}.plck", r.generation));
            state.learner.checkpoint(serde_json::json!({ "algo": algo, "seed": seed, "generation": r.generation, "step": step })).save(&p)?;
            checkpoints.push(p);
        }
        reports.push(r);
    }
    if let Some(d) = &tc.out_dir {
        let p = d.join("checkpoints").join("final.plck");
        state.learner.checkpoint(serde_json::json!({ "algo": algo, "seed": seed, "generations": hc.generations })).save(&p)?;
        checkpoints.push(p);
    }
    Ok(HolaOutput { learner: state.learner, reports, population: state.nodes.iter().map(|n| n.id.clone()).collect(), checkpoints })
}
