//! `pursuit-lab`: validate scenarios, train, evaluate against the unseen
//! zoos, render episodes and build zoo assets.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pursuit_lab::config::{builtin_env_text, parse_config_unchecked, validate_config, ConfigError, EnvConfig, BUILTIN_ENVS};
use pursuit_lab::evalkit::{
    build_zoo, render_svg, run_evaluation, EvalConfig, EvalError, EvalReport, SpAsset, ZooAssets, ZooId, DEFAULT_EPISODES, DEFAULT_SEED_BLOCKS,
};
use pursuit_lab::policy::{load_agent, Agent, PolicyError};
use pursuit_lab::population::{hola_train, HolaConfig, PopulationError};
use pursuit_lab::rl::{mappo_train, pbt_train, selfplay_train, PbtConfig, PolicyModel, RlError, TrainConfig};
use pursuit_lab::sim::TrajectoryLog;
use pursuit_lab::teammate::naht_d_train;

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "pursuit-lab", version, about = "Adaptive-teaming drone pursuit testbed")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Single worker and serial collection; reruns give identical outputs.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check a scenario document; violations are printed one per line.
    Validate {
        #[arg(long)]
        config: String,
    },
    Train(TrainArgs),
    Eval(EvalArgs),
    /// Draw a trajectory log as SVG.
    Render {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    MakeZoo(MakeZooArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Algo {
    Sp,
    Pbt,
    Mappo,
    Hola,
    HolaNog,
    NahtD,
    NahtDNodec,
}

/// Train one of the learners.
#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    /// Built-in scenario name or path to a JSON document.
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Learner transitions (per generation for hola, per member for pbt).
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    out: PathBuf,
    /// Override the episode horizon.
    #[arg(long)]
    horizon: Option<u32>,
    /// Teammate pool for mappo and naht-d.
    #[arg(long, value_delimiter = ',', default_value = "greedy")]
    teammates: Vec<String>,
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    #[arg(long, default_value_t = 5)]
    generations: usize,
    #[arg(long)]
    edge_episodes: Option<usize>,
    /// Learner transitions for each self-play member of the initial population.
    #[arg(long)]
    seed_steps: Option<u64>,
    #[arg(long, default_value_t = 4)]
    pbt_size: usize,
    /// PPO batch size (learner transitions per update).
    #[arg(long)]
    batch: Option<usize>,
}

/// Evaluate checkpoints in the learner slots against a zoo.
#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint paths or scripted ids (greedy, vicsek, random).
    #[arg(long, required = true, num_args = 1..)]
    ckpt: Vec<String>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    zoo: u8,
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = DEFAULT_EPISODES)]
    episodes: usize,
    #[arg(long, default_value_t = DEFAULT_SEED_BLOCKS)]
    seed_blocks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    horizon: Option<u32>,
    /// Zoo asset directory (default: $PURSUIT_LAB_DIR/zoo/<env>).
    #[arg(long)]
    zoo_dir: Option<PathBuf>,
}

/// Train self-play checkpoints, measure their self-play success and write
/// the zoo manifest.
#[derive(Args, Debug)]
struct MakeZooArgs {
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 3)]
    count: usize,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit 1 for domain violations, 2 for usage and I/O problems.
#[derive(Debug)]
enum Fail {
    Domain(String),
    Usage(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Domain(_) => 1,
            Fail::Usage(_) => 2,
        }
    }
}

impl std::fmt::Display for Fail {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fail::Domain(m) | Fail::Usage(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Usage(format!("io: {e}"))
    }
}

impl From<ConfigError> for Fail {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(_) => Fail::Domain(e.to_string()),
            _ => Fail::Usage(e.to_string()),
        }
    }
}

impl From<PolicyError> for Fail {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::ObsDim { .. } => Fail::Domain(e.to_string()),
            _ => Fail::Usage(e.to_string()),
        }
    }
}

impl From<EvalError> for Fail {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Policy(p) => p.into(),
            EvalError::Io(io) => io.into(),
            EvalError::Assets(_) | EvalError::UnknownZoo(_) => Fail::Usage(e.to_string()),
            _ => Fail::Domain(e.to_string()),
        }
    }
}

impl From<RlError> for Fail {
    fn from(e: RlError) -> Self {
        match e {
            RlError::Io(io) => io.into(),
            RlError::Policy(p) => p.into(),
            _ => Fail::Domain(e.to_string()),
        }
    }
}

impl From<PopulationError> for Fail {
    fn from(e: PopulationError) -> Self {
        match e {
            PopulationError::Io(io) => io.into(),
            PopulationError::Rl(r) => r.into(),
            _ => Fail::Domain(e.to_string()),
        }
    }
}

fn asset_root() -> PathBuf {
    std::env::var_os("PURSUIT_LAB_DIR").map_or_else(|| PathBuf::from(".pursuit-lab"), PathBuf::from)
}

/// Document text and a short name for a built-in name or a path.
fn read_env(name_or_path: &str) -> Result<(String, String), Fail> {
    if BUILTIN_ENVS.contains(&name_or_path) {
        return Ok((builtin_env_text(name_or_path)?.to_string(), name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(name_or_path).map_err(|e| Fail::Usage(format!("cannot read {name_or_path}: {e}")))?;
    let name = Path::new(name_or_path).file_stem().map_or_else(|| "env".into(), |s| s.to_string_lossy().into_owned());
    Ok((text, name))
}

fn load_cfg(name_or_path: &str, horizon: Option<u32>) -> Result<(EnvConfig, String, String), Fail> {
    let (text, name) = read_env(name_or_path)?;
    let cfg = parse_config_unchecked(&text)?;
    let v = validate_config(&cfg);
    if !v.is_empty() {
        return Err(ConfigError::Invalid(v).into());
    }
    let cfg = match horizon {
        Some(h) => cfg.with_horizon(h),
        None => cfg,
    };
    Ok((cfg, name, text))
}

fn argv() -> Vec<String> {
    std::env::args().skip(1).collect()
}

fn cmd_validate(config: &str) -> Result<(), Fail> {
    let (text, _) = read_env(config)?;
    let cfg = parse_config_unchecked(&text)?;
    let v = validate_config(&cfg);
    if v.is_empty() {
        println!("ok");
        return Ok(());
    }
    for x in &v {
        println!("{}: {}", x.path, x.message);
    }
    Err(Fail::Domain(format!("{} violation(s)", v.len())))
}

fn train_config(a: &TrainArgs, parallel: bool) -> TrainConfig {
    let mut tc = TrainConfig { parallel, checkpoint_every: a.checkpoint_every, out_dir: Some(a.out.clone()), ..TrainConfig::default() };
    tc.ppo.total_steps = a.steps;
    if let Some(b) = a.batch {
        tc.ppo.batch = b;
        tc.ppo.minibatch = (b / 4).max(1);
    }
    tc
}

/// Adjust the rollout length so the batch splits evenly over learner slots.
fn fit_rollout(tc: &mut TrainConfig, learners: usize) {
    let per = tc.ppo.batch / learners.max(1);
    if tc.ppo.batch % learners.max(1) == 0 && per % tc.rollout_len != 0 {
        tc.rollout_len = (1..=tc.rollout_len).rev().find(|r| per % r == 0).unwrap_or(1);
    }
}

fn pool(ids: &[String], cfg: &EnvConfig) -> Result<Vec<Agent>, Fail> {
    ids.iter()
        .map(|id| {
            let a = load_agent(id)?;
            a.check_env(cfg)?;
            Ok(a)
        })
        .collect()
}

fn cmd_train(a: &TrainArgs, parallel: bool) -> Result<(), Fail> {
    let (cfg, _, text) = load_cfg(&a.env, a.horizon)?;
    let mut inputs = vec![("env".to_string(), text.into_bytes())];
    for t in &a.teammates {
        if Path::new(t.strip_prefix("ckpt:").unwrap_or(t)).is_file() {
            inputs.push((t.clone(), std::fs::read(t.strip_prefix("ckpt:").unwrap_or(t))?));
        }
    }
    RunManifest::new("train", argv(), vec![a.env.clone()], Some(a.seed), &inputs, &a.out).write(&a.out)?;
    std::fs::write(a.out.join("env.json"), cfg.to_json_pretty() + "\n")?;
    let mut tc = train_config(a, parallel);
    let p = &cfg.players;
    match a.algo {
        Algo::Sp => {
            fit_rollout(&mut tc, p.num_p);
            let out = selfplay_train(&cfg, a.seed, &tc)?;
            report_train(&out.checkpoints);
        }
        Algo::Mappo => {
            fit_rollout(&mut tc, p.num_ctrl);
            let out = mappo_train(&cfg, pool(&a.teammates, &cfg)?, a.seed, &tc)?;
            report_train(&out.checkpoints);
        }
        Algo::NahtD | Algo::NahtDNodec => {
            fit_rollout(&mut tc, p.num_ctrl);
            let out = naht_d_train(&cfg, pool(&a.teammates, &cfg)?, a.seed, &tc, a.algo == Algo::NahtD)?;
            report_train(&out.checkpoints);
        }
        Algo::Pbt => {
            fit_rollout(&mut tc, p.num_ctrl);
            let pc = PbtConfig { size: a.pbt_size, ..PbtConfig::default() };
            let members = pbt_train(&cfg, &pc, a.seed, &tc)?;
            for (i, m) in members.iter().enumerate() {
                println!("member {i}: score {:.3} params {}", m.score, m.model.num_params());
            }
        }
        Algo::Hola | Algo::HolaNog => {
            // the initial population is trained in every slot
            fit_rollout(&mut tc, p.num_p);
            fit_rollout(&mut tc, p.num_ctrl);
            let mut hc = HolaConfig { generations: a.generations, steps_per_generation: a.steps, uniform: a.algo == Algo::HolaNog, ..HolaConfig::default() };
            if let Some(e) = a.edge_episodes {
                hc.edge_episodes = e;
            }
            if let Some(s) = a.seed_steps {
                hc.seed_steps = s;
            }
            let out = hola_train(&cfg, &hc, a.seed, &tc)?;
            println!("population: {}", out.population.join(", "));
            report_train(&out.checkpoints);
        }
    }
    Ok(())
}

fn report_train(checkpoints: &[PathBuf]) {
    for c in checkpoints {
        println!("checkpoint {}", c.display());
    }
}

#[derive(Serialize)]
struct EvalEntry<'a> {
    learner: String,
    #[serde(flatten)]
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    env: &'a str,
    zoo: ZooId,
    members: &'a [String],
    learner_slots: usize,
    results: Vec<EvalEntry<'a>>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    learner: &'a str,
    zoo: u8,
    n_episodes: usize,
    seed: u64,
    suc: f64,
    col: usize,
    col_pct: f64,
    timeout_pct: f64,
    ast: Option<f64>,
    rew: f64,
    suc_std: f64,
    col_std: f64,
    rew_std: f64,
}

fn zoo_id(z: u8) -> ZooId {
    match z {
        1 => ZooId::Zoo1,
        2 => ZooId::Zoo2,
        _ => ZooId::Zoo3,
    }
}

fn cmd_eval(a: &EvalArgs, parallel: bool) -> Result<(), Fail> {
    let (cfg, name, text) = load_cfg(&a.env, a.horizon)?;
    let id = zoo_id(a.zoo);
    let zoo_dir = a.zoo_dir.clone().unwrap_or_else(|| asset_root().join("zoo").join(&name));
    let assets = if id == ZooId::Zoo1 { ZooAssets::default() } else { ZooAssets::load(&zoo_dir)? };
    let spec = build_zoo(id, &assets)?;
    let mut inputs = vec![("env".to_string(), text.into_bytes())];
    for c in a.ckpt.iter().chain(&spec.members) {
        let p = c.strip_prefix("ckpt:").unwrap_or(c);
        if Path::new(p).is_file() {
            inputs.push((c.clone(), std::fs::read(p)?));
        }
    }
    RunManifest::new("eval", argv(), vec![a.env.clone()], Some(a.seed), &inputs, &a.report).write(&a.report)?;

    let zoo = spec.agents()?;
    let ec = EvalConfig { n_episodes: a.episodes, seed_blocks: a.seed_blocks, seed: a.seed, parallel };
    let learners = cfg.players.num_ctrl;
    let mut reports = Vec::new();
    for c in &a.ckpt {
        let agent = load_agent(c)?;
        let (r, _) = run_evaluation(&cfg, &agent, learners, &zoo, &ec)?;
        reports.push((agent.id(), r));
    }
    let out = EvalOutput {
        env: &name,
        zoo: id,
        members: &spec.members,
        learner_slots: learners,
        results: reports.iter().map(|(l, r)| EvalEntry { learner: l.clone(), report: r }).collect(),
    };
    std::fs::write(a.report.join("report.json"), serde_json::to_string_pretty(&out).expect("report serializes") + "\n")?;
    let mut w = csv::Writer::from_path(a.report.join("report.csv")).map_err(|e| Fail::Usage(e.to_string()))?;
    for (l, r) in &reports {
        w.serialize(CsvRow {
            learner: l,
            zoo: a.zoo,
            n_episodes: r.n_episodes,
            seed: r.seed,
            suc: r.suc,
            col: r.col,
            col_pct: r.col_pct,
            timeout_pct: r.timeout_pct,
            ast: r.ast,
            rew: r.rew,
            suc_std: r.suc_std,
            col_std: r.col_std,
            rew_std: r.rew_std,
        })
        .map_err(|e| Fail::Usage(e.to_string()))?;
        println!("{l}: SUC {:.1}% COL {} AST {} REW {:.3}", r.suc, r.col, r.ast.map_or("-".into(), |v| format!("{v:.1}")), r.rew);
    }
    w.flush()?;
    Ok(())
}

fn cmd_render(log: &Path, out: &Path) -> Result<(), Fail> {
    let text = std::fs::read_to_string(log).map_err(|e| Fail::Usage(format!("cannot read {}: {e}", log.display())))?;
    let parsed = TrajectoryLog::parse(&text).map_err(|e| Fail::Usage(format!("{}: {e}", log.display())))?;
    if let Some(d) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d)?;
    }
    std::fs::write(out, render_svg(&parsed))?;
    Ok(())
}

fn cmd_make_zoo(a: &MakeZooArgs, parallel: bool) -> Result<(), Fail> {
    let (cfg, name, text) = load_cfg(&a.env, a.horizon)?;
    let dir = a.out.clone().unwrap_or_else(|| asset_root().join("zoo").join(&name));
    RunManifest::new("make-zoo", argv(), vec![a.env.clone()], Some(a.seed), &[("env".into(), text.into_bytes())], &dir).write(&dir)?;
    let mut sp = Vec::new();
    for i in 0..a.count {
        let run = dir.join(format!("sp_{i}"));
        let mut tc = TrainConfig { parallel, out_dir: Some(run.clone()), ..TrainConfig::default() };
        tc.ppo.total_steps = a.steps;
        fit_rollout(&mut tc, cfg.players.num_p);
        let seed = a.seed + i as u64;
        let out = selfplay_train(&cfg, seed, &tc)?;
        let agent = out.model.frozen(format!("sp_{i}"));
        let ec = EvalConfig { n_episodes: a.episodes, seed_blocks: DEFAULT_SEED_BLOCKS, seed, parallel };
        let (r, _) = run_evaluation(&cfg, &agent, cfg.players.num_p, &[], &ec)?;
        let path = out.checkpoints.last().cloned().expect("final checkpoint");
        let rel = path.strip_prefix(&dir).map(Path::to_path_buf).unwrap_or(path);
        println!("sp_{i}: self-play SUC {:.1}%", r.suc);
        sp.push(SpAsset { id: format!("sp_{i}"), path: rel, selfplay_suc: r.suc });
    }
    ZooAssets { env: name, sp }.save(&dir)?;
    println!("zoo manifest {}", dir.join("zoo.json").display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Fail> {
    let jobs = if cli.deterministic { Some(1) } else { cli.jobs };
    if let Some(j) = jobs {
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let parallel = !cli.deterministic && jobs != Some(1);
    match &cli.cmd {
        Cmd::Validate { config } => cmd_validate(config),
        Cmd::Train(a) => cmd_train(a, parallel),
        Cmd::Eval(a) => cmd_eval(a, parallel),
        Cmd::Render { log, out } => cmd_render(log, out),
        Cmd::MakeZoo(a) => cmd_make_zoo(a, parallel),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
