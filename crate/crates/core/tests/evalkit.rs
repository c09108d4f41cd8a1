use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pursuit_lab::config::builtin_env;
use pursuit_lab::evalkit::*;
use pursuit_lab::policy::Agent;
use pursuit_lab::rl::EpisodeRecord;
use pursuit_lab::rng::substream;
use pursuit_lab::scripted::ScriptedKind;
use pursuit_lab::sim::{Terminal, TrajectoryLog, TrajectoryWriter};
use rand::Rng as _;

fn rec(terminal: Terminal, steps: u32, ret: f64) -> EpisodeRecord {
    EpisodeRecord { seed: 0, terminal, steps, ret, team: vec![] }
}

#[test]
fn metrics_fixture() {
    let records = vec![
        rec(Terminal::Success, 100, 10.0),
        rec(Terminal::Success, 200, 8.0),
        rec(Terminal::Success, 300, 6.0),
        rec(Terminal::Collision, 50, -10.0),
        rec(Terminal::Timeout, 400, -4.0),
    ];
    let r = compute_metrics(&records, 5).unwrap();
    assert_eq!(r.suc, 60.0);
    assert_eq!(r.col, 1);
    assert_eq!(r.col_pct, 20.0);
    assert_eq!(r.timeout_pct, 20.0);
    assert_eq!(r.ast, Some(200.0));
    assert_eq!(r.rew, 2.0);
    assert_eq!(r.n_episodes, 5);
}

#[test]
fn extreme_record_sets() {
    let all: Vec<_> = (0..7).map(|k| rec(Terminal::Success, 10 + k, 1.0)).collect();
    let r = compute_metrics(&all, 5).unwrap();
    assert_eq!((r.suc, r.col), (100.0, 0));
    let crash: Vec<_> = (0..7).map(|_| rec(Terminal::Collision, 3, -10.0)).collect();
    let r = compute_metrics(&crash, 5).unwrap();
    assert_eq!((r.suc, r.col, r.ast), (0.0, 7, None));
    assert!(matches!(compute_metrics(&[], 5), Err(EvalError::Empty)));
}

#[test]
fn terminal_classes_partition_episodes() {
    let mut rng = substream(2, "partition", &[]);
    let classes = [Terminal::Success, Terminal::Collision, Terminal::Timeout];
    for _ in 0..200 {
        let n = rng.random_range(1..80);
        let records: Vec<_> =
            (0..n).map(|_| rec(classes[rng.random_range(0..3)], rng.random_range(1..300), rng.random_range(-10.0..10.0))).collect();
        let r = compute_metrics(&records, 5).unwrap();
        assert!((r.suc + 100.0 * r.col as f64 / n as f64 + r.timeout_pct - 100.0).abs() < 1e-9);
        assert!((0.0..=100.0).contains(&r.suc));
        assert!(r.col <= n);
        assert_eq!(r.ast.is_some(), records.iter().any(|x| x.terminal == Terminal::Success));
    }
}

fn assets() -> ZooAssets {
    let sp = |id: &str, s: f64| SpAsset { id: id.into(), path: PathBuf::from(format!("/zoo/{id}.plck")), selfplay_suc: s };
    ZooAssets { env: "4p2e3o".into(), sp: vec![sp("a", 61.0), sp("b", 48.0), sp("c", 72.0), sp("d", 66.0)] }
}

#[test]
fn zoo_membership() {
    let z1 = build_zoo(ZooId::Zoo1, &ZooAssets::default()).unwrap();
    assert_eq!(z1.members, vec!["greedy"]);

    let z2 = build_zoo(ZooId::Zoo2, &assets()).unwrap();
    assert_eq!(z2.members, vec!["ckpt:/zoo/c.plck", "ckpt:/zoo/b.plck"]);
    assert_eq!(z2.selfplay_suc, vec![Some(72.0), Some(48.0)]);

    let z3 = build_zoo(ZooId::Zoo3, &assets()).unwrap();
    let mut want = z1.members.clone();
    want.extend(z2.members.clone());
    assert_eq!(z3.members, want);

    let mut one = assets();
    one.sp.truncate(1);
    assert!(matches!(build_zoo(ZooId::Zoo2, &one), Err(EvalError::Assets(_))));
    assert!(matches!("4".parse::<ZooId>(), Err(EvalError::UnknownZoo(_))));
}

#[test]
fn zoo_assets_round_trip_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = assets();
    a.sp[0].path = PathBuf::from("sp_0.plck");
    a.save(dir.path()).unwrap();
    let back = ZooAssets::load(dir.path()).unwrap();
    assert_eq!(back.sp[0].path, dir.path().join("sp_0.plck"));
    assert_eq!(back.sp[1], a.sp[1]);
}

#[test]
fn zoo3_sampling_is_uniform() {
    // stand-ins for the three zoo-3 members
    let zoo = vec![Agent::Scripted(ScriptedKind::Greedy), Agent::Scripted(ScriptedKind::Vicsek), Agent::Random];
    let mut rng = substream(11, "zoo", &[]);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let draws = 10_000;
    for _ in 0..draws {
        for a in sample_members(&zoo, 1, &mut rng) {
            *counts.entry(a.id()).or_default() += 1;
        }
    }
    assert_eq!(counts.len(), 3);
    for (id, c) in counts {
        let f = c as f64 / draws as f64;
        assert!((f - 1.0 / 3.0).abs() < 0.02, "{id}: {f}");
    }
}

fn ec(n: usize, seed: u64) -> EvalConfig {
    EvalConfig { n_episodes: n, seed_blocks: 5, seed, parallel: false }
}

#[test]
fn single_episode_report_is_that_episode() {
    let cfg = builtin_env("4p2e3o").unwrap().with_horizon(300);
    let greedy = Agent::Scripted(ScriptedKind::Greedy);
    let (r, records) = run_evaluation(&cfg, &greedy, 4, &[], &ec(1, 9)).unwrap();
    assert_eq!(records.len(), 1);
    let e = &records[0];
    let mut rng = substream(0, "unused", &[]);
    let again = run_episode(&cfg, e.seed, &vec![greedy; 4], &mut rng, None).unwrap();
    assert_eq!(&again, e);
    assert_eq!(r.n_episodes, 1);
    assert_eq!(r.suc, if e.terminal == Terminal::Success { 100.0 } else { 0.0 });
    assert_eq!(r.col, usize::from(e.terminal == Terminal::Collision));
    assert_eq!(r.rew, e.ret);
    assert_eq!(r.ast, (e.terminal == Terminal::Success).then_some(e.steps as f64));
}

#[test]
fn evaluation_is_deterministic_and_bounded() {
    let cfg = builtin_env("4p2e3o").unwrap().with_horizon(300);
    let zoo = vec![Agent::Scripted(ScriptedKind::Greedy), Agent::Scripted(ScriptedKind::Vicsek)];
    let learner = Agent::Scripted(ScriptedKind::Vicsek);
    let (a, ra) = run_evaluation(&cfg, &learner, 2, &zoo, &ec(40, 3)).unwrap();
    let (b, rb) = run_evaluation(&cfg, &learner, 2, &zoo, &EvalConfig { parallel: true, ..ec(40, 3) }).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    if let Some(ast) = a.ast {
        assert!(ast <= 300.0);
    }
    assert!(ra.iter().all(|r| r.steps <= 300));
    assert!(ra.iter().all(|r| r.team.len() == 4 && r.team[..2].iter().all(|t| t == "vicsek")));
    let (c, _) = run_evaluation(&cfg, &learner, 2, &zoo, &ec(40, 4)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn missing_teammates_is_an_error() {
    let cfg = builtin_env("4p2e3o").unwrap();
    let r = run_evaluation(&cfg, &Agent::Random, 2, &[], &ec(2, 0));
    assert!(matches!(r, Err(EvalError::Team { .. })));
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[test]
fn render_matches_golden_file() {
    let log_text = std::fs::read_to_string(fixture_dir().join("episode_4p2e3o.jsonl")).unwrap();
    let log = TrajectoryLog::parse(&log_text).unwrap();
    let svg = render_svg(&log);
    let golden = fixture_dir().join("episode_4p2e3o.svg");
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&golden, &svg).unwrap();
    }
    assert_eq!(svg, std::fs::read_to_string(golden).unwrap());
    assert_eq!(render_svg(&log), svg);
}

#[test]
fn single_step_log_has_one_marker_per_agent() {
    let cfg = builtin_env("4p2e3o").unwrap();
    let (s, _) = pursuit_lab::sim::reset(&cfg, 5).unwrap();
    let mut w = TrajectoryWriter::new(Vec::new(), &cfg, Some(5)).unwrap();
    w.record_reset(&s).unwrap();
    let log = TrajectoryLog::parse(std::str::from_utf8(&w.into_inner()).unwrap()).unwrap();
    let svg = render_svg(&log);
    let markers = svg.lines().filter(|l| l.starts_with("<circle cx") && l.contains(r#"r="6.00""#)).count();
    assert_eq!(markers, cfg.players.num_p + cfg.players.num_e);
    assert!(!svg.contains("polyline"));
}
