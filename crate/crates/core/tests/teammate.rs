use pursuit_lab::config::builtin_env;
use pursuit_lab::nn::{ActorCritic, Real};
use pursuit_lab::policy::Agent;
use pursuit_lab::rl::{ac_sample_grad, PpoConfig, Sample, TrainConfig};
use pursuit_lab::rng::{substream, Rng};
use pursuit_lab::scripted::ScriptedKind;
use pursuit_lab::sim::ObsLayout;
use pursuit_lab::teammate::*;
use rand::Rng as _;

const H: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

fn check(analytic: &[f64], numeric: &[f64], tol: f64) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert!(rel_err(*a, *n) < tol || (a - n).abs() < 1e-9, "index {i}: analytic {a} numeric {n}");
    }
}

fn numeric_grad(p: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            q[i] = p[i] + H;
            let up = f(&q);
            q[i] = p[i] - H;
            let dn = f(&q);
            q[i] = p[i];
            (up - dn) / (2.0 * H)
        })
        .collect()
}

fn shape() -> TeamShape {
    let cfg = builtin_env("4p2e3o").unwrap();
    TeamShape { layout: ObsLayout::new(&cfg), num_ctrl: cfg.players.num_ctrl, history: HISTORY_LEN }
}

fn uniform(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn encoder_parameter_gradients() {
    let mut rng = substream(3, "enc", &[]);
    let mut enc = TeamEncoder::<f64>::new(shape(), &mut rng);
    enc.logits = vec![0.3, -0.2, 0.5];
    let window = uniform(&mut rng, shape().window_len());
    let w = uniform(&mut rng, EMBED_DIM);
    let (_, cache) = enc.forward(&window).unwrap();
    let mut g = vec![0.0; enc.num_params()];
    enc.backward(&cache, &w, &mut g).unwrap();
    let num = numeric_grad(&enc.flat(), |p| {
        let mut e = enc.clone();
        e.set_flat(p).unwrap();
        e.forward(&window).unwrap().0.iter().zip(&w).map(|(a, b)| a * b).sum()
    });
    check(&g, &num, 1e-4);
}

#[test]
fn reconstruction_gradients() {
    let mut rng = substream(4, "dec", &[]);
    let dec = new_decoder::<f64>(&mut rng);
    let emb = uniform(&mut rng, EMBED_DIM);
    let rows: Vec<[f64; 3]> = (0..2).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let targets = uniform(&mut rng, 2);
    let mut g = vec![0.0; dec.num_params()];
    let (loss, d_emb) = reconstruction_grad(&dec, &emb, &rows, &targets, SIGMA_TARGET, 1.0, &mut g).unwrap();
    assert!((loss - reconstruction_loss(&dec, &emb, &rows, &targets, SIGMA_TARGET).unwrap()).abs() < 1e-12);
    assert!(loss >= 0.0);

    let num = numeric_grad(dec.params(), |p| {
        let mut d = dec.clone();
        d.params_mut().copy_from_slice(p);
        reconstruction_loss(&d, &emb, &rows, &targets, SIGMA_TARGET).unwrap()
    });
    check(&g, &num, 1e-4);
    let num_e = numeric_grad(&emb, |e| reconstruction_loss(&dec, e, &rows, &targets, SIGMA_TARGET).unwrap());
    check(&d_emb, &num_e, 1e-4);
}

#[test]
fn reconstruction_is_non_negative() {
    let mut rng = substream(5, "zero", &[]);
    let dec = new_decoder::<f64>(&mut rng);
    for _ in 0..50 {
        let emb = uniform(&mut rng, EMBED_DIM);
        let rows = vec![[0.1, -0.2, 0.4]];
        let targets = uniform(&mut rng, 1);
        assert!(reconstruction_loss(&dec, &emb, &rows, &targets, SIGMA_TARGET).unwrap() >= 0.0);
    }
    assert_eq!(reconstruction_loss(&dec, &[0.0; EMBED_DIM], &[], &[], SIGMA_TARGET).unwrap(), 0.0);
}

fn fixture(rng: &mut Rng, m: &NahtModel<f64>, critic_in: usize) -> (Sample, f64, f64) {
    let sh = m.shape();
    let f = |rng: &mut Rng, n: usize| -> Vec<f32> { (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect() };
    let obs = f(rng, sh.layout.len());
    let window = f(rng, sh.window_len());
    let nm = sh.num_pursuers() - sh.num_ctrl;
    let mate_rows: Vec<[f32; 3]> = (0..nm).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let mate_actions = f(rng, nm);
    let critic = f(rng, critic_in);
    let to64 = |v: &[f32]| v.iter().map(|x| *x as f64).collect::<Vec<f64>>();
    let (emb, _) = m.embed(&to64(&window)).unwrap();
    let (head, _) = m.ac.head(&m.actor_input(&to64(&obs), &emb)).unwrap();
    let action = rng.random_range(-0.8f32..0.8);
    // Keep the ratio strictly inside the clip range so the loss is smooth.
    let log_prob = (head.log_prob(&[action as f64]) - 0.05) as f32;
    let s = Sample { obs, critic_in: critic, window, mate_rows, mate_actions, action, log_prob, value: 0.3, reward: 0.0, done: false };
    (s, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

#[test]
fn joint_loss_gradient_end_to_end() {
    let sh = shape();
    let critic_in = 30;
    let mut rng = substream(6, "joint", &[]);
    for dec in [true, false] {
        let mut m = NahtModel::<f64>::new(sh, critic_in, &[8, 8], dec, &mut rng);
        m.encoder.logits = vec![0.2, -0.1, 0.4];
        let cfg = PpoConfig::default();
        for _ in 0..3 {
            let (s, adv, ret) = fixture(&mut rng, &m, critic_in);
            let mut g = vec![0.0; m.num_params()];
            let t = naht_sample_grad(&m, &s, adv, ret, &cfg, &mut g).unwrap();
            assert_eq!(t.clipped, 0.0);
            let num = numeric_grad(&m.flat(), |p| {
                let mut q = m.clone();
                q.set_flat(p).unwrap();
                naht_sample_grad(&q, &s, adv, ret, &cfg, &mut vec![0.0; q.num_params()]).unwrap().total
            });
            check(&g, &num, 1e-3);
        }
    }
}

#[test]
fn encoder_is_invariant_to_teammate_order() {
    let sh = shape();
    let mut rng = substream(7, "perm", &[]);
    let enc = TeamEncoder::<f64>::new(sh, &mut rng);
    let window = uniform(&mut rng, sh.window_len());
    let (base, _) = enc.forward(&window).unwrap();
    let e = sh.entry_len();
    let t = sh.layout.teammate_range().start;
    let n = sh.layout.num_teammates;
    let mut permuted = window.clone();
    for k in 0..sh.history {
        for j in 0..n {
            let src = (j + 1) % n;
            for c in 0..3 {
                permuted[k * e + t + 3 * j + c] = window[k * e + t + 3 * src + c];
            }
        }
    }
    assert_ne!(permuted, window);
    let (p, _) = enc.forward(&permuted).unwrap();
    for (a, b) in base.iter().zip(&p) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_embedding_and_no_reconstruction_reduce_to_plain_update() {
    let sh = shape();
    let critic_in = 30;
    let mut rng = substream(8, "beta0", &[]);
    let mut m = NahtModel::<f64>::new(sh, critic_in, &[8, 8], true, &mut rng);
    m.beta = 0.0;
    m.zero_embedding = true;
    let plain: ActorCritic<f64> = m.ac.clone();
    let cfg = PpoConfig::default();
    let na = plain.num_params();
    let mut g_naht = vec![0.0; m.num_params()];
    let mut g_plain = vec![0.0; na];
    for _ in 0..8 {
        let (s, adv, ret) = fixture(&mut rng, &m, critic_in);
        let t = naht_sample_grad(&m, &s, adv, ret, &cfg, &mut g_naht).unwrap();
        let mut ps = s.clone();
        ps.obs.extend(std::iter::repeat_n(0.0, EMBED_DIM));
        ps.window.clear();
        let tp = ac_sample_grad(&plain, &ps, adv, ret, &cfg, &mut g_plain).unwrap();
        assert!((t.total - tp.total).abs() < 1e-12);
    }
    for (a, b) in g_naht[..na].iter().zip(&g_plain) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(g_naht[na..].iter().all(|v| *v == 0.0));
}

#[test]
fn actor_input_appends_embedding() {
    let sh = shape();
    let m = NahtModel::<f32>::new(sh, 30, &[8], true, &mut substream(9, "in", &[]));
    let obs = vec![0.5f32; sh.layout.len()];
    let (emb, _) = m.embed(&vec![0.1; sh.window_len()]).unwrap();
    assert_eq!(m.actor_input(&obs, &emb).len(), sh.layout.len() + 16);
    assert_eq!(m.ac.actor.sizes()[0], sh.layout.len() + 16);
}

fn tiny_tc(steps: u64) -> TrainConfig {
    TrainConfig {
        ppo: PpoConfig { batch: 256, minibatch: 128, epochs: 2, total_steps: steps, ..PpoConfig::default() },
        hidden: vec![16, 16],
        rollout_len: 64,
        parallel: false,
        ..TrainConfig::default()
    }
}

#[test]
fn decoder_free_ablation_has_no_reconstruction_term() {
    let cfg = builtin_env("4p2e3o").unwrap().with_horizon(100);
    let pool = vec![Agent::Scripted(ScriptedKind::Greedy), Agent::Random];
    let out = naht_d_train(&cfg, pool.clone(), 1, &tiny_tc(1024), false).unwrap();
    assert!(!out.metrics.is_empty());
    assert!(out.metrics.iter().all(|r| r.recon_loss == 0.0));
    assert!(out.model.net.decoder.is_none());

    let full = naht_d_train(&cfg, pool, 1, &tiny_tc(1024), true).unwrap();
    assert!(full.metrics.iter().all(|r| r.recon_loss > 0.0 && r.recon_loss.is_finite()));
}

#[test]
fn teammate_training_replays() {
    let cfg = builtin_env("4p2e3o").unwrap().with_horizon(100);
    let pool = vec![Agent::Scripted(ScriptedKind::Vicsek)];
    let a = naht_d_train(&cfg, pool.clone(), 4, &tiny_tc(512), true).unwrap();
    let b = naht_d_train(&cfg, pool, 4, &tiny_tc(512), true).unwrap();
    assert_eq!(a.model, b.model);
    let f64_params = a.model.net.cast::<f64>().flat();
    assert!(f64_params.iter().all(|v| v.to_f64_lossy().is_finite()));
}
