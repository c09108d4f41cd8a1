use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::{normalize_advantages, LossTerms, PolicyModel, PpoConfig, RlError, Sample};
use crate::nn::Adam;
use crate::rng::Rng;

/// Gradient reduction granularity. Chunks are summed in index order, so the
/// result does not depend on the number of worker threads.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub samples: Vec<Sample>,
    pub advantages: Vec<f32>,
    pub returns: Vec<f32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub recon_loss: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
    /// Largest `|ratio - 1|` in the first minibatch of the first epoch.
    pub first_ratio_dev: f64,
    pub grad_steps: usize,
}

fn chunk_grad<M: PolicyModel>(
    model: &M,
    batch: &Batch,
    adv: &[f32],
    idx: &[usize],
    cfg: &PpoConfig,
) -> Result<(Vec<f32>, LossTerms, f64), RlError> {
    let mut g = vec![0.0f32; model.num_params()];
    let mut t = LossTerms::default();
    let mut dev = 0.0f64;
    for &i in idx {
        let s = model.sample_grad(&batch.samples[i], adv[i], batch.returns[i], cfg, &mut g)?;
        dev = dev.max((s.ratio - 1.0).abs());
        t.add(&s);
    }
    Ok((g, t, dev))
}

/// Mean gradient and loss terms over `idx`.
fn minibatch_grad<M: PolicyModel>(
    model: &M,
    batch: &Batch,
    adv: &[f32],
    idx: &[usize],
    cfg: &PpoConfig,
    parallel: bool,
) -> Result<(Vec<f32>, LossTerms, f64), RlError> {
    let chunks: Vec<&[usize]> = idx.chunks(CHUNK).collect();
    let parts: Vec<Result<_, RlError>> = if parallel {
        chunks.par_iter().map(|c| chunk_grad(model, batch, adv, c, cfg)).collect()
    } else {
        chunks.iter().map(|c| chunk_grad(model, batch, adv, c, cfg)).collect()
    };
    let mut grad = vec![0.0f32; model.num_params()];
    let mut terms = LossTerms::default();
    let mut dev = 0.0f64;
    for p in parts {
        let (g, t, d) = p?;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += *b;
        }
        terms.add(&t);
        dev = dev.max(d);
    }
    let k = 1.0 / idx.len() as f32;
    grad.iter_mut().for_each(|v| *v *= k);
    Ok((grad, terms.scaled(1.0 / idx.len() as f64), dev))
}

/// Mean loss terms of `samples` under `model` with the given (already
/// normalized) advantages; no update is applied.
pub fn minibatch_loss<M: PolicyModel>(model: &M, batch: &Batch, cfg: &PpoConfig) -> Result<(LossTerms, Vec<f32>), RlError> {
    let idx: Vec<usize> = (0..batch.len()).collect();
    let (g, t, _) = minibatch_grad(model, batch, &batch.advantages, &idx, cfg, false)?;
    Ok((t, g))
}

fn clip_norm(g: &mut [f32], max_norm: Option<f64>) {
    if let Some(m) = max_norm {
        let n = g.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
        if n > m {
            let k = (m / n) as f32;
            g.iter_mut().for_each(|v| *v *= k);
        }
    }
}

/// `cfg.epochs` passes over shuffled minibatches of the clipped-surrogate
/// objective. Advantages are normalized once per call.
pub fn ppo_update<M: PolicyModel>(
    model: &mut M,
    opt: &mut Adam<f32>,
    batch: &Batch,
    cfg: &PpoConfig,
    rng: &mut Rng,
    parallel: bool,
) -> Result<UpdateStats, RlError> {
    if batch.len() != cfg.batch {
        return Err(RlError::BatchSize { expected: cfg.batch, got: batch.len() });
    }
    if batch.advantages.len() != batch.len() || batch.returns.len() != batch.len() {
        return Err(RlError::Length("advantages/returns do not match samples".into()));
    }
    opt.cfg.lr = cfg.lr;
    let adv = normalize_advantages(&batch.advantages);
    let mut idx: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();
    let mut sum = LossTerms::default();
    for epoch in 0..cfg.epochs {
        idx.shuffle(rng);
        for (m, mb) in idx.chunks(cfg.minibatch).enumerate() {
            let (mut g, t, dev) = minibatch_grad(model, batch, &adv, mb, cfg, parallel)?;
            if !t.total.is_finite() {
                return Err(RlError::NonFiniteLoss);
            }
            if epoch == 0 && m == 0 {
                stats.first_ratio_dev = dev;
            }
            clip_norm(&mut g, cfg.max_grad_norm);
            let mut p = model.flat();
            opt.step(&mut p, &g)?;
            model.set_flat(&p)?;
            sum.add(&t);
            stats.grad_steps += 1;
        }
    }
    let k = 1.0 / stats.grad_steps.max(1) as f64;
    let s = sum.scaled(k);
    stats.policy_loss = s.policy;
    stats.value_loss = s.value;
    stats.entropy = s.entropy;
    stats.recon_loss = s.recon;
    stats.clip_frac = s.clipped;
    stats.approx_kl = s.approx_kl;
    Ok(stats)
}
