use serde_json::json;

use crate::nn::{
    gaussian_kl, gaussian_kl_grad, ActorCritic, Checkpoint, CheckpointError, GaussianHead, Mlp, MlpCache, NnError, Real,
    LOG_STD_MAX, LOG_STD_MIN,
};
use crate::rng::Rng;
use crate::sim::ObsLayout;

pub const EMBED_DIM: usize = 16;
pub const ENCODER_HIDDEN: usize = 64;
pub const HISTORY_LEN: usize = 1;
pub const SIGMA_TARGET: f64 = 0.1;
pub const RECON_WEIGHT: f64 = 0.1;
pub const NAHT_KIND: &str = "naht-d";

/// Which pursuer slots the teammate model is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TeamShape {
    pub layout: ObsLayout,
    pub num_ctrl: usize,
    pub history: usize,
}

impl TeamShape {
    pub fn num_pursuers(&self) -> usize {
        self.layout.num_teammates + 1
    }

    pub fn entry_len(&self) -> usize {
        self.layout.len() + 1
    }

    pub fn window_len(&self) -> usize {
        self.history * self.entry_len()
    }

    pub fn evader_len(&self) -> usize {
        self.history * self.layout.evader_range().len()
    }

    pub fn self_len(&self) -> usize {
        self.history * (self.layout.self_range().len() + self.layout.obstacle_range().len() + 1)
    }

    pub fn row_len(&self) -> usize {
        self.history * 3
    }

    /// Uncontrolled slots as seen from learner slot `me`: observation
    /// teammate-row index for each of them.
    pub fn uncontrolled_rows(&self, me: usize) -> Vec<usize> {
        (self.num_ctrl..self.num_pursuers()).map(|j| if j < me { j } else { j - 1 }).collect()
    }

    /// Split a flattened window into (evader block, self block, teammate rows).
    pub fn split<T: Copy>(&self, window: &[T]) -> (Vec<T>, Vec<T>, Vec<Vec<T>>) {
        let l = self.layout;
        let e = self.entry_len();
        let mut ev = Vec::with_capacity(self.evader_len());
        let mut sf = Vec::with_capacity(self.self_len());
        let mut rows = vec![Vec::with_capacity(self.row_len()); l.num_teammates];
        for k in 0..self.history {
            let entry = &window[k * e..(k + 1) * e];
            ev.extend_from_slice(&entry[l.evader_range()]);
            sf.extend_from_slice(&entry[l.self_range()]);
            sf.extend_from_slice(&entry[l.obstacle_range()]);
            sf.push(entry[e - 1]);
            let t = l.teammate_range().start;
            for (j, row) in rows.iter_mut().enumerate() {
                row.extend_from_slice(&entry[t + 3 * j..t + 3 * j + 3]);
            }
        }
        (ev, sf, rows)
    }
}

/// History encoder: one MLP per input block, the teammate-row branch shared
/// across rows and mean-pooled, mixed by a softmax over three logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamEncoder<T> {
    pub shape: TeamShape,
    pub evader: Mlp<T>,
    pub own: Mlp<T>,
    pub relative: Mlp<T>,
    pub logits: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    ev: MlpCache<T>,
    own: MlpCache<T>,
    rows: Vec<MlpCache<T>>,
    outs: [Vec<T>; 3],
    weights: [T; 3],
}

fn softmax<T: Real>(z: &[T]) -> [T; 3] {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|v| (*v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    [e[0] / s, e[1] / s, e[2] / s]
}

impl<T: Real> TeamEncoder<T> {
    pub fn new(shape: TeamShape, rng: &mut Rng) -> Self {
        Self {
            shape,
            evader: Mlp::init(&[shape.evader_len(), ENCODER_HIDDEN, EMBED_DIM], rng, 1.0),
            own: Mlp::init(&[shape.self_len(), ENCODER_HIDDEN, EMBED_DIM], rng, 1.0),
            relative: Mlp::init(&[shape.row_len(), ENCODER_HIDDEN, EMBED_DIM], rng, 1.0),
            logits: vec![T::zero(); 3],
        }
    }

    pub fn num_params(&self) -> usize {
        self.evader.num_params() + self.own.num_params() + self.relative.num_params() + 3
    }

    pub fn flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(self.evader.params());
        v.extend_from_slice(self.own.params());
        v.extend_from_slice(self.relative.params());
        v.extend_from_slice(&self.logits);
        v
    }

    pub fn set_flat(&mut self, p: &[T]) -> Result<(), NnError> {
        crate::nn::check_dim(self.num_params(), p.len())?;
        let (a, rest) = p.split_at(self.evader.num_params());
        let (b, rest) = rest.split_at(self.own.num_params());
        let (c, d) = rest.split_at(self.relative.num_params());
        self.evader.params_mut().copy_from_slice(a);
        self.own.params_mut().copy_from_slice(b);
        self.relative.params_mut().copy_from_slice(c);
        self.logits.copy_from_slice(d);
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> TeamEncoder<U> {
        TeamEncoder {
            shape: self.shape,
            evader: self.evader.cast(),
            own: self.own.cast(),
            relative: self.relative.cast(),
            logits: self.logits.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    pub fn mixing_weights(&self) -> [T; 3] {
        softmax(&self.logits)
    }

    pub fn forward(&self, window: &[T]) -> Result<(Vec<T>, EncoderCache<T>), NnError> {
        crate::nn::check_dim(self.shape.window_len(), window.len())?;
        let (ev_in, own_in, rows_in) = self.shape.split(window);
        let ev = self.evader.forward(&ev_in)?;
        let own = self.own.forward(&own_in)?;
        let mut pooled = vec![T::zero(); EMBED_DIM];
        let mut rows = Vec::with_capacity(rows_in.len());
        for r in &rows_in {
            let c = self.relative.forward(r)?;
            for (p, o) in pooled.iter_mut().zip(c.output()) {
                *p += *o;
            }
            rows.push(c);
        }
        if !rows.is_empty() {
            let n = T::of(rows.len() as f64);
            pooled.iter_mut().for_each(|p| *p /= n);
        }
        let w = self.mixing_weights();
        let outs = [ev.output().to_vec(), own.output().to_vec(), pooled];
        let emb = (0..EMBED_DIM).map(|i| w[0] * outs[0][i] + w[1] * outs[1][i] + w[2] * outs[2][i]).collect();
        Ok((emb, EncoderCache { ev, own, rows, outs, weights: w }))
    }

    /// Accumulate parameter gradients for `d_emb` into `grad` (flat layout).
    pub fn backward(&self, cache: &EncoderCache<T>, d_emb: &[T], grad: &mut [T]) -> Result<(), NnError> {
        crate::nn::check_dim(EMBED_DIM, d_emb.len())?;
        crate::nn::check_dim(self.num_params(), grad.len())?;
        let w = cache.weights;
        let (ga, rest) = grad.split_at_mut(self.evader.num_params());
        let (gb, rest) = rest.split_at_mut(self.own.num_params());
        let (gc, gl) = rest.split_at_mut(self.relative.num_params());
        let scaled = |b: usize| -> Vec<T> { d_emb.iter().map(|d| *d * w[b]).collect() };
        self.evader.backward_into(&cache.ev, &scaled(0), ga)?;
        self.own.backward_into(&cache.own, &scaled(1), gb)?;
        if !cache.rows.is_empty() {
            let n = T::of(cache.rows.len() as f64);
            let d: Vec<T> = scaled(2).iter().map(|v| *v / n).collect();
            for c in &cache.rows {
                self.relative.backward_into(c, &d, gc)?;
            }
        }
        let dw: Vec<T> = (0..3).map(|b| cache.outs[b].iter().zip(d_emb).map(|(o, d)| *o * *d).sum()).collect();
        let avg: T = (0..3).map(|b| w[b] * dw[b]).sum();
        for b in 0..3 {
            gl[b] += w[b] * (dw[b] - avg);
        }
        Ok(())
    }
}

/// Decoder input for one teammate: embedding followed by that teammate's
/// current relative row.
fn decoder_input<T: Real>(emb: &[T], row: &[T]) -> Vec<T> {
    let mut x = emb.to_vec();
    x.extend_from_slice(row);
    x
}

pub fn new_decoder<T: Real>(rng: &mut Rng) -> Mlp<T> {
    Mlp::init(&[EMBED_DIM + 3, ENCODER_HIDDEN, 2], rng, 1.0)
}

/// Predicted action distribution for each uncontrolled teammate.
pub fn decode<T: Real>(dec: &Mlp<T>, emb: &[T], rows: &[[T; 3]]) -> Result<Vec<GaussianHead<T>>, NnError> {
    rows.iter()
        .map(|r| {
            let o = dec.predict(&decoder_input(emb, r))?;
            Ok(GaussianHead::new(vec![o[0]], &[o[1]]))
        })
        .collect()
}

/// Mean over teammates of `KL(N(observed, sigma_t) || predicted)`.
pub fn reconstruction_loss<T: Real>(dec: &Mlp<T>, emb: &[T], rows: &[[T; 3]], targets: &[T], sigma_t: f64) -> Result<T, NnError> {
    crate::nn::check_dim(rows.len(), targets.len())?;
    if rows.is_empty() {
        return Ok(T::zero());
    }
    let ls = T::of(sigma_t.ln());
    let mut total = T::zero();
    for (head, a) in decode(dec, emb, rows)?.iter().zip(targets) {
        total += gaussian_kl(&GaussianHead::new(vec![*a], &[ls]), head);
    }
    Ok(total / T::of(rows.len() as f64))
}

/// Loss value, with `scale * d loss` added into `grad_dec`; returns the
/// gradient with respect to the embedding (also scaled).
pub fn reconstruction_grad<T: Real>(
    dec: &Mlp<T>,
    emb: &[T],
    rows: &[[T; 3]],
    targets: &[T],
    sigma_t: f64,
    scale: T,
    grad_dec: &mut [T],
) -> Result<(T, Vec<T>), NnError> {
    crate::nn::check_dim(rows.len(), targets.len())?;
    let mut d_emb = vec![T::zero(); emb.len()];
    if rows.is_empty() {
        return Ok((T::zero(), d_emb));
    }
    let n = T::of(rows.len() as f64);
    let ls = T::of(sigma_t.ln());
    let (lo, hi) = (T::of(LOG_STD_MIN), T::of(LOG_STD_MAX));
    let mut total = T::zero();
    for (r, a) in rows.iter().zip(targets) {
        let cache = dec.forward(&decoder_input(emb, r))?;
        let out = cache.output();
        let pred = GaussianHead::new(vec![out[0]], &[out[1]]);
        let target = GaussianHead::new(vec![*a], &[ls]);
        total += gaussian_kl(&target, &pred);
        let g = gaussian_kl_grad(&target, &pred);
        let d_ls = if out[1] >= lo && out[1] <= hi { g[3][0] } else { T::zero() };
        let d_out = [g[2][0] * scale / n, d_ls * scale / n];
        let d_in = dec.backward_into(&cache, &d_out, grad_dec)?;
        for (d, v) in d_emb.iter_mut().zip(&d_in[..emb.len()]) {
            *d += *v;
        }
    }
    Ok((total / n, d_emb))
}

/// Actor-critic whose actor also sees the teammate embedding, plus the
/// encoder and (unless ablated) the decoder. Flat parameter order: actor
/// critic, encoder, decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct NahtModel<T> {
    pub ac: ActorCritic<T>,
    pub encoder: TeamEncoder<T>,
    pub decoder: Option<Mlp<T>>,
    pub beta: f64,
    pub sigma_t: f64,
    /// Feed zeros instead of the embedding and stop its gradient.
    pub zero_embedding: bool,
}

impl<T: Real> NahtModel<T> {
    pub fn new(shape: TeamShape, critic_in: usize, hidden: &[usize], with_decoder: bool, rng: &mut Rng) -> Self {
        let ac = ActorCritic::new(shape.layout.len() + EMBED_DIM, critic_in, hidden, 1, rng);
        let encoder = TeamEncoder::new(shape, rng);
        let decoder = with_decoder.then(|| new_decoder(rng));
        Self { ac, encoder, decoder, beta: RECON_WEIGHT, sigma_t: SIGMA_TARGET, zero_embedding: false }
    }

    pub fn shape(&self) -> TeamShape {
        self.encoder.shape
    }

    pub fn num_params(&self) -> usize {
        self.ac.num_params() + self.encoder.num_params() + self.decoder.as_ref().map_or(0, |d| d.num_params())
    }

    pub fn flat(&self) -> Vec<T> {
        let mut v = self.ac.flat();
        v.extend(self.encoder.flat());
        if let Some(d) = &self.decoder {
            v.extend_from_slice(d.params());
        }
        v
    }

    pub fn set_flat(&mut self, p: &[T]) -> Result<(), NnError> {
        crate::nn::check_dim(self.num_params(), p.len())?;
        let (a, rest) = p.split_at(self.ac.num_params());
        let (e, d) = rest.split_at(self.encoder.num_params());
        self.ac.set_flat(a)?;
        self.encoder.set_flat(e)?;
        if let Some(dec) = &mut self.decoder {
            dec.params_mut().copy_from_slice(d);
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> NahtModel<U> {
        NahtModel {
            ac: self.ac.cast(),
            encoder: self.encoder.cast(),
            decoder: self.decoder.as_ref().map(|d| d.cast()),
            beta: self.beta,
            sigma_t: self.sigma_t,
            zero_embedding: self.zero_embedding,
        }
    }

    pub fn embed(&self, window: &[T]) -> Result<(Vec<T>, Option<EncoderCache<T>>), NnError> {
        if self.zero_embedding {
            crate::nn::check_dim(self.shape().window_len(), window.len())?;
            return Ok((vec![T::zero(); EMBED_DIM], None));
        }
        let (e, c) = self.encoder.forward(window)?;
        Ok((e, Some(c)))
    }

    pub fn actor_input(&self, obs: &[T], emb: &[T]) -> Vec<T> {
        let mut x = obs.to_vec();
        x.extend_from_slice(emb);
        x
    }

    pub fn mean_action(&self, obs: &[T], window: &[T]) -> Result<T, NnError> {
        let (emb, _) = self.embed(window)?;
        Ok(self.ac.mean_action(&self.actor_input(obs, &emb))?[0])
    }
}

impl NahtModel<f32> {
    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        let s = self.shape();
        let mut c = Checkpoint::new(
            NAHT_KIND,
            json!({
                "actor_sizes": self.ac.actor.sizes(),
                "critic_sizes": self.ac.critic.sizes(),
                "num_evaders": s.layout.num_evaders,
                "num_teammates": s.layout.num_teammates,
                "num_ctrl": s.num_ctrl,
                "history": s.history,
                "decoder": self.decoder.is_some(),
                "beta": self.beta,
                "sigma_t": self.sigma_t,
                "info": meta,
            }),
        );
        c.push("actor", vec![self.ac.actor.num_params()], self.ac.actor.params().to_vec());
        c.push("log_std", vec![self.ac.log_std.len()], self.ac.log_std.clone());
        c.push("critic", vec![self.ac.critic.num_params()], self.ac.critic.params().to_vec());
        c.push("encoder", vec![self.encoder.num_params()], self.encoder.flat());
        if let Some(d) = &self.decoder {
            c.push("decoder", vec![d.num_params()], d.params().to_vec());
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, CheckpointError> {
        c.expect_kind(NAHT_KIND)?;
        let get = |k: &str| c.meta.get(k).cloned().ok_or_else(|| CheckpointError::Manifest(format!("missing {k}")));
        let num = |k: &str| -> Result<usize, CheckpointError> {
            get(k)?.as_u64().map(|v| v as usize).ok_or_else(|| CheckpointError::Manifest(format!("{k} not an integer")))
        };
        let sizes = |k: &str| -> Result<Vec<usize>, CheckpointError> {
            serde_json::from_value(get(k)?).map_err(|e| CheckpointError::Manifest(format!("{k}: {e}")))
        };
        let bad = |e: NnError| CheckpointError::Manifest(e.to_string());
        let shape = TeamShape {
            layout: ObsLayout { num_evaders: num("num_evaders")?, num_teammates: num("num_teammates")? },
            num_ctrl: num("num_ctrl")?,
            history: num("history")?,
        };
        let ac = ActorCritic {
            actor: Mlp::from_params(&sizes("actor_sizes")?, c.tensor("actor")?.data.clone()).map_err(bad)?,
            log_std: c.tensor("log_std")?.data.clone(),
            critic: Mlp::from_params(&sizes("critic_sizes")?, c.tensor("critic")?.data.clone()).map_err(bad)?,
        };
        let mut encoder = TeamEncoder::<f32>::new(shape, &mut crate::rng::substream(0, "unused", &[]));
        encoder.set_flat(&c.tensor("encoder")?.data).map_err(bad)?;
        let decoder = if get("decoder")?.as_bool().unwrap_or(false) {
            let data = c.tensor("decoder")?.data.clone();
            Some(Mlp::from_params(&[EMBED_DIM + 3, ENCODER_HIDDEN, 2], data).map_err(bad)?)
        } else {
            None
        };
        Ok(Self {
            ac,
            encoder,
            decoder,
            beta: get("beta")?.as_f64().unwrap_or(RECON_WEIGHT),
            sigma_t: get("sigma_t")?.as_f64().unwrap_or(SIGMA_TARGET),
            zero_embedding: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn shape() -> TeamShape {
        TeamShape { layout: ObsLayout { num_evaders: 2, num_teammates: 3 }, num_ctrl: 2, history: 1 }
    }

    #[test]
    fn block_sizes() {
        let s = shape();
        assert_eq!(s.layout.len(), 22);
        assert_eq!(s.window_len(), 23);
        assert_eq!(s.evader_len(), 6);
        assert_eq!(s.self_len(), 8);
        assert_eq!(s.uncontrolled_rows(0), vec![1, 2]);
        assert_eq!(s.uncontrolled_rows(1), vec![1, 2]);
    }

    #[test]
    fn zero_window_zero_bias_gives_zero_embedding() {
        let enc = TeamEncoder::<f64>::new(shape(), &mut substream(1, "t", &[]));
        let (e, _) = enc.forward(&vec![0.0; 23]).unwrap();
        assert!(e.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dominant_logit_selects_branch() {
        let mut enc = TeamEncoder::<f64>::new(shape(), &mut substream(2, "t", &[]));
        enc.logits = vec![20.0, 0.0, 0.0];
        let w: Vec<f64> = (0..23).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let (e, _) = enc.forward(&w).unwrap();
        let (ev, _, _) = enc.shape.split(&w);
        let branch = enc.evader.predict(&ev).unwrap();
        for (a, b) in e.iter().zip(&branch) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn recon_closed_form() {
        // decoder that outputs (0, ln 0.1) regardless of input
        let mut dec = Mlp::<f64>::zeros(&[EMBED_DIM + 3, 4, 2]);
        let n = dec.num_params();
        dec.params_mut()[n - 1] = SIGMA_TARGET.ln();
        let emb = vec![0.3; EMBED_DIM];
        let rows = [[0.1, 0.2, 1.0]];
        let l = reconstruction_loss(&dec, &emb, &rows, &[0.5], SIGMA_TARGET).unwrap();
        assert!((l - 12.5).abs() < 1e-9, "{l}");
        assert_eq!(reconstruction_loss(&dec, &emb, &rows, &[0.0], SIGMA_TARGET).unwrap(), 0.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = NahtModel::<f32>::new(shape(), 50, &[8], true, &mut substream(3, "t", &[]));
        let back = NahtModel::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint(json!({})).to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back, m);
        let m = NahtModel::<f32>::new(shape(), 50, &[8], false, &mut substream(3, "t", &[]));
        let back = NahtModel::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint(json!({})).to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
