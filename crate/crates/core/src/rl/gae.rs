use super::RlError;

/// Generalized advantage estimation over one stream.
///
/// `dones[t]` marks that the episode ended after step `t`; `bootstrap` is the
/// value of the state following the last step (ignored if that step is done).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(RlError::Length(format!("rewards {n}, values {}, dones {}", values.len(), dones.len())));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// Quadratic-time reference: `A_t = sum_l (gamma lambda)^l delta_{t+l}`,
/// truncated at the first episode end.
pub fn gae_brute_force(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let v_next = |t: usize| if t + 1 < n { values[t + 1] } else { bootstrap };
    let delta = |t: usize| rewards[t] + if dones[t] { 0.0 } else { gamma * v_next(t) } - values[t];
    (0..n)
        .map(|t| {
            let mut a = 0.0;
            let mut w = 1.0;
            for l in t..n {
                a += w * delta(l);
                if dones[l] {
                    break;
                }
                w *= gamma * lambda;
            }
            a
        })
        .collect()
}

/// Zero mean, unit (population) standard deviation; constant inputs map to 0.
pub fn normalize_advantages(adv: &[f32]) -> Vec<f32> {
    let n = adv.len().max(1) as f64;
    let mean = adv.iter().map(|a| *a as f64).sum::<f64>() / n;
    let var = adv.iter().map(|a| (*a as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; adv.len()];
    }
    adv.iter().map(|a| ((*a as f64 - mean) / std) as f32).collect()
}
