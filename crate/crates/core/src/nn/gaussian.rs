use rand_distr::{Distribution, StandardNormal};

use super::Real;
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian over actions. `log_std` is clamped to
/// `[LOG_STD_MIN, LOG_STD_MAX]` on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead<T> {
    pub mean: Vec<T>,
    pub log_std: Vec<T>,
}

impl<T: Real> GaussianHead<T> {
    pub fn new(mean: Vec<T>, log_std: &[T]) -> Self {
        assert_eq!(mean.len(), log_std.len(), "mean/log_std dimension mismatch");
        let lo = T::of(LOG_STD_MIN);
        let hi = T::of(LOG_STD_MAX);
        Self { mean, log_std: log_std.iter().map(|v| v.max(lo).min(hi)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_prob(&self, action: &[T]) -> T {
        let mut lp = T::zero();
        for ((a, m), ls) in action.iter().zip(&self.mean).zip(&self.log_std) {
            let z = (*a - *m) / ls.exp();
            lp -= T::of(0.5) * z * z + *ls + T::of(HALF_LN_2PI);
        }
        lp
    }

    /// Gradient of [`Self::log_prob`] with respect to `(mean, log_std)`.
    pub fn log_prob_grad(&self, action: &[T]) -> (Vec<T>, Vec<T>) {
        let mut dm = Vec::with_capacity(self.dim());
        let mut ds = Vec::with_capacity(self.dim());
        for ((a, m), ls) in action.iter().zip(&self.mean).zip(&self.log_std) {
            let sigma = ls.exp();
            let z = (*a - *m) / sigma;
            dm.push(z / sigma);
            ds.push(z * z - T::one());
        }
        (dm, ds)
    }

    pub fn entropy(&self) -> T {
        let c = T::of(0.5 + HALF_LN_2PI);
        self.log_std.iter().map(|ls| *ls + c).sum()
    }

    /// Draw an action from the stream (unclamped; the environment clamps).
    pub fn sample(&self, rng: &mut Rng) -> Vec<T> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                *m + ls.exp() * T::of(z)
            })
            .collect()
    }
}

/// Closed-form `KL(p || q)` for diagonal Gaussians.
pub fn gaussian_kl<T: Real>(p: &GaussianHead<T>, q: &GaussianHead<T>) -> T {
    assert_eq!(p.dim(), q.dim(), "KL between heads of different dimension");
    let mut kl = T::zero();
    for i in 0..p.dim() {
        let var_p = (T::of(2.0) * p.log_std[i]).exp();
        let var_q = (T::of(2.0) * q.log_std[i]).exp();
        let d = p.mean[i] - q.mean[i];
        kl += q.log_std[i] - p.log_std[i] + (var_p + d * d) / (T::of(2.0) * var_q) - T::of(0.5);
    }
    kl
}

/// Gradients of [`gaussian_kl`]: `(d mean_p, d log_std_p, d mean_q, d log_std_q)`.
pub fn gaussian_kl_grad<T: Real>(p: &GaussianHead<T>, q: &GaussianHead<T>) -> [Vec<T>; 4] {
    let n = p.dim();
    let mut out = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
    for i in 0..n {
        let var_p = (T::of(2.0) * p.log_std[i]).exp();
        let var_q = (T::of(2.0) * q.log_std[i]).exp();
        let d = p.mean[i] - q.mean[i];
        out[0][i] = d / var_q;
        out[1][i] = var_p / var_q - T::one();
        out[2][i] = -d / var_q;
        out[3][i] = T::one() - (var_p + d * d) / var_q;
    }
    out
}
