use serde::{Deserialize, Serialize};

use super::{check_dim, NnError, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected adaptive-moment optimizer over one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    steps: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(num_params: usize, cfg: AdamConfig) -> Self {
        Self { cfg, m: vec![T::zero(); num_params], v: vec![T::zero(); num_params], steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self) -> &[T] {
        &self.m
    }

    pub fn second_moment(&self) -> &[T] {
        &self.v
    }

    /// Apply one update. A non-finite gradient fails before anything changes.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<(), NnError> {
        check_dim(self.m.len(), params.len())?;
        check_dim(self.m.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(i));
        }
        self.steps += 1;
        let b1 = T::of(self.cfg.beta1);
        let b2 = T::of(self.cfg.beta2);
        let t = self.steps as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let lr = T::of(self.cfg.lr);
        let eps = T::of(self.cfg.eps);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::<f64>::new(3, AdamConfig::default());
        let mut p = vec![0.5, -1.0, 2.0];
        opt.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut opt = Adam::<f64>::new(2, AdamConfig::default());
        let mut p = vec![0.0, 0.0];
        for _ in 0..100 {
            opt.step(&mut p, &[1.5, -0.2]).unwrap();
        }
        assert!(p[0] < 0.0 && p[1] > 0.0);
    }

    #[test]
    fn first_step_hand_computed() {
        let cfg = AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let mut opt = Adam::<f64>::new(1, cfg);
        let mut p = vec![1.0];
        opt.step(&mut p, &[0.5]).unwrap();
        // m = 0.05, v = 0.00025; m_hat = 0.5, v_hat = 0.25
        assert!((opt.first_moment()[0] - 0.05).abs() < 1e-15);
        assert!((opt.second_moment()[0] - 0.00025).abs() < 1e-15);
        let expected = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_fails_fast() {
        let mut opt = Adam::<f32>::new(2, AdamConfig::default());
        let mut p = vec![1.0, 1.0];
        assert_eq!(opt.step(&mut p, &[0.1, f32::NAN]), Err(NnError::NonFiniteGradient(1)));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(opt.steps(), 0);
    }
}
