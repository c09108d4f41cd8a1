use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{check_dim, NnError, Real};
use crate::rng::Rng;

/// Multi-layer perceptron with tanh hidden layers and a linear output.
///
/// Parameters live in one flat vector, layer by layer: the `out x in`
/// row-major weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    params: Vec<T>,
}

/// Activations recorded by [`Mlp::forward`]; `layers[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    pub layers: Vec<Vec<T>>,
}

impl<T> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        self.layers.last().expect("cache has at least the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> Mlp<T> {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self { sizes: sizes.to_vec(), params: vec![T::zero(); param_count(sizes)] }
    }

    /// Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases; the last
    /// layer is further scaled by `final_scale`.
    pub fn init(sizes: &[usize], rng: &mut Rng, final_scale: f64) -> Self {
        let mut m = Self::zeros(sizes);
        let nl = m.num_layers();
        let mut off = 0;
        for l in 0..nl {
            let (fan_in, fan_out) = (m.sizes[l], m.sizes[l + 1]);
            let mut scale = 1.0 / (fan_in as f64).sqrt();
            if l + 1 == nl {
                scale *= final_scale;
            }
            for w in &mut m.params[off..off + fan_in * fan_out] {
                let z: f64 = rng.sample(StandardNormal);
                *w = T::of(z * scale);
            }
            off += fan_in * fan_out + fan_out;
        }
        m
    }

    pub fn from_params(sizes: &[usize], params: Vec<T>) -> Result<Self, NnError> {
        check_dim(param_count(sizes), params.len())?;
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp { sizes: self.sizes.clone(), params: self.params.iter().map(|v| U::of(v.to_f64_lossy())).collect() }
    }

    fn layer(&self, l: usize) -> (usize, usize, usize) {
        let off: usize = self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (off, self.sizes[l], self.sizes[l + 1])
    }

    /// Forward pass that records every activation.
    pub fn forward(&self, input: &[T]) -> Result<MlpCache<T>, NnError> {
        check_dim(self.input_dim(), input.len())?;
        let nl = self.num_layers();
        let mut layers = Vec::with_capacity(nl + 1);
        layers.push(input.to_vec());
        let mut off = 0;
        for l in 0..nl {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let x = &layers[l];
            let mut y = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = b[o];
                for (wi, xi) in row.iter().zip(x) {
                    acc += *wi * *xi;
                }
                y.push(if l + 1 < nl { acc.tanh() } else { acc });
            }
            layers.push(y);
            off += n_in * n_out + n_out;
        }
        Ok(MlpCache { layers })
    }

    /// Output only.
    pub fn predict(&self, input: &[T]) -> Result<Vec<T>, NnError> {
        Ok(self.forward(input)?.layers.pop().unwrap())
    }

    /// Reverse pass: add parameter gradients into `grad` and return the
    /// gradient with respect to the input.
    pub fn backward_into(&self, cache: &MlpCache<T>, d_out: &[T], grad: &mut [T]) -> Result<Vec<T>, NnError> {
        check_dim(self.output_dim(), d_out.len())?;
        check_dim(self.num_params(), grad.len())?;
        check_dim(self.num_layers() + 1, cache.layers.len())?;
        let nl = self.num_layers();
        let mut delta = d_out.to_vec();
        for l in (0..nl).rev() {
            let (off, n_in, n_out) = self.layer(l);
            if l + 1 < nl {
                for (d, a) in delta.iter_mut().zip(&cache.layers[l + 1]) {
                    *d *= T::one() - *a * *a;
                }
            }
            let x = &cache.layers[l];
            let (gw, rest) = grad[off..].split_at_mut(n_in * n_out);
            let gb = &mut rest[..n_out];
            let w = &self.params[off..off + n_in * n_out];
            let mut d_in = vec![T::zero(); n_in];
            for o in 0..n_out {
                let dz = delta[o];
                gb[o] += dz;
                if dz == T::zero() {
                    continue;
                }
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, xi) in grow.iter_mut().zip(x) {
                    *g += dz * *xi;
                }
                let wrow = &w[o * n_in..(o + 1) * n_in];
                for (di, wi) in d_in.iter_mut().zip(wrow) {
                    *di += dz * *wi;
                }
            }
            delta = d_in;
        }
        Ok(delta)
    }

    /// Reverse pass returning fresh `(parameter gradient, input gradient)`.
    pub fn backward(&self, cache: &MlpCache<T>, d_out: &[T]) -> Result<(Vec<T>, Vec<T>), NnError> {
        let mut g = vec![T::zero(); self.num_params()];
        let d_in = self.backward_into(cache, d_out, &mut g)?;
        Ok((g, d_in))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn zero_net_outputs_zero() {
        let m = Mlp::<f64>::zeros(&[3, 5, 2]);
        assert_eq!(m.predict(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let mut m = Mlp::<f64>::zeros(&[3, 3]);
        for i in 0..3 {
            m.params_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(m.predict(&[0.3, -1.5, 2.0]).unwrap(), vec![0.3, -1.5, 2.0]);
    }

    #[test]
    fn matches_reference_matvec() {
        let mut rng = substream(5, "t", &[]);
        let m = Mlp::<f64>::init(&[4, 6, 3], &mut rng, 1.0);
        let x = [0.1, -0.4, 0.7, 0.2];
        // independent reference using explicit index arithmetic
        let p = m.params();
        let mut h = [0.0; 6];
        for o in 0..6 {
            let mut s = p[24 + o];
            for i in 0..4 {
                s += p[o * 4 + i] * x[i];
            }
            h[o] = s.tanh();
        }
        let base = 24 + 6;
        let mut y = [0.0; 3];
        for o in 0..3 {
            let mut s = p[base + 18 + o];
            for i in 0..6 {
                s += p[base + o * 6 + i] * h[i];
            }
            y[o] = s;
        }
        let got = m.predict(&x).unwrap();
        for k in 0..3 {
            assert!((got[k] - y[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_errors() {
        let m = Mlp::<f32>::zeros(&[3, 2]);
        assert_eq!(m.forward(&[1.0]).unwrap_err(), NnError::Dim { expected: 3, got: 1 });
        let c = m.forward(&[0.0; 3]).unwrap();
        assert!(m.backward(&c, &[1.0]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = substream(1, "t", &[]);
        let m = Mlp::<f64>::init(&[3, 4, 2], &mut rng, 1.0);
        let c = m.forward(&[0.2, 0.1, -0.3]).unwrap();
        let (g, d) = m.backward(&c, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_output_gradient() {
        let mut rng = substream(2, "t", &[]);
        let m = Mlp::<f64>::init(&[3, 5, 2], &mut rng, 1.0);
        let c = m.forward(&[0.5, -0.1, 0.9]).unwrap();
        let (g1, d1) = m.backward(&c, &[0.3, -1.2]).unwrap();
        let (g2, d2) = m.backward(&c, &[-0.7, 0.4]).unwrap();
        let (g12, d12) = m.backward(&c, &[0.3 - 0.7, -1.2 + 0.4]).unwrap();
        for i in 0..g1.len() {
            assert!((g1[i] + g2[i] - g12[i]).abs() < 1e-12);
        }
        for i in 0..d1.len() {
            assert!((d1[i] + d2[i] - d12[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_repeatable() {
        let mut rng = substream(3, "t", &[]);
        let m = Mlp::<f32>::init(&[8, 16, 16, 1], &mut rng, 0.01);
        let x = [0.3f32; 8];
        assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
    }
}
