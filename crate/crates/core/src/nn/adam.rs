use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one moment pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// State for parameter tensors of the given sizes.
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        AdamState {
            config,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// State shaped for `net`: weight then bias for every layer.
    pub fn for_net(config: AdamConfig, net: &Mlp) -> Self {
        let sizes: Vec<usize> = net
            .layers()
            .iter()
            .flat_map(|l| [l.weight.rows() * l.weight.cols(), l.bias.len()])
            .collect();
        AdamState::new(config, &sizes)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update over parallel lists of parameter and gradient tensors.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step_slices(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dims(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::dims(format!("tensor {i} changed shape")));
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("gradient".into()));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(Error::dims("gradient does not match network"));
        }
        let mut params: Vec<&mut [f64]> = Vec::with_capacity(2 * grads.layers.len());
        for layer in net.layers_mut() {
            params.push(layer.weight.as_mut_slice());
            params.push(layer.bias.as_mut_slice());
        }
        let g: Vec<&[f64]> = grads
            .layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect();
        self.step_slices(&mut params, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(steps: usize, g: f64) -> f64 {
        let mut w = vec![0.0];
        let mut st = AdamState::new(AdamConfig::default(), &[1]);
        for _ in 0..steps {
            st.step_slices(&mut [w.as_mut_slice()], &[&[g]]).unwrap();
        }
        w[0]
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        assert_eq!(run(5, 0.0), 0.0);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let w = run(1, 1.0);
        assert!((w - -9.9999999e-5).abs() < 1e-15, "{w}");
    }

    #[test]
    fn two_constant_steps() {
        assert!((run(2, 1.0) + 2e-4).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_rejected_without_update() {
        let mut w = vec![1.0];
        let mut st = AdamState::new(AdamConfig::default(), &[1]);
        let err = st.step_slices(&mut [w.as_mut_slice()], &[&[f64::NAN]]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(w[0], 1.0);
        assert_eq!(st.steps(), 0);
    }
}
