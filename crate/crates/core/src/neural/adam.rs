use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use super::NeuralError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self::with_betas(net, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(net: &Mlp, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = net.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { lr, beta1, beta2, eps, step: 0, first: zeros.clone(), second: zeros }
    }

    /// One bias-corrected update of `net` against `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<(), NeuralError> {
        let grad_tensors: Vec<&Vec<f64>> = grads.weights.iter().zip(&grads.bias).flat_map(|(w, b)| [w, b]).collect();
        if grad_tensors.len() != self.first.len()
            || grad_tensors.iter().zip(&self.first).any(|(g, m)| g.len() != m.len())
        {
            return Err(NeuralError::Shape("gradient/optimizer shape mismatch".into()));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powf(self.step as f64);
        let bc2 = 1.0 - self.beta2.powf(self.step as f64);
        let params = net.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(grad_tensors).zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
