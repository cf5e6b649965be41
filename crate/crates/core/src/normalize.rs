//! Running per-dimension observation normalization (Welford).

use serde::{Deserialize, Serialize};

/// Normalized values are clipped to `±CLIP`.
pub const CLIP: f64 = 10.0;
const EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    /// When set, [`RunningNorm::update`] is a no-op.
    pub frozen: bool,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim], frozen: false }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population variance per dimension.
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|m| m / self.count as f64).collect()
    }

    pub fn update(&mut self, x: &[f64]) {
        if self.frozen {
            return;
        }
        debug_assert_eq!(x.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *mean;
            *mean += delta / n;
            *m2 += delta * (v - *mean);
        }
    }

    /// `(x - mean) / sqrt(var + eps)`, clipped; identity before the first update.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        if self.count == 0 {
            return x.to_vec();
        }
        let n = self.count as f64;
        x.iter()
            .zip(&self.mean)
            .zip(&self.m2)
            .map(|((v, mean), m2)| ((v - mean) / (m2 / n + EPS).sqrt()).clamp(-CLIP, CLIP))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_two_pass_statistics() {
        let xs = [[1.0, 10.0], [2.0, 20.0], [4.0, 40.0], [7.0, 70.0]];
        let mut n = RunningNorm::new(2);
        for x in &xs {
            n.update(x);
        }
        let mean0 = xs.iter().map(|x| x[0]).sum::<f64>() / 4.0;
        let var0 = xs.iter().map(|x| (x[0] - mean0).powi(2)).sum::<f64>() / 4.0;
        assert!((n.mean()[0] - mean0).abs() < 1e-12);
        assert!((n.variance()[0] - var0).abs() < 1e-12);
        let z = n.normalize(&[mean0, n.mean()[1]]);
        assert!(z.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn frozen_ignores_updates_and_constant_dims_clip() {
        let mut n = RunningNorm::new(1);
        n.update(&[3.0]);
        n.frozen = true;
        n.update(&[100.0]);
        assert_eq!(n.count(), 1);
        assert_eq!(n.normalize(&[4.0]), vec![CLIP]);
        assert_eq!(RunningNorm::new(2).normalize(&[5.0, -1.0]), vec![5.0, -1.0]);
    }
}
