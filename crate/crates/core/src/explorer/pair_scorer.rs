use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::math;

/// One-hidden-layer feed-forward map `R^dim -> R`:
/// `w2 · tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScorer {
    dim: usize,
    hidden: usize,
    /// `W1` (`hidden x dim`), `b1`, `w2`, `b2`.
    params: Vec<f64>,
}

impl PairScorer {
    pub fn new(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut s = Self::zeros(dim, hidden);
        let mut rng = math::rng(seed, 6);
        let b1 = 1.0 / (dim as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        for i in 0..hidden * dim {
            s.params[i] = rng.gen_range(-b1..=b1);
        }
        let w2 = s.w2_offset();
        for i in 0..hidden {
            s.params[w2 + i] = rng.gen_range(-b2..=b2);
        }
        s
    }

    /// The identically-zero map.
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        PairScorer {
            dim,
            hidden,
            params: vec![0.0; hidden * dim + 2 * hidden + 1],
        }
    }

    fn b1_offset(&self) -> usize {
        self.hidden * self.dim
    }

    fn w2_offset(&self) -> usize {
        self.hidden * (self.dim + 1)
    }

    fn b2_offset(&self) -> usize {
        self.hidden * (self.dim + 2)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let b1 = self.b1_offset();
        (0..self.hidden)
            .map(|j| {
                let w = &self.params[j * self.dim..(j + 1) * self.dim];
                (self.params[b1 + j] + math::dot(w, x)).tanh()
            })
            .collect()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let a = self.hidden_activations(x);
        self.params[self.b2_offset()]
            + math::dot(&self.params[self.w2_offset()..self.b2_offset()], &a)
    }

    /// Accumulates `d_score * ∂score/∂θ` into `d_params` and `∂/∂x` into `d_x`.
    pub fn backward(&self, x: &[f64], d_score: f64, d_params: &mut [f64], d_x: &mut [f64]) {
        let a = self.hidden_activations(x);
        let (b1, w2, b2) = (self.b1_offset(), self.w2_offset(), self.b2_offset());
        d_params[b2] += d_score;
        for j in 0..self.hidden {
            d_params[w2 + j] += d_score * a[j];
            let d_pre = d_score * self.params[w2 + j] * (1.0 - a[j] * a[j]);
            d_params[b1 + j] += d_pre;
            for k in 0..self.dim {
                d_params[j * self.dim + k] += d_pre * x[k];
                d_x[k] += d_pre * self.params[j * self.dim + k];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_scores_zero() {
        assert_eq!(PairScorer::zeros(3, 4).score(&[1.0, -2.0, 5.0]), 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s = PairScorer::new(3, 5, 7);
        let x = [0.4, -1.2, 0.9];
        let mut dp = vec![0.0; s.params().len()];
        let mut dx = vec![0.0; 3];
        s.backward(&x, 1.0, &mut dp, &mut dx);
        let eps = 1e-6;
        for (i, &analytic) in dp.iter().enumerate() {
            let mut up = s.clone();
            up.params_mut()[i] += eps;
            let mut down = s.clone();
            down.params_mut()[i] -= eps;
            let num = (up.score(&x) - down.score(&x)) / (2.0 * eps);
            assert!(
                (num - analytic).abs() < 1e-8,
                "param {i}: {num} vs {analytic}"
            );
        }
        for k in 0..3 {
            let mut up = x;
            up[k] += eps;
            let mut down = x;
            down[k] -= eps;
            let num = (s.score(&up) - s.score(&down)) / (2.0 * eps);
            assert!((num - dx[k]).abs() < 1e-8);
        }
    }
}
