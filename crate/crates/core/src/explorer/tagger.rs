use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;

/// Per-token classifier over fixed-width features.
///
/// Implementations expose their parameters as one flat vector so the
/// explorer can run any of them through the same training loop.
pub trait Tagger {
    fn num_tags(&self) -> usize;
    fn num_features(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Unnormalised tag scores for one token.
    fn scores(&self, features: &[f64]) -> Vec<f64>;
    /// Accumulates `d_scores` back into `d_params` and `d_features`.
    fn backward(
        &self,
        features: &[f64],
        d_scores: &[f64],
        d_params: &mut [f64],
        d_features: &mut [f64],
    );
}

/// Affine map from token features to tag scores. Zero-initialised, so a
/// fresh tagger predicts the uniform distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTagger {
    num_tags: usize,
    num_features: usize,
    /// `num_tags x num_features` weights followed by `num_tags` biases.
    params: Vec<f64>,
}

impl LinearTagger {
    pub fn new(num_tags: usize, num_features: usize) -> Self {
        LinearTagger {
            num_tags,
            num_features,
            params: vec![0.0; num_tags * (num_features + 1)],
        }
    }

    fn bias_offset(&self) -> usize {
        self.num_tags * self.num_features
    }
}

impl Tagger for LinearTagger {
    fn num_tags(&self) -> usize {
        self.num_tags
    }

    fn num_features(&self) -> usize {
        self.num_features
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn scores(&self, features: &[f64]) -> Vec<f64> {
        let b = self.bias_offset();
        (0..self.num_tags)
            .map(|k| {
                let w = &self.params[k * self.num_features..(k + 1) * self.num_features];
                self.params[b + k] + crate::math::dot(w, features)
            })
            .collect()
    }

    fn backward(
        &self,
        features: &[f64],
        d_scores: &[f64],
        d_params: &mut [f64],
        d_features: &mut [f64],
    ) {
        let b = self.bias_offset();
        let nf = self.num_features;
        for (k, &g) in d_scores.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            d_params[b + k] += g;
            let w = &self.params[k * nf..(k + 1) * nf];
            for f in 0..nf {
                d_params[k * nf + f] += g * features[f];
                d_features[f] += g * w[f];
            }
        }
    }
}

/// Feature width for token vectors of dimension `dim`.
pub fn feature_width(dim: usize) -> usize {
    2 * dim
}

/// Row ids (or on-the-fly vectors) for a sentence's tokens.
pub(crate) fn token_vectors(emb: &EmbeddingTable, tokens: &[String]) -> Vec<Vec<f64>> {
    tokens.iter().map(|t| emb.token_vector(t)).collect()
}

/// Token vector concatenated with the mean of its immediate neighbours
/// (zero when the sentence has a single token).
pub(crate) fn sentence_features(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = vectors.len();
    (0..n)
        .map(|i| {
            let dim = vectors[i].len();
            let mut f = Vec::with_capacity(2 * dim);
            f.extend_from_slice(&vectors[i]);
            let neighbours: Vec<usize> = [i.checked_sub(1), (i + 1 < n).then_some(i + 1)]
                .into_iter()
                .flatten()
                .collect();
            let mut ctx = vec![0.0; dim];
            for &j in &neighbours {
                crate::math::add_assign(&mut ctx, &vectors[j]);
            }
            if !neighbours.is_empty() {
                let w = 1.0 / neighbours.len() as f64;
                ctx.iter_mut().for_each(|x| *x *= w);
            }
            f.extend(ctx);
            f
        })
        .collect()
}

/// Routes feature gradients back to per-token vector gradients.
pub(crate) fn feature_backward(d_features: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let n = d_features.len();
    let mut d_vec = vec![vec![0.0; dim]; n];
    for (i, df) in d_features.iter().enumerate() {
        crate::math::add_assign(&mut d_vec[i], &df[..dim]);
        let neighbours: Vec<usize> = [i.checked_sub(1), (i + 1 < n).then_some(i + 1)]
            .into_iter()
            .flatten()
            .collect();
        if neighbours.is_empty() {
            continue;
        }
        let w = 1.0 / neighbours.len() as f64;
        for j in neighbours {
            for (d, g) in d_vec[j].iter_mut().zip(&df[dim..]) {
                *d += w * g;
            }
        }
    }
    d_vec
}
