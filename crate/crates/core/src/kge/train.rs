use std::collections::HashMap;

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use super::conv::{CompiledTriple, Gradient, KgeModel};
use super::{KgeConfig, Optimizer};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::math::{self, Rng};
use crate::sampler::corrupt_one;

/// Loss trajectory of a training run. Losses are means over pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean pair loss seen during each epoch, accumulated before each update.
    pub epoch_losses: Vec<f64>,
    /// Mean loss on a fixed pairing, before any update.
    pub initial_loss: f64,
    /// Mean loss on the same fixed pairing after the last epoch.
    pub final_loss: f64,
}

impl TrainReport {
    pub fn last_epoch_loss(&self) -> f64 {
        self.epoch_losses
            .last()
            .copied()
            .unwrap_or(self.initial_loss)
    }
}

/// Trains a freshly initialised convolutional model on `kg` with BPR loss.
///
/// Every epoch each positive `(h, r, t)` is paired with one negative: a
/// uniformly drawn member of `negatives` sharing relation `r` when one exists,
/// otherwise a fresh head-or-tail corruption of the positive.
pub fn train_kge(
    kg: &KnowledgeGraph,
    negatives: &[Triple],
    cfg: &KgeConfig,
    emb: EmbeddingTable,
) -> Result<(KgeModel, TrainReport)> {
    let model = KgeModel::new(cfg, emb)?;
    train_kge_from(model, kg, negatives, cfg)
}

/// Continues training an existing model.
pub fn train_kge_from(
    mut model: KgeModel,
    kg: &KnowledgeGraph,
    negatives: &[Triple],
    cfg: &KgeConfig,
) -> Result<(KgeModel, TrainReport)> {
    cfg.validate()?;
    if kg.is_empty() {
        return Err(Error::Data(
            "cannot train on an empty knowledge graph".into(),
        ));
    }

    let entities: Vec<Vec<usize>> = kg
        .entities()
        .iter()
        .map(|e| model.emb.compile_mention(e))
        .collect();
    let relations: Vec<Vec<usize>> = kg
        .relations()
        .iter()
        .map(|r| model.emb.compile_mention(r))
        .collect();
    let positives: Vec<_> = kg.triple_ids().iter().copied().collect();
    let mut pool: HashMap<&str, Vec<CompiledTriple>> = HashMap::new();
    for t in negatives {
        let c = model.compile(t);
        pool.entry(t.relation.as_str()).or_default().push(c);
    }
    let compile_ids = |(h, r, t): (usize, usize, usize)| {
        CompiledTriple([
            entities[h].clone(),
            relations[r].clone(),
            entities[t].clone(),
        ])
    };

    let mut rng = math::rng(cfg.seed, 3);
    let draw_pairs = |rng: &mut Rng| -> Vec<(CompiledTriple, CompiledTriple)> {
        let mut pairs = Vec::with_capacity(positives.len());
        for &ids in &positives {
            let rel = kg.relations()[ids.1].as_str();
            let neg = match pool.get(rel) {
                Some(cands) if !cands.is_empty() => cands[rng.gen_range(0..cands.len())].clone(),
                _ => match corrupt_one(kg, ids, rng, 32) {
                    Some(n) => compile_ids(n),
                    None => {
                        debug!("no corruption found for {:?}", kg.resolve(ids));
                        continue;
                    }
                },
            };
            pairs.push((compile_ids(ids), neg));
        }
        pairs
    };

    let eval_pairs = draw_pairs(&mut rng);
    if eval_pairs.is_empty() {
        return Err(Error::Data(
            "no negative triples can be formed for this graph".into(),
        ));
    }
    let initial_loss = mean_loss(&model, &eval_pairs);
    let mut optimizer = OptimizerState::new(
        cfg.optimizer,
        model.params().len(),
        model.emb.values().len(),
    );
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut pairs = draw_pairs(&mut rng);
        if cfg.shuffle {
            pairs.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for batch in pairs.chunks(cfg.batch_size) {
            let mut grad = Gradient::zeros(model.params().len());
            for (p, n) in batch {
                total += model.pair_loss_and_grad(p, n, &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            optimizer.step(
                &mut model,
                &grad,
                scale,
                cfg.learning_rate,
                cfg.update_embeddings,
            );
        }
        let mean = total / pairs.len().max(1) as f64;
        math::ensure_finite(mean, &format!("KGE loss at epoch {epoch}"))?;
        epoch_losses.push(mean);
    }
    math::ensure_all_finite(model.params(), "KGE parameters")?;
    let final_loss = mean_loss(&model, &eval_pairs);
    Ok((
        model,
        TrainReport {
            epoch_losses,
            initial_loss,
            final_loss,
        },
    ))
}

fn mean_loss(model: &KgeModel, pairs: &[(CompiledTriple, CompiledTriple)]) -> f64 {
    let total: f64 = pairs
        .iter()
        .map(|(p, n)| {
            let diff = model.forward_compiled(p).prob - model.forward_compiled(n).prob;
            math::neg_log_sigmoid(diff)
        })
        .sum();
    total / pairs.len() as f64
}

/// First-order update rule with its running state.
pub(crate) enum OptimizerState {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: i32,
        m: Vec<f64>,
        v: Vec<f64>,
        tm: Vec<f64>,
        tv: Vec<f64>,
    },
}

impl OptimizerState {
    pub fn new(opt: Optimizer, n_params: usize, n_token_values: usize) -> Self {
        match opt {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::Adam { beta1, beta2, eps } => OptimizerState::Adam {
                beta1,
                beta2,
                eps,
                step: 0,
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                tm: vec![0.0; n_token_values],
                tv: vec![0.0; n_token_values],
            },
        }
    }

    /// Applies `scale * grad` with learning rate `lr`.
    pub fn step(
        &mut self,
        model: &mut KgeModel,
        grad: &Gradient,
        scale: f64,
        lr: f64,
        update_tokens: bool,
    ) {
        let dim = model.dim();
        match self {
            OptimizerState::Sgd => {
                for (p, g) in model.params_mut().iter_mut().zip(&grad.params) {
                    *p -= lr * scale * g;
                }
                if update_tokens {
                    for (&id, g) in &grad.tokens {
                        for (p, gi) in model.emb.row_mut(id).iter_mut().zip(g) {
                            *p -= lr * scale * gi;
                        }
                    }
                }
            }
            OptimizerState::Adam {
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
                tm,
                tv,
            } => {
                *step += 1;
                let c1 = 1.0 - beta1.powi(*step);
                let c2 = 1.0 - beta2.powi(*step);
                let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = *beta1 * *m + (1.0 - *beta1) * g;
                    *v = *beta2 * *v + (1.0 - *beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + *eps);
                };
                for (i, p) in model.params_mut().iter_mut().enumerate() {
                    update(p, scale * grad.params[i], &mut m[i], &mut v[i]);
                }
                if update_tokens {
                    for (&id, g) in &grad.tokens {
                        let row = model.emb.row_mut(id);
                        for k in 0..dim {
                            let j = id * dim + k;
                            update(&mut row[k], scale * g[k], &mut tm[j], &mut tv[j]);
                        }
                    }
                }
            }
        }
    }
}
