use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::conv::CompiledTriple;
use super::train::TrainReport;
use super::{KgeConfig, Norm};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::math;
use crate::sampler::corrupt_one;

fn translation_residual(h: &[f64], r: &[f64], t: &[f64]) -> Vec<f64> {
    h.iter()
        .zip(r)
        .zip(t)
        .map(|((h, r), t)| h + r - t)
        .collect()
}

fn norm_of(v: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::L1 => v.iter().map(|x| x.abs()).sum(),
        Norm::L2 => math::l2_norm(v),
    }
}

/// `d(e_head + e_rel, e_tail)`; lower means more plausible.
pub fn transe_score(emb: &EmbeddingTable, t: &Triple, norm: Norm) -> f64 {
    let h = emb.mention_vector_or_zero(&t.head);
    let r = emb.mention_vector_or_zero(&t.relation);
    let tl = emb.mention_vector_or_zero(&t.tail);
    norm_of(&translation_residual(&h, &r, &tl), norm)
}

/// Hinge margin loss `Σ max(0, margin + f(pos) - f(neg))` over position-paired lists.
pub fn transe_margin_loss(
    emb: &EmbeddingTable,
    positives: &[Triple],
    negatives: &[Triple],
    cfg: &KgeConfig,
) -> Result<f64> {
    if positives.len() != negatives.len() {
        return Err(Error::Data(format!(
            "{} positives but {} negatives",
            positives.len(),
            negatives.len()
        )));
    }
    Ok(positives
        .iter()
        .zip(negatives)
        .map(|(p, n)| {
            (cfg.margin + transe_score(emb, p, cfg.norm) - transe_score(emb, n, cfg.norm)).max(0.0)
        })
        .sum())
}

/// Distance and its derivative w.r.t. the residual `h + r - t`.
fn distance_grad(emb: &EmbeddingTable, t: &CompiledTriple, norm: Norm) -> (f64, Vec<f64>) {
    let res = translation_residual(
        &emb.compose(&t.0[0]),
        &emb.compose(&t.0[1]),
        &emb.compose(&t.0[2]),
    );
    let d = norm_of(&res, norm);
    let g = match norm {
        Norm::L1 => res
            .iter()
            .map(|&x| if x == 0.0 { 0.0 } else { x.signum() })
            .collect(),
        Norm::L2 if d > 0.0 => res.iter().map(|x| x / d).collect(),
        Norm::L2 => vec![0.0; res.len()],
    };
    (d, g)
}

fn accumulate(
    grads: &mut BTreeMap<usize, Vec<f64>>,
    emb: &EmbeddingTable,
    t: &CompiledTriple,
    d_res: &[f64],
    sign: f64,
) {
    for (slot, ids) in t.0.iter().enumerate() {
        let s = if slot == 2 { -sign } else { sign } * emb.token_weight(ids.len());
        for &id in ids {
            let g = grads.entry(id).or_insert_with(|| vec![0.0; emb.dim()]);
            for (gi, di) in g.iter_mut().zip(d_res) {
                *gi += s * di;
            }
        }
    }
}

/// Trains translational embeddings with the margin loss and plain SGD.
///
/// One fresh corruption per positive per epoch; entity token vectors are
/// projected back into the unit ball after every batch.
pub fn train_transe(
    kg: &KnowledgeGraph,
    cfg: &KgeConfig,
    mut emb: EmbeddingTable,
) -> Result<(EmbeddingTable, TrainReport)> {
    cfg.validate()?;
    if kg.is_empty() {
        return Err(Error::Data(
            "cannot train on an empty knowledge graph".into(),
        ));
    }
    let entities: Vec<Vec<usize>> = kg
        .entities()
        .iter()
        .map(|e| emb.compile_mention(e))
        .collect();
    let relations: Vec<Vec<usize>> = kg
        .relations()
        .iter()
        .map(|r| emb.compile_mention(r))
        .collect();
    let entity_tokens: BTreeSet<usize> = entities.iter().flatten().copied().collect();
    let compile = |(h, r, t): (usize, usize, usize)| {
        CompiledTriple([
            entities[h].clone(),
            relations[r].clone(),
            entities[t].clone(),
        ])
    };
    let positives: Vec<_> = kg.triple_ids().iter().copied().collect();
    let mut rng = math::rng(cfg.seed, 4);

    let draw = |rng: &mut math::Rng| -> Vec<(CompiledTriple, CompiledTriple)> {
        positives
            .iter()
            .filter_map(|&ids| corrupt_one(kg, ids, rng, 32).map(|n| (compile(ids), compile(n))))
            .collect()
    };
    let project = |emb: &mut EmbeddingTable| {
        for &id in &entity_tokens {
            let row = emb.row_mut(id);
            let n = math::l2_norm(row);
            if n > 1.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
    };
    let loss_of = |emb: &EmbeddingTable, pairs: &[(CompiledTriple, CompiledTriple)]| {
        pairs
            .iter()
            .map(|(p, n)| {
                (cfg.margin + distance_grad(emb, p, cfg.norm).0 - distance_grad(emb, n, cfg.norm).0)
                    .max(0.0)
            })
            .sum::<f64>()
            / pairs.len() as f64
    };

    project(&mut emb);
    let eval_pairs = draw(&mut rng);
    if eval_pairs.is_empty() {
        return Err(Error::Data(
            "no negative triples can be formed for this graph".into(),
        ));
    }
    let initial_loss = loss_of(&emb, &eval_pairs);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut pairs = draw(&mut rng);
        if cfg.shuffle {
            pairs.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for batch in pairs.chunks(cfg.batch_size) {
            let mut grads = BTreeMap::new();
            for (p, n) in batch {
                let (dp, gp) = distance_grad(&emb, p, cfg.norm);
                let (dn, gn) = distance_grad(&emb, n, cfg.norm);
                let loss = cfg.margin + dp - dn;
                if loss > 0.0 {
                    total += loss;
                    accumulate(&mut grads, &emb, p, &gp, 1.0);
                    accumulate(&mut grads, &emb, n, &gn, -1.0);
                }
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (id, g) in grads {
                for (x, gi) in emb.row_mut(id).iter_mut().zip(&g) {
                    *x -= step * gi;
                }
            }
            project(&mut emb);
        }
        let mean = total / pairs.len().max(1) as f64;
        math::ensure_finite(mean, &format!("TransE loss at epoch {epoch}"))?;
        epoch_losses.push(mean);
    }
    let final_loss = loss_of(&emb, &eval_pairs);
    Ok((
        emb,
        TrainReport {
            epoch_losses,
            initial_loss,
            final_loss,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: &str, r: &str, tl: &str) -> Triple {
        Triple::new(h, r, tl).unwrap()
    }

    fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        let mut e = EmbeddingTable::new(rows[0].1.len(), 0).unwrap();
        for (tok, v) in rows {
            e.insert(tok, v).unwrap();
        }
        e
    }

    #[test]
    fn exact_translation_scores_zero() {
        let e = table(&[("h", &[1.0, 0.0]), ("r", &[0.0, 1.0]), ("t", &[1.0, 1.0])]);
        assert_eq!(transe_score(&e, &t("h", "r", "t"), Norm::L2), 0.0);
    }

    #[test]
    fn three_four_five() {
        let e = table(&[("h", &[0.0, 0.0]), ("r", &[0.0, 0.0]), ("t", &[3.0, 4.0])]);
        assert_eq!(transe_score(&e, &t("h", "r", "t"), Norm::L2), 5.0);
        assert_eq!(transe_score(&e, &t("h", "r", "t"), Norm::L1), 7.0);
    }

    #[test]
    fn zero_relation_self_loop_scores_zero() {
        let e = table(&[("a", &[0.3, -2.0, 1.0]), ("r", &[0.0, 0.0, 0.0])]);
        for norm in [Norm::L1, Norm::L2] {
            assert_eq!(transe_score(&e, &t("a", "r", "a"), norm), 0.0);
        }
    }

    #[test]
    fn margin_loss_cases() {
        let e = table(&[
            ("a", &[0.0, 0.0]),
            ("r", &[0.0, 0.0]),
            ("b", &[1.0, 0.0]),
            ("c", &[3.0, 4.0]),
        ]);
        let cfg = KgeConfig {
            margin: 1.0,
            ..KgeConfig::default()
        };
        // f(pos) = 0, f(neg) = margin exactly.
        let l = transe_margin_loss(&e, &[t("a", "r", "a")], &[t("a", "r", "b")], &cfg).unwrap();
        assert_eq!(l, 0.0);
        // Equal scores contribute the margin.
        let l = transe_margin_loss(&e, &[t("a", "r", "b")], &[t("b", "r", "a")], &cfg).unwrap();
        assert_eq!(l, 1.0);
        assert!(transe_margin_loss(&e, &[t("a", "r", "b")], &[], &cfg).is_err());
    }
}
