//! Ranking and tagging metrics, plus persisted evaluation pools.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::decode_spans;
use crate::kg::{KnowledgeGraph, Triple};
use crate::kge::TripleScorer;
use crate::math;

/// 1-based rank of `positive` within `pool`. Equal scores count against the
/// positive.
pub fn rank_triple<S: TripleScorer + ?Sized>(
    scorer: &S,
    positive: &Triple,
    pool: &[Triple],
) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::Data("evaluation pool is empty".into()));
    }
    if pool.contains(positive) {
        return Err(Error::Data(format!(
            "positive {positive} appears in its own pool"
        )));
    }
    let score = scorer.likelihood(positive);
    Ok(1 + pool
        .iter()
        .filter(|t| scorer.likelihood(t) >= score)
        .count())
}

fn check_ranks(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::Data("no ranks to aggregate".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::Data("ranks are 1-based".into()));
    }
    Ok(())
}

/// Sum of reciprocal ranks, divided by their count when `normalize`.
pub fn mrr(ranks: &[usize], normalize: bool) -> Result<f64> {
    check_ranks(ranks)?;
    let sum: f64 = ranks.iter().map(|&r| 1.0 / r as f64).sum();
    Ok(if normalize {
        sum / ranks.len() as f64
    } else {
        sum
    })
}

/// Fraction of ranks within the top `n`.
pub fn hit_at_n(ranks: &[usize], n: usize) -> Result<f64> {
    check_ranks(ranks)?;
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    Ok(ranks.iter().filter(|&&r| r <= n).count() as f64 / ranks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Exact non-`O` tag matches per position.
    Token,
    /// Exact `(type, start, end)` span matches.
    #[default]
    Span,
}

impl std::str::FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token" => Ok(MatchMode::Token),
            "span" => Ok(MatchMode::Span),
            other => Err(Error::Config(format!("unknown match mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf1 {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf1 {
            precision,
            recall,
            f1,
        }
    }
}

/// Precision, recall and F1 of predicted tag sequences against gold ones.
pub fn prf1(pred: &[Vec<String>], gold: &[Vec<String>], mode: MatchMode) -> Result<Prf1> {
    if pred.len() != gold.len() {
        return Err(Error::Data(format!(
            "{} predicted sentences vs {} gold",
            pred.len(),
            gold.len()
        )));
    }
    let (mut correct, mut n_pred, mut n_gold) = (0, 0, 0);
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Data(format!(
                "sentence {i}: {} predicted tags vs {} gold",
                p.len(),
                g.len()
            )));
        }
        match mode {
            MatchMode::Token => {
                n_pred += p.iter().filter(|t| *t != "O").count();
                n_gold += g.iter().filter(|t| *t != "O").count();
                correct += p.iter().zip(g).filter(|(a, b)| *a != "O" && a == b).count();
            }
            MatchMode::Span => {
                let ps: IndexSet<_> = decode_spans(p).into_iter().collect();
                let gs: IndexSet<_> = decode_spans(g).into_iter().collect();
                n_pred += ps.len();
                n_gold += gs.len();
                correct += ps.intersection(&gs).count();
            }
        }
    }
    Ok(Prf1::from_counts(correct, n_pred, n_gold))
}

/// Probability that a random positive outscores a random negative; ties
/// count one half.
pub fn roc_auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Data(
            "ROC-AUC needs positive and negative scores".into(),
        ));
    }
    let mut wins = 0.0;
    for p in positives {
        for n in negatives {
            wins += match p.total_cmp(n) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    Ok(wins / (positives.len() * negatives.len()) as f64)
}

/// A positive with the negatives it is ranked against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPool {
    pub positive: Triple,
    pub negatives: Vec<Triple>,
}

/// Samples up to `size` distinct head-or-tail corruptions per positive,
/// skipping any triple in `known`.
pub fn build_pools(
    known: &KnowledgeGraph,
    positives: &[Triple],
    size: usize,
    seed: u64,
) -> Result<Vec<EvalPool>> {
    if size == 0 {
        return Err(Error::Config("pool size must be positive".into()));
    }
    let entities = known.entities();
    let mut rng = math::rng(seed, 7);
    let mut pools = Vec::with_capacity(positives.len());
    for p in positives {
        let mut space: IndexSet<Triple> = IndexSet::new();
        for e in entities {
            for cand in [
                Triple {
                    head: e.clone(),
                    ..p.clone()
                },
                Triple {
                    tail: e.clone(),
                    ..p.clone()
                },
            ] {
                if cand != *p && !known.contains(&cand) {
                    space.insert(cand);
                }
            }
        }
        let mut space: Vec<Triple> = space.into_iter().collect();
        if space.len() < size {
            log::warn!("only {} corruptions available for {p}", space.len());
        }
        space.shuffle(&mut rng);
        space.truncate(size);
        if space.is_empty() {
            return Err(Error::Data(format!(
                "no corruption of {p} lies outside the graph"
            )));
        }
        pools.push(EvalPool {
            positive: p.clone(),
            negatives: space,
        });
    }
    Ok(pools)
}

pub fn save_pools(pools: &[EvalPool], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(pools)?)?;
    Ok(())
}

pub fn load_pools(path: impl AsRef<Path>) -> Result<Vec<EvalPool>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPredictionReport {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
}

/// Ranks every pool's positive and aggregates MRR and Hit@n for each `n`.
pub fn evaluate_pools<S: TripleScorer + ?Sized>(
    scorer: &S,
    pools: &[EvalPool],
    ns: &[usize],
) -> Result<LinkPredictionReport> {
    let ranks = pools
        .iter()
        .map(|p| rank_triple(scorer, &p.positive, &p.negatives))
        .collect::<Result<Vec<_>>>()?;
    let mut hits = BTreeMap::new();
    for &n in ns {
        hits.insert(n, hit_at_n(&ranks, n)?);
    }
    Ok(LinkPredictionReport {
        mrr: mrr(&ranks, true)?,
        hits,
    })
}
