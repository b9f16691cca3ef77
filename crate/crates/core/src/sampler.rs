//! Negative triples and benchmark entity pairs.
//!
//! Corrupted candidates replace the head or the tail of a uniformly chosen
//! positive with a uniformly chosen entity. Hard negatives are the
//! candidates the current scorer finds most plausible. Benchmark pairs are
//! the entity pairs of the most plausible positives (`P+`) and of the hardest
//! negatives (`P-`).

use std::collections::HashMap;

use indexmap::IndexSet;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple, TripleIds};
use crate::kge::TripleScorer;
use crate::math::{self, Rng};

const RETRIES_PER_SAMPLE: usize = 1000;

pub type EntityPair = (String, String);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkPairs {
    pub positives: Vec<EntityPair>,
    pub negatives: Vec<EntityPair>,
}

impl BenchmarkPairs {
    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() || self.negatives.is_empty()
    }
}

/// Ranked negatives with their likelihoods, highest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NegativeSet {
    pub triples: Vec<Triple>,
    pub scores: Vec<f64>,
}

/// One head-or-tail corruption of `ids` that is absent from `kg`.
pub(crate) fn corrupt_one(
    kg: &KnowledgeGraph,
    (h, r, t): TripleIds,
    rng: &mut Rng,
    retries: usize,
) -> Option<TripleIds> {
    let n = kg.entities().len();
    if n < 2 {
        return None;
    }
    for _ in 0..retries {
        let e = rng.gen_range(0..n);
        let cand = if rng.gen_bool(0.5) {
            (e, r, t)
        } else {
            (h, r, e)
        };
        if !kg.contains_ids(cand) {
            return Some(cand);
        }
    }
    None
}

/// True when at least one head-or-tail corruption of some triple is missing
/// from the graph, i.e. some populated relation is not complete over `E x E`.
fn has_reachable_negative(kg: &KnowledgeGraph) -> bool {
    let n = kg.entities().len();
    let mut per_relation: HashMap<usize, usize> = HashMap::new();
    for &(_, r, _) in kg.triple_ids() {
        *per_relation.entry(r).or_default() += 1;
    }
    per_relation.values().any(|&c| c < n * n)
}

/// `n` corrupted triples absent from `kg`, deterministic under `seed`.
pub fn corrupt_candidates(kg: &KnowledgeGraph, n: usize, seed: u64) -> Result<Vec<Triple>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if kg.entities().len() < 2 {
        return Err(Error::Data("corruption needs at least two entities".into()));
    }
    if !has_reachable_negative(kg) {
        return Err(Error::Data(
            "graph is complete: no negative triples exist".into(),
        ));
    }
    let mut rng = math::rng(seed, 5);
    let positives = kg.triple_ids();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut found = None;
        for _ in 0..RETRIES_PER_SAMPLE {
            let ids = positives[rng.gen_range(0..positives.len())];
            if let Some(c) = corrupt_one(kg, ids, &mut rng, 1) {
                found = Some(c);
                break;
            }
        }
        match found {
            Some(c) => out.push(kg.resolve(c)),
            None => {
                return Err(Error::Data(
                    "retry budget exhausted while sampling negatives".into(),
                ))
            }
        }
    }
    Ok(out)
}

/// Triples with their likelihoods, sorted by likelihood descending and then
/// by `(head, relation, tail)`.
pub fn rank_by_likelihood<S: TripleScorer + ?Sized>(
    triples: &[Triple],
    scorer: &S,
) -> Vec<(Triple, f64)> {
    let mut scored: Vec<(Triple, f64)> = triples
        .iter()
        .map(|t| (t.clone(), scorer.likelihood(t)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
}

/// The `budget` most plausible candidates.
pub fn hard_negatives<S: TripleScorer + ?Sized>(
    candidates: &[Triple],
    scorer: &S,
    budget: usize,
) -> Result<NegativeSet> {
    if budget > candidates.len() {
        return Err(Error::Data(format!(
            "budget {budget} exceeds {} candidates",
            candidates.len()
        )));
    }
    let (triples, scores) = rank_by_likelihood(candidates, scorer)
        .into_iter()
        .take(budget)
        .unzip();
    Ok(NegativeSet { triples, scores })
}

fn top_pairs<I>(ranked: I, k: usize, exclude: Option<&IndexSet<EntityPair>>) -> Vec<EntityPair>
where
    I: IntoIterator<Item = Triple>,
{
    let mut seen = IndexSet::new();
    for t in ranked {
        if seen.len() == k {
            break;
        }
        let pair = (t.head, t.tail);
        if exclude.is_some_and(|ex| ex.contains(&pair)) {
            continue;
        }
        seen.insert(pair);
    }
    seen.into_iter().collect()
}

/// Benchmark entity pairs: the `k` best distinct pairs among the positives
/// and among `neg_budget` corrupted candidates, both ranked by likelihood
/// descending. Negative pairs that occur anywhere in `kg` are skipped.
pub fn sample_benchmarks<S: TripleScorer + ?Sized>(
    kg: &KnowledgeGraph,
    scorer: &S,
    k: usize,
    neg_budget: usize,
    seed: u64,
) -> Result<BenchmarkPairs> {
    if kg.is_empty() {
        return Err(Error::Data(
            "cannot sample benchmarks from an empty graph".into(),
        ));
    }
    if k == 0 {
        return Err(Error::Config("benchmark count k must be at least 1".into()));
    }
    let positives = top_pairs(
        rank_by_likelihood(&kg.triples(), scorer)
            .into_iter()
            .map(|(t, _)| t),
        k,
        None,
    );
    let candidates = if kg.entities().len() >= 2 && has_reachable_negative(kg) {
        corrupt_candidates(kg, neg_budget, seed)?
    } else {
        Vec::new()
    };
    let known = kg.entity_pairs();
    let negatives = top_pairs(
        rank_by_likelihood(&candidates, scorer)
            .into_iter()
            .map(|(t, _)| t),
        k,
        Some(&known),
    );
    Ok(BenchmarkPairs {
        positives,
        negatives,
    })
}
