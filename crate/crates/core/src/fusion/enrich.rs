use indexmap::IndexSet;

use crate::kg::{KnowledgeGraph, Triple};
use crate::kge::TripleScorer;
use crate::sampler::rank_by_likelihood;

/// Merges the `k` most plausible new triples of `translated` into `kg`.
///
/// Triples already in `kg` are ignored. Returns the enriched graph and the
/// accepted triples in rank order.
pub fn enrich<S: TripleScorer + ?Sized>(
    kg: &KnowledgeGraph,
    translated: &[Triple],
    scorer: &S,
    k: usize,
) -> (KnowledgeGraph, Vec<Triple>) {
    if k == 0 {
        return (kg.clone(), Vec::new());
    }
    let fresh: Vec<Triple> = translated
        .iter()
        .filter(|t| !kg.contains(t))
        .cloned()
        .collect::<IndexSet<_>>()
        .into_iter()
        .collect();
    let accepted: Vec<Triple> = rank_by_likelihood(&fresh, scorer)
        .into_iter()
        .take(k)
        .map(|(t, _)| t)
        .collect();
    (kg.merge(&accepted), accepted)
}
