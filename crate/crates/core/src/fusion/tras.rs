use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::math;

/// Cosine between two mention vectors; 0 when either vector vanishes.
pub fn mention_similarity(emb: &EmbeddingTable, a: &str, b: &str) -> Result<f64> {
    Ok(math::cosine(
        &emb.mention_vector(a)?,
        &emb.mention_vector(b)?,
    ))
}

/// `sum (e_head - e_tail)` over the given mention pairs.
pub fn difference_sum<'a, I>(emb: &EmbeddingTable, pairs: I) -> Vec<f64>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut acc = vec![0.0; emb.dim()];
    for (h, t) in pairs {
        math::add_assign(&mut acc, &emb.mention_vector_or_zero(h));
        math::sub_assign(&mut acc, &emb.mention_vector_or_zero(t));
    }
    acc
}

/// Translation vector of a relation: the difference sum over its triples.
pub fn relation_translation(
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
    relation: &str,
) -> Result<Vec<f64>> {
    let ents = kg.entities();
    let pairs: Vec<(usize, usize)> = kg.triples_with_relation(relation).collect();
    if pairs.is_empty() {
        return Err(Error::Data(format!(
            "relation {relation:?} has no supporting triples"
        )));
    }
    Ok(difference_sum(
        emb,
        pairs
            .iter()
            .map(|&(h, t)| (ents[h].as_str(), ents[t].as_str())),
    ))
}

/// Cosine between the translation vectors of `r1` in `kg1` and `r2` in `kg2`.
pub fn translated_similarity(
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    emb: &EmbeddingTable,
    r1: &str,
    r2: &str,
) -> Result<f64> {
    Ok(math::cosine(
        &relation_translation(kg1, emb, r1)?,
        &relation_translation(kg2, emb, r2)?,
    ))
}

pub(crate) fn check_weight(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!(
            "mention weight must lie in [0, 1], got {gamma}"
        )));
    }
    Ok(())
}

/// `gamma * mention + (1 - gamma) * translated`.
pub fn blend(gamma: f64, mention: f64, translated: f64) -> f64 {
    gamma * mention + (1.0 - gamma) * translated
}

/// Translated relation alignment score between `r1` of `kg1` and `r2` of `kg2`.
pub fn tras(
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    emb: &EmbeddingTable,
    r1: &str,
    r2: &str,
    gamma: f64,
) -> Result<f64> {
    check_weight(gamma)?;
    let sm = mention_similarity(emb, r1, r2)?;
    let se = translated_similarity(kg1, kg2, emb, r1, r2)?;
    Ok(blend(gamma, sm, se))
}
