use std::collections::BTreeMap;

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use super::tras::{blend, check_weight, difference_sum, relation_translation};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::explorer::CandidateTriple;
use crate::kg::{KnowledgeGraph, Triple};
use crate::math;

/// `(trigger mention, trigger type)`.
pub type RelationKey = (String, String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    /// Weight of the mention similarity against the translated similarity.
    pub mention_weight: f64,
    /// Entries scoring below this are dropped.
    pub threshold: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            mention_weight: 0.5,
            threshold: 0.0,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        check_weight(self.mention_weight)?;
        if !(self.threshold >= -1.0 && self.threshold.is_finite()) {
            return Err(Error::Config(format!(
                "invalid alignment threshold {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Candidate triples grouped by relation key, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateView {
    groups: IndexMap<RelationKey, IndexSet<(String, String)>>,
}

impl CandidateView {
    pub fn from_candidates(candidates: &[CandidateTriple]) -> Self {
        let mut groups: IndexMap<RelationKey, IndexSet<(String, String)>> = IndexMap::new();
        for c in candidates {
            groups
                .entry((c.trigger_mention.clone(), c.trigger_type.clone()))
                .or_default()
                .insert((c.head.clone(), c.tail.clone()));
        }
        CandidateView { groups }
    }

    pub fn keys(&self) -> impl Iterator<Item = &RelationKey> {
        self.groups.keys()
    }

    pub fn pairs(&self, key: &RelationKey) -> Option<&IndexSet<(String, String)>> {
        self.groups.get(key)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub relation: String,
    pub score: f64,
}

/// One line of the alignment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub from: String,
    pub trigger_type: String,
    pub to: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignmentMap {
    entries: BTreeMap<RelationKey, AlignmentEntry>,
}

impl AlignmentMap {
    pub fn get(&self, trigger_mention: &str, trigger_type: &str) -> Option<&AlignmentEntry> {
        self.entries
            .get(&(trigger_mention.to_string(), trigger_type.to_string()))
    }

    pub fn insert(&mut self, key: RelationKey, entry: AlignmentEntry) {
        self.entries.insert(key, entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RelationKey, &AlignmentEntry)> {
        self.entries.iter()
    }

    pub fn records(&self) -> Vec<AlignmentRecord> {
        self.entries
            .iter()
            .map(|((from, ty), e)| AlignmentRecord {
                from: from.clone(),
                trigger_type: ty.clone(),
                to: e.relation.clone(),
                score: e.score,
            })
            .collect()
    }
}

struct PriorRelation<'a> {
    name: &'a str,
    mention: Vec<f64>,
    translation: Vec<f64>,
}

fn prior_relations<'a>(
    prior: &'a KnowledgeGraph,
    emb: &EmbeddingTable,
) -> Result<Vec<PriorRelation<'a>>> {
    prior
        .relations()
        .iter()
        .map(|r| {
            Ok(PriorRelation {
                name: r.as_str(),
                mention: emb.mention_vector_or_zero(r),
                translation: relation_translation(prior, emb, r)?,
            })
        })
        .collect()
}

/// Best prior relation for one source relation; the first maximum wins.
fn best_match<'a>(
    targets: &[PriorRelation<'a>],
    mention: &[f64],
    translation: &[f64],
    gamma: f64,
) -> Option<(&'a str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for target in targets {
        let score = blend(
            gamma,
            math::cosine(mention, &target.mention),
            math::cosine(translation, &target.translation),
        );
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((target.name, score));
        }
    }
    best
}

/// Maps each candidate relation key to the prior relation with the highest
/// alignment score, keeping entries that reach `cfg.threshold`.
pub fn align_relations(
    view: &CandidateView,
    prior: &KnowledgeGraph,
    emb: &EmbeddingTable,
    cfg: &AlignConfig,
) -> Result<AlignmentMap> {
    cfg.validate()?;
    let mut map = AlignmentMap::default();
    if view.is_empty() {
        return Ok(map);
    }
    if prior.relations().is_empty() {
        return Err(Error::Data(
            "prior graph has no relations to align to".into(),
        ));
    }
    let targets = prior_relations(prior, emb)?;
    for (key, pairs) in &view.groups {
        let mention = emb.mention_vector_or_zero(&key.0);
        let translation = difference_sum(emb, pairs.iter().map(|(h, t)| (h.as_str(), t.as_str())));
        if let Some((relation, score)) =
            best_match(&targets, &mention, &translation, cfg.mention_weight)
        {
            if score >= cfg.threshold {
                map.insert(
                    key.clone(),
                    AlignmentEntry {
                        relation: relation.to_string(),
                        score,
                    },
                );
            }
        }
    }
    Ok(map)
}

/// Aligns every relation of `source` to the best relation of `target`.
/// Returns `(source relation, target relation, score)` in source order,
/// omitting relations that fall below the threshold.
pub fn align_graphs(
    source: &KnowledgeGraph,
    target: &KnowledgeGraph,
    emb: &EmbeddingTable,
    cfg: &AlignConfig,
) -> Result<Vec<(String, String, f64)>> {
    cfg.validate()?;
    if target.relations().is_empty() {
        return Err(Error::Data(
            "target graph has no relations to align to".into(),
        ));
    }
    let targets = prior_relations(target, emb)?;
    let mut out = Vec::new();
    for r in source.relations() {
        let mention = emb.mention_vector_or_zero(r);
        let translation = relation_translation(source, emb, r)?;
        if let Some((to, score)) = best_match(&targets, &mention, &translation, cfg.mention_weight)
        {
            if score >= cfg.threshold {
                out.push((r.clone(), to.to_string(), score));
            }
        }
    }
    Ok(out)
}

/// Rewrites mapped candidates as prior-relation triples, dropping unmapped
/// ones and repeats.
pub fn translate(candidates: &[CandidateTriple], map: &AlignmentMap) -> Vec<Triple> {
    let mut out = IndexSet::new();
    for c in candidates {
        if let Some(entry) = map.get(&c.trigger_mention, &c.trigger_type) {
            if let Ok(t) = Triple::new(&c.head, &entry.relation, &c.tail) {
                out.insert(t);
            }
        }
    }
    out.into_iter().collect()
}
