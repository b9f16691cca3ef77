use indexmap::IndexSet;
use log::warn;
use serde::{Deserialize, Serialize};

use super::corpus::{decode_spans, TaggedSentence};
use super::schema::SpanKind;

/// Default per-sentence candidate cap.
pub const DEFAULT_CANDIDATE_CAP: usize = 64;

/// `(head, trigger, tail)` proposed from one tagged sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CandidateTriple {
    pub head: String,
    pub trigger_mention: String,
    pub trigger_type: String,
    pub tail: String,
    pub sentence: usize,
}

/// Distinct entity mentions and distinct `(trigger mention, type)` pairs of a
/// sentence, in order of first appearance.
pub fn sentence_mentions(sentence: &TaggedSentence) -> (Vec<String>, Vec<(String, String)>) {
    let mut entities = IndexSet::new();
    let mut triggers = IndexSet::new();
    if let Some(tags) = sentence.best_tags() {
        for span in decode_spans(tags) {
            let mention = sentence.tokens[span.start..span.end].join(" ");
            match span.kind {
                SpanKind::Entity => {
                    entities.insert(mention);
                }
                SpanKind::Trigger => {
                    triggers.insert((mention, span.label));
                }
            }
        }
    }
    (
        entities.into_iter().collect(),
        triggers.into_iter().collect(),
    )
}

/// Every ordered pair of distinct entity mentions combined with every
/// trigger, per sentence, truncated to `cap` per sentence.
pub fn generate_candidates(sentences: &[TaggedSentence], cap: usize) -> Vec<CandidateTriple> {
    let mut out = Vec::new();
    for (idx, sentence) in sentences.iter().enumerate() {
        if sentence.best_tags().is_none() {
            warn!("sentence {idx} carries no tags; skipped for candidate generation");
            continue;
        }
        let (entities, triggers) = sentence_mentions(sentence);
        let mut emitted = 0;
        'outer: for (trigger, ttype) in &triggers {
            for head in &entities {
                for tail in &entities {
                    if head == tail {
                        continue;
                    }
                    if emitted == cap {
                        warn!("sentence {idx}: candidate cap {cap} reached");
                        break 'outer;
                    }
                    out.push(CandidateTriple {
                        head: head.clone(),
                        trigger_mention: trigger.clone(),
                        trigger_type: ttype.clone(),
                        tail: tail.clone(),
                        sentence: idx,
                    });
                    emitted += 1;
                }
            }
        }
    }
    out
}
