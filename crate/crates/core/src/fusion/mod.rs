//! Relation alignment, enrichment and the collaborative fusion loop.

mod align;
mod collab;
mod enrich;
mod tras;

pub use align::{
    align_graphs, align_relations, translate, AlignConfig, AlignmentEntry, AlignmentMap,
    AlignmentRecord, CandidateView, RelationKey,
};
pub use collab::{
    initial_embeddings, run_collaboration, split_corpus, FusionConfig, FusionOutcome, FusionReport,
    RoundReport,
};
pub use enrich::enrich;
pub use tras::{
    blend, difference_sum, mention_similarity, relation_translation, translated_similarity, tras,
};
