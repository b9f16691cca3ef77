//! Collaborative knowledge graph fusion.
//!
//! An *explorer* tags entity and event-trigger mentions in an open corpus and
//! proposes candidate triples; a *supervisor* aligns the candidate relations to
//! a prior knowledge graph, accepts the most plausible translated triples, and
//! trains a convolutional triple-likelihood model whose rankings feed
//! benchmark entity pairs back to the explorer.
//!
//! The crate is organised by role:
//!
//! - [`kg`]: knowledge-graph data model and triple files
//! - [`embeddings`]: token vectors and mention composition
//! - [`kge`]: TransE and convolutional triple scoring, losses, training
//! - [`sampler`]: corrupted and hard negatives, benchmark pair sampling
//! - [`explorer`]: corpus parsing, the tagger, supervision losses, candidates
//! - [`fusion`]: relation alignment, enrichment and the collaborative loop
//! - [`metrics`]: ranking and tagging metrics
//! - [`synthetic`]: planted data generators used by the demos and tests

pub mod embeddings;
pub mod error;
pub mod explorer;
pub mod fusion;
pub mod kg;
pub mod kge;
pub mod math;
pub mod metrics;
pub mod sampler;
pub mod synthetic;

pub use embeddings::EmbeddingTable;
pub use error::{Error, Result};
pub use kg::{KnowledgeGraph, Triple};
pub use kge::{KgeConfig, KgeModel, Norm, TripleScorer};
