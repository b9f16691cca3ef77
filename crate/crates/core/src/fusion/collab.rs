use std::collections::BTreeSet;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::align::{align_relations, translate, AlignConfig, AlignmentRecord, CandidateView};
use super::enrich::enrich;
use crate::embeddings::{tokenize, EmbeddingTable};
use crate::error::{Error, Result};
use crate::explorer::{
    generate_candidates, train_explorer, CandidateTriple, ExplorerConfig, ExplorerModel, TagSchema,
    TaggedSentence,
};
use crate::kg::{KnowledgeGraph, Triple};
use crate::kge::{train_kge, train_kge_from, KgeConfig, KgeModel};
use crate::sampler::{corrupt_candidates, hard_negatives, sample_benchmarks, BenchmarkPairs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Shared embedding dimension.
    pub dim: usize,
    /// Weight of mention similarity in the alignment score.
    pub mention_weight: f64,
    /// Minimum alignment score for an accepted relation mapping.
    pub threshold: f64,
    /// New triples merged per round.
    pub top_k: usize,
    pub rounds: usize,
    /// Benchmark pairs sampled per side.
    pub benchmark_k: usize,
    /// Negatives kept for KGE training per round.
    pub neg_budget: usize,
    /// Corrupted candidates drawn per kept negative.
    pub neg_pool_factor: usize,
    pub candidate_cap: usize,
    /// Trailing share of the corpus held out for extraction.
    pub extract_fraction: f64,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            dim: 16,
            mention_weight: 0.5,
            threshold: 0.0,
            top_k: 10,
            rounds: 3,
            benchmark_k: 5,
            neg_budget: 50,
            neg_pool_factor: 4,
            candidate_cap: crate::explorer::DEFAULT_CANDIDATE_CAP,
            extract_fraction: 0.2,
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn align_config(&self) -> AlignConfig {
        AlignConfig {
            mention_weight: self.mention_weight,
            threshold: self.threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.align_config().validate()?;
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.dim == 0 {
            return bad("dimension must be positive");
        }
        if self.rounds == 0 {
            return bad("at least one round is required");
        }
        if self.benchmark_k == 0 {
            return bad("benchmark count must be positive");
        }
        if self.neg_budget == 0 || self.neg_pool_factor == 0 {
            return bad("negative budget and pool factor must be positive");
        }
        if !(self.extract_fraction > 0.0 && self.extract_fraction < 1.0) {
            return bad("extract fraction must lie strictly between 0 and 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based round number.
    pub round: usize,
    pub kge_loss: f64,
    pub explorer_loss: f64,
    pub accepted: Vec<Triple>,
    pub alignment: Vec<AlignmentRecord>,
    pub benchmark: BenchmarkPairs,
    pub kg_size: usize,
    /// Candidates generated at the end of the round for the next one.
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub rounds: Vec<RoundReport>,
    pub final_kg_path: Option<String>,
}

impl FusionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Everything a collaboration run produces.
#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub report: FusionReport,
    pub kg: KnowledgeGraph,
    pub kge: KgeModel,
    pub explorer: ExplorerModel,
}

/// Embeddings over every token of the graph and corpus, in a fixed order.
pub fn initial_embeddings(
    prior: &KnowledgeGraph,
    corpus: &[TaggedSentence],
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let mut vocab = BTreeSet::new();
    for m in prior.entities().iter().chain(prior.relations()) {
        vocab.extend(tokenize(m));
    }
    for s in corpus {
        vocab.extend(s.tokens.iter().map(|t| t.to_lowercase()));
    }
    EmbeddingTable::init_random(vocab.iter().map(String::as_str), dim, seed)
}

/// Training and extraction partitions; the extraction part is the tail.
pub fn split_corpus(
    corpus: &[TaggedSentence],
    fraction: f64,
) -> (&[TaggedSentence], &[TaggedSentence]) {
    if corpus.len() < 2 {
        warn!("corpus too small to split; extracting from the training sentences");
        return (corpus, corpus);
    }
    let n = ((corpus.len() as f64 * fraction).round() as usize).clamp(1, corpus.len() - 1);
    corpus.split_at(corpus.len() - n)
}

fn in_round(round: usize, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("round {round}: {m}")),
        Error::Data(m) => Error::Data(format!("round {round}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("round {round}: {m}")),
        other => other,
    }
}

/// Alternates supervisor and explorer steps for `cfg.rounds` rounds.
///
/// Each round aligns and merges the previous round's candidates (none in the
/// first round), trains the embedding model against fresh negatives, samples
/// benchmark pairs, trains the explorer and extracts new candidates.
pub fn run_collaboration(
    prior: &KnowledgeGraph,
    corpus: &[TaggedSentence],
    schema: &TagSchema,
    cfg: &FusionConfig,
    kge_cfg: &KgeConfig,
    explorer_cfg: &ExplorerConfig,
    emb: Option<EmbeddingTable>,
) -> Result<FusionOutcome> {
    cfg.validate()?;
    kge_cfg.validate()?;
    explorer_cfg.validate()?;
    if prior.is_empty() {
        return Err(Error::Data("prior graph is empty".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Data("corpus is empty".into()));
    }
    let emb = match emb {
        Some(e) if e.dim() != cfg.dim => {
            return Err(Error::Config(format!(
                "embeddings have dimension {}, configuration asks for {}",
                e.dim(),
                cfg.dim
            )))
        }
        Some(e) => e,
        None => initial_embeddings(prior, corpus, cfg.dim, cfg.seed)?,
    };
    let (train_split, extract_split) = split_corpus(corpus, cfg.extract_fraction);
    let mut explorer = ExplorerModel::new(schema.clone(), cfg.dim, explorer_cfg.clone())?;
    let mut kg = prior.clone();
    let mut kge: Option<KgeModel> = None;
    let mut fresh_emb = Some(emb);
    let mut candidates: Vec<CandidateTriple> = Vec::new();
    let mut rounds = Vec::with_capacity(cfg.rounds);

    for r in 0..cfg.rounds {
        let round = r + 1;
        let seed = cfg.seed.wrapping_add(r as u64);
        let ctx = |e| in_round(round, e);

        let mut accepted = Vec::new();
        let mut alignment = Vec::new();
        if let (false, Some(model)) = (candidates.is_empty(), kge.as_ref()) {
            let view = CandidateView::from_candidates(&candidates);
            let map = align_relations(&view, &kg, &model.emb, &cfg.align_config()).map_err(ctx)?;
            let translated = translate(&candidates, &map);
            let (next, acc) = enrich(&kg, &translated, model, cfg.top_k);
            info!(
                "round {round}: {} candidates, {} aligned keys, {} translated, {} accepted",
                candidates.len(),
                map.len(),
                translated.len(),
                acc.len()
            );
            kg = next;
            accepted = acc;
            alignment = map.records();
        }

        let pool =
            corrupt_candidates(&kg, cfg.neg_budget * cfg.neg_pool_factor, seed).map_err(ctx)?;
        let budget = cfg.neg_budget.min(pool.len());
        let negatives: Vec<Triple> = match kge.as_ref() {
            None => pool.into_iter().take(budget).collect(),
            Some(model) => hard_negatives(&pool, model, budget).map_err(ctx)?.triples,
        };

        let round_kge_cfg = KgeConfig {
            seed: kge_cfg.seed.wrapping_add(r as u64),
            ..kge_cfg.clone()
        };
        let (model, kge_report) = match (kge.take(), fresh_emb.take()) {
            (Some(model), _) => train_kge_from(model, &kg, &negatives, &round_kge_cfg),
            (None, Some(emb)) => train_kge(&kg, &negatives, &round_kge_cfg, emb),
            (None, None) => unreachable!("embeddings are consumed by the first round only"),
        }
        .map_err(ctx)?;
        let mut model = model;

        let benchmark =
            sample_benchmarks(&kg, &model, cfg.benchmark_k, cfg.neg_budget, seed).map_err(ctx)?;
        let explorer_report =
            train_explorer(&mut explorer, train_split, Some(&benchmark), &mut model.emb)
                .map_err(ctx)?;

        let tagged = explorer.tag_corpus(&model.emb, extract_split);
        candidates = generate_candidates(&tagged, cfg.candidate_cap);

        rounds.push(RoundReport {
            round,
            kge_loss: kge_report.final_loss,
            explorer_loss: explorer_report.final_loss.combined,
            accepted,
            alignment,
            benchmark,
            kg_size: kg.len(),
            candidates: candidates.len(),
        });
        info!("round {round}: |T| = {}", kg.len());
        kge = Some(model);
    }

    Ok(FusionOutcome {
        report: FusionReport {
            rounds,
            final_kg_path: None,
        },
        kg,
        kge: kge.expect("at least one round ran"),
        explorer,
    })
}
