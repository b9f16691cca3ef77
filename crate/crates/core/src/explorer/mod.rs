//! Joint entity and trigger tagging with benchmark supervision.
//!
//! The explorer tags sentences, proposes candidate triples from the tagged
//! spans, and learns from two signals: token-level cross-entropy against gold
//! tags and a ranking loss over benchmark entity pairs handed down by the
//! supervisor. The two are blended as `(1 - alpha) * jee + alpha * benchmark`.

mod candidates;
mod corpus;
mod pair_scorer;
mod schema;
mod tagger;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::{debug, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use candidates::{
    generate_candidates, sentence_mentions, CandidateTriple, DEFAULT_CANDIDATE_CAP,
};
pub use corpus::{
    decode_spans, encode_spans, load_corpus, parse_corpus, Span, TaggedSentence, DEFAULT_MAX_LEN,
};
pub use pair_scorer::PairScorer;
pub use schema::{tag_string, SpanKind, Tag, TagSchema, TRIGGER_PREFIX};
pub use tagger::{feature_width, LinearTagger, Tagger};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::math;
use crate::sampler::{BenchmarkPairs, EntityPair};

/// How the benchmark pairs are reduced to a loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkMode {
    /// One score per pair set: `f(sum of e_i - e_j over the set)`.
    #[default]
    SetLevel,
    /// Mean pairwise loss over every (positive, negative) combination.
    PerPair,
}

impl FromStr for BenchmarkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "set" | "set-level" => Ok(BenchmarkMode::SetLevel),
            "pair" | "per-pair" => Ok(BenchmarkMode::PerPair),
            other => Err(Error::Config(format!("unknown benchmark mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorerConfig {
    /// Weight of the benchmark loss, in `[0, 1]`.
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Hidden width of the pair scorer.
    pub hidden: usize,
    pub max_len: usize,
    pub benchmark_mode: BenchmarkMode,
    pub update_embeddings: bool,
}

impl Default for ExplorerConfig {
    fn default() -> Self {
        ExplorerConfig {
            alpha: 0.3,
            learning_rate: 0.05,
            epochs: 30,
            seed: 0,
            hidden: 16,
            max_len: DEFAULT_MAX_LEN,
            benchmark_mode: BenchmarkMode::SetLevel,
            update_embeddings: false,
        }
    }
}

impl ExplorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "invalid learning rate {}",
                self.learning_rate
            )));
        }
        if self.hidden == 0 || self.max_len == 0 {
            return Err(Error::Config(
                "hidden width and max_len must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorerModel<T = LinearTagger> {
    pub schema: TagSchema,
    pub tagger: T,
    pub pair_scorer: PairScorer,
    pub config: ExplorerConfig,
}

impl ExplorerModel<LinearTagger> {
    /// Baseline model: a zero linear tagger and a seeded pair scorer.
    pub fn new(schema: TagSchema, dim: usize, config: ExplorerConfig) -> Result<Self> {
        let tagger = LinearTagger::new(schema.num_tags(), feature_width(dim));
        Self::with_tagger(schema, tagger, dim, config)
    }
}

impl<T: Tagger> ExplorerModel<T> {
    pub fn with_tagger(
        schema: TagSchema,
        tagger: T,
        dim: usize,
        config: ExplorerConfig,
    ) -> Result<Self> {
        config.validate()?;
        if tagger.num_tags() != schema.num_tags() {
            return Err(Error::Config(format!(
                "tagger emits {} tags, schema has {}",
                tagger.num_tags(),
                schema.num_tags()
            )));
        }
        if tagger.num_features() != feature_width(dim) {
            return Err(Error::Config(format!(
                "tagger expects {} features, embeddings give {}",
                tagger.num_features(),
                feature_width(dim)
            )));
        }
        let pair_scorer = PairScorer::new(dim, config.hidden, config.seed);
        Ok(ExplorerModel {
            schema,
            tagger,
            pair_scorer,
            config,
        })
    }

    fn check_dim(&self, emb: &EmbeddingTable) -> Result<()> {
        if feature_width(emb.dim()) != self.tagger.num_features()
            || emb.dim() != self.pair_scorer.dim()
        {
            return Err(Error::Config(format!(
                "embedding dimension {} does not match the explorer",
                emb.dim()
            )));
        }
        Ok(())
    }

    /// Tag distributions for each token of a sentence.
    pub fn tag_distributions(&self, emb: &EmbeddingTable, tokens: &[String]) -> Vec<Vec<f64>> {
        let feats = tagger::sentence_features(&tagger::token_vectors(emb, tokens));
        feats
            .iter()
            .map(|f| softmax(&self.tagger.scores(f)))
            .collect()
    }

    /// Highest-scoring tag per token; ties go to the earlier tag.
    pub fn tag(&self, emb: &EmbeddingTable, tokens: &[String]) -> Vec<String> {
        let feats = tagger::sentence_features(&tagger::token_vectors(emb, tokens));
        feats
            .iter()
            .map(|f| {
                let scores = self.tagger.scores(f);
                let best =
                    scores
                        .iter()
                        .enumerate()
                        .fold(0, |best, (k, &s)| if s > scores[best] { k } else { best });
                self.schema.tag(best).to_string()
            })
            .collect()
    }

    /// Copies of `sentences` carrying this model's predictions.
    pub fn tag_corpus(
        &self,
        emb: &EmbeddingTable,
        sentences: &[TaggedSentence],
    ) -> Vec<TaggedSentence> {
        sentences
            .iter()
            .map(|s| TaggedSentence {
                predicted: Some(self.tag(emb, &s.tokens)),
                ..s.clone()
            })
            .collect()
    }
}

impl<T: Serialize + DeserializeOwned> ExplorerModel<T> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        model.config.validate()?;
        Ok(model)
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

/// Cross-entropy of a sentence: `-sum_i ln p_i(gold_i)`.
pub fn sequence_cross_entropy(distributions: &[Vec<f64>], gold: &[usize]) -> f64 {
    distributions
        .iter()
        .zip(gold)
        .map(|(p, &g)| -p[g].ln())
        .sum()
}

fn gold_indices(schema: &TagSchema, sentence: &TaggedSentence, idx: usize) -> Result<Vec<usize>> {
    let gold = sentence
        .gold
        .as_ref()
        .ok_or_else(|| Error::Data(format!("sentence {idx} has no gold tags")))?;
    if gold.len() != sentence.len() {
        return Err(Error::Data(format!(
            "sentence {idx}: tag count differs from token count"
        )));
    }
    gold.iter()
        .map(|t| {
            schema
                .tag_index(t)
                .ok_or_else(|| Error::Data(format!("sentence {idx}: tag {t:?} not in schema")))
        })
        .collect()
}

/// Token cross-entropy summed per sentence and averaged over sentences.
pub fn jee_loss<T: Tagger>(
    model: &ExplorerModel<T>,
    emb: &EmbeddingTable,
    batch: &[TaggedSentence],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    model.check_dim(emb)?;
    let mut total = 0.0;
    for (idx, s) in batch.iter().enumerate() {
        let gold = gold_indices(&model.schema, s, idx)?;
        total += sequence_cross_entropy(&model.tag_distributions(emb, &s.tokens), &gold);
    }
    math::ensure_finite(total / batch.len() as f64, "jee loss")
}

fn pair_difference(emb: &EmbeddingTable, (head, tail): &EntityPair) -> Vec<f64> {
    let mut v = emb.mention_vector_or_zero(head);
    math::sub_assign(&mut v, &emb.mention_vector_or_zero(tail));
    v
}

fn set_vector(emb: &EmbeddingTable, pairs: &[EntityPair]) -> Vec<f64> {
    let mut acc = vec![0.0; emb.dim()];
    for p in pairs {
        math::add_assign(&mut acc, &pair_difference(emb, p));
    }
    acc
}

/// Ranking loss that pushes the scorer to prefer `P+` over `P-`.
pub fn benchmark_loss(
    emb: &EmbeddingTable,
    scorer: &PairScorer,
    pairs: &BenchmarkPairs,
    mode: BenchmarkMode,
) -> Result<f64> {
    if pairs.positives.is_empty() || pairs.negatives.is_empty() {
        return Err(Error::Data(
            "benchmark loss needs nonempty positive and negative sets".into(),
        ));
    }
    if emb.dim() != scorer.dim() {
        return Err(Error::Config(
            "pair scorer and embeddings disagree on dimension".into(),
        ));
    }
    let loss = match mode {
        BenchmarkMode::SetLevel => {
            let gap = scorer.score(&set_vector(emb, &pairs.positives))
                - scorer.score(&set_vector(emb, &pairs.negatives));
            math::neg_log_sigmoid(gap)
        }
        BenchmarkMode::PerPair => {
            let pos: Vec<f64> = pairs
                .positives
                .iter()
                .map(|p| scorer.score(&pair_difference(emb, p)))
                .collect();
            let neg: Vec<f64> = pairs
                .negatives
                .iter()
                .map(|p| scorer.score(&pair_difference(emb, p)))
                .collect();
            let sum: f64 = pos
                .iter()
                .flat_map(|a| neg.iter().map(move |b| math::neg_log_sigmoid(a - b)))
                .sum();
            sum / (pos.len() * neg.len()) as f64
        }
    };
    math::ensure_finite(loss, "benchmark loss")
}

/// Loss components at one point of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorerLoss {
    pub combined: f64,
    pub jee: f64,
    pub benchmark: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorerReport {
    /// Losses measured before each epoch's update.
    pub epochs: Vec<ExplorerLoss>,
    /// Losses after the final update.
    pub final_loss: ExplorerLoss,
}

struct CompiledSentence {
    ids: Vec<usize>,
    gold: Vec<usize>,
}

struct CompiledPair {
    head: Vec<usize>,
    tail: Vec<usize>,
}

struct Gradients {
    tagger: Vec<f64>,
    scorer: Vec<f64>,
    rows: BTreeMap<usize, Vec<f64>>,
}

fn add_row(rows: &mut BTreeMap<usize, Vec<f64>>, id: usize, scale: f64, g: &[f64]) {
    let row = rows.entry(id).or_insert_with(|| vec![0.0; g.len()]);
    for (r, x) in row.iter_mut().zip(g) {
        *r += scale * x;
    }
}

struct Batch {
    sentences: Vec<CompiledSentence>,
    positives: Vec<CompiledPair>,
    negatives: Vec<CompiledPair>,
}

impl Batch {
    fn compile(
        schema: &TagSchema,
        corpus: &[TaggedSentence],
        pairs: Option<&BenchmarkPairs>,
        emb: &mut EmbeddingTable,
    ) -> Result<Self> {
        let mut sentences = Vec::with_capacity(corpus.len());
        for (idx, s) in corpus.iter().enumerate() {
            let gold = gold_indices(schema, s, idx)?;
            let ids = s.tokens.iter().map(|t| emb.ensure_token(t)).collect();
            sentences.push(CompiledSentence { ids, gold });
        }
        let mut compile_pairs = |list: &[EntityPair]| -> Vec<CompiledPair> {
            list.iter()
                .map(|(h, t)| CompiledPair {
                    head: emb.compile_mention(h),
                    tail: emb.compile_mention(t),
                })
                .collect()
        };
        let (positives, negatives) = match pairs {
            Some(p) if !p.is_empty() => (compile_pairs(&p.positives), compile_pairs(&p.negatives)),
            _ => (Vec::new(), Vec::new()),
        };
        Ok(Batch {
            sentences,
            positives,
            negatives,
        })
    }

    fn has_pairs(&self) -> bool {
        !self.positives.is_empty() && !self.negatives.is_empty()
    }
}

fn pair_vector(emb: &EmbeddingTable, p: &CompiledPair) -> Vec<f64> {
    let mut v = emb.compose(&p.head);
    math::sub_assign(&mut v, &emb.compose(&p.tail));
    v
}

fn scatter_pair(
    emb: &EmbeddingTable,
    p: &CompiledPair,
    scale: f64,
    d: &[f64],
    rows: &mut BTreeMap<usize, Vec<f64>>,
) {
    let wh = emb.token_weight(p.head.len());
    for &id in &p.head {
        add_row(rows, id, scale * wh, d);
    }
    let wt = emb.token_weight(p.tail.len());
    for &id in &p.tail {
        add_row(rows, id, -scale * wt, d);
    }
}

/// Unweighted JEE loss and gradient over the whole batch.
fn jee_loss_and_grad<T: Tagger>(
    tagger: &T,
    emb: &EmbeddingTable,
    batch: &Batch,
    want_grad: bool,
    g: &mut Gradients,
) -> f64 {
    let n = batch.sentences.len() as f64;
    let dim = emb.dim();
    let mut total = 0.0;
    for s in &batch.sentences {
        let vectors: Vec<Vec<f64>> = s.ids.iter().map(|&id| emb.row(id).to_vec()).collect();
        let feats = tagger::sentence_features(&vectors);
        let mut d_feats = Vec::with_capacity(feats.len());
        for (f, &gold) in feats.iter().zip(&s.gold) {
            let mut p = softmax(&tagger.scores(f));
            total -= p[gold].ln();
            if !want_grad {
                continue;
            }
            p[gold] -= 1.0;
            p.iter_mut().for_each(|x| *x /= n);
            let mut df = vec![0.0; f.len()];
            tagger.backward(f, &p, &mut g.tagger, &mut df);
            d_feats.push(df);
        }
        if want_grad {
            for (&id, dv) in s.ids.iter().zip(tagger::feature_backward(&d_feats, dim)) {
                add_row(&mut g.rows, id, 1.0, &dv);
            }
        }
    }
    total / n
}

/// Unweighted benchmark loss and gradient; `None` when there are no pairs.
fn benchmark_loss_and_grad(
    scorer: &PairScorer,
    emb: &EmbeddingTable,
    batch: &Batch,
    mode: BenchmarkMode,
    want_grad: bool,
    g: &mut Gradients,
) -> Option<f64> {
    if !batch.has_pairs() {
        return None;
    }
    let dim = emb.dim();
    match mode {
        BenchmarkMode::SetLevel => {
            let set = |list: &[CompiledPair]| {
                let mut acc = vec![0.0; dim];
                for p in list {
                    math::add_assign(&mut acc, &pair_vector(emb, p));
                }
                acc
            };
            let (xp, xn) = (set(&batch.positives), set(&batch.negatives));
            let gap = scorer.score(&xp) - scorer.score(&xn);
            if want_grad {
                let d_gap = math::sigmoid(gap) - 1.0;
                for (x, sign, list) in [(&xp, 1.0, &batch.positives), (&xn, -1.0, &batch.negatives)]
                {
                    let mut dx = vec![0.0; dim];
                    scorer.backward(x, sign * d_gap, &mut g.scorer, &mut dx);
                    for p in list {
                        scatter_pair(emb, p, 1.0, &dx, &mut g.rows);
                    }
                }
            }
            Some(math::neg_log_sigmoid(gap))
        }
        BenchmarkMode::PerPair => {
            let xp: Vec<Vec<f64>> = batch
                .positives
                .iter()
                .map(|p| pair_vector(emb, p))
                .collect();
            let xn: Vec<Vec<f64>> = batch
                .negatives
                .iter()
                .map(|p| pair_vector(emb, p))
                .collect();
            let sp: Vec<f64> = xp.iter().map(|x| scorer.score(x)).collect();
            let sn: Vec<f64> = xn.iter().map(|x| scorer.score(x)).collect();
            let count = (sp.len() * sn.len()) as f64;
            let mut total = 0.0;
            let mut d_sp = vec![0.0; sp.len()];
            let mut d_sn = vec![0.0; sn.len()];
            for (i, a) in sp.iter().enumerate() {
                for (j, b) in sn.iter().enumerate() {
                    total += math::neg_log_sigmoid(a - b);
                    let d = (math::sigmoid(a - b) - 1.0) / count;
                    d_sp[i] += d;
                    d_sn[j] -= d;
                }
            }
            if want_grad {
                let sides = [
                    (&xp, &d_sp, &batch.positives),
                    (&xn, &d_sn, &batch.negatives),
                ];
                for (xs, ds, list) in sides {
                    for ((x, &d), p) in xs.iter().zip(ds.iter()).zip(list.iter()) {
                        let mut dx = vec![0.0; dim];
                        scorer.backward(x, d, &mut g.scorer, &mut dx);
                        scatter_pair(emb, p, 1.0, &dx, &mut g.rows);
                    }
                }
            }
            Some(total / count)
        }
    }
}

fn evaluate<T: Tagger>(
    model: &ExplorerModel<T>,
    emb: &EmbeddingTable,
    batch: &Batch,
    want_grad: bool,
) -> (ExplorerLoss, Gradients, Gradients) {
    let alpha = model.config.alpha;
    let mut g_jee = Gradients {
        tagger: vec![0.0; model.tagger.params().len()],
        scorer: Vec::new(),
        rows: BTreeMap::new(),
    };
    let mut g_b = Gradients {
        tagger: Vec::new(),
        scorer: vec![0.0; model.pair_scorer.params().len()],
        rows: BTreeMap::new(),
    };
    let jee = jee_loss_and_grad(
        &model.tagger,
        emb,
        batch,
        want_grad && alpha < 1.0,
        &mut g_jee,
    );
    let benchmark = benchmark_loss_and_grad(
        &model.pair_scorer,
        emb,
        batch,
        model.config.benchmark_mode,
        want_grad && alpha > 0.0,
        &mut g_b,
    );
    let combined = (1.0 - alpha) * jee + alpha * benchmark.unwrap_or(0.0);
    (
        ExplorerLoss {
            combined,
            jee,
            benchmark,
        },
        g_jee,
        g_b,
    )
}

/// Full-batch gradient descent on `(1 - alpha) * jee + alpha * benchmark`.
///
/// Without benchmark pairs the benchmark term is absent and only the tagger
/// learns. Every corpus and pair token is materialised in `emb`; rows are
/// only updated when `update_embeddings` is set.
pub fn train_explorer<T: Tagger>(
    model: &mut ExplorerModel<T>,
    corpus: &[TaggedSentence],
    pairs: Option<&BenchmarkPairs>,
    emb: &mut EmbeddingTable,
) -> Result<ExplorerReport> {
    model.config.validate()?;
    model.check_dim(emb)?;
    if corpus.is_empty() {
        return Err(Error::Data(
            "explorer training needs a nonempty corpus".into(),
        ));
    }
    if model.config.alpha > 0.0 && pairs.is_none_or(BenchmarkPairs::is_empty) {
        warn!("no benchmark pairs; training the tagger alone");
    }
    let batch = Batch::compile(&model.schema, corpus, pairs, emb)?;
    let alpha = model.config.alpha;
    let lr = model.config.learning_rate;
    let mut epochs = Vec::with_capacity(model.config.epochs);
    for epoch in 0..model.config.epochs {
        let (loss, g_jee, g_b) = evaluate(model, emb, &batch, true);
        check_loss(&loss, epoch)?;
        debug!("explorer epoch {epoch}: {loss:?}");
        epochs.push(loss);
        if alpha < 1.0 {
            let step = lr * (1.0 - alpha);
            for (p, g) in model.tagger.params_mut().iter_mut().zip(&g_jee.tagger) {
                *p -= step * g;
            }
        }
        if alpha > 0.0 && loss.benchmark.is_some() {
            let step = lr * alpha;
            for (p, g) in model.pair_scorer.params_mut().iter_mut().zip(&g_b.scorer) {
                *p -= step * g;
            }
        }
        if model.config.update_embeddings {
            for (weight, grads) in [(1.0 - alpha, &g_jee.rows), (alpha, &g_b.rows)] {
                if weight == 0.0 {
                    continue;
                }
                for (&id, g) in grads {
                    for (v, x) in emb.row_mut(id).iter_mut().zip(g) {
                        *v -= lr * weight * x;
                    }
                }
            }
        }
    }
    let (final_loss, _, _) = evaluate(model, emb, &batch, false);
    check_loss(&final_loss, model.config.epochs)?;
    math::ensure_all_finite(model.tagger.params(), "tagger parameters")?;
    math::ensure_all_finite(model.pair_scorer.params(), "pair scorer parameters")?;
    Ok(ExplorerReport { epochs, final_loss })
}

fn check_loss(loss: &ExplorerLoss, epoch: usize) -> Result<()> {
    if !loss.combined.is_finite() {
        return Err(Error::Numeric(format!(
            "explorer loss is {} at epoch {epoch}",
            loss.combined
        )));
    }
    Ok(())
}
