use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use kgfuse::explorer::{
    load_corpus, train_explorer, CandidateTriple, ExplorerConfig, ExplorerModel, TagSchema,
    TaggedSentence,
};
use kgfuse::fusion::{
    align_relations, initial_embeddings, run_collaboration, translate, AlignConfig, CandidateView,
    FusionConfig,
};
use kgfuse::kge::{grad_check, train_kge, train_transe, Optimizer};
use kgfuse::metrics::{build_pools, evaluate_pools, load_pools, prf1, save_pools, MatchMode};
use kgfuse::sampler::corrupt_candidates;
use kgfuse::synthetic::{planted_translational, PlantedConfig};
use kgfuse::{EmbeddingTable, KgeConfig, KgeModel, KnowledgeGraph, Norm, Triple};

/// Knowledge graph fusion from open text.
#[derive(Parser, Debug)]
#[command(name = "kgfuse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the collaborative explorer/supervisor loop and write the enriched graph.
    Fuse(FuseArgs),
    /// Train a convolutional triple scorer on a knowledge graph.
    TrainKge(TrainKgeArgs),
    /// Pool-based link prediction: MRR and Hit@{10,20,30}.
    EvalKgf(EvalKgfArgs),
    /// Train the sequence tagger on a gold-tagged corpus.
    TrainJee(TrainJeeArgs),
    /// Tagging precision, recall and F1 of a trained tagger.
    EvalJee(EvalJeeArgs),
    /// Align candidate relations to the relations of a knowledge graph.
    Align(AlignArgs),
    /// Finite-difference check of the scorer gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct ScorerArgs {
    /// Hinge margin for TransE pre-training.
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    /// Number of convolution kernels.
    #[arg(long, default_value_t = 4)]
    kernels: usize,
    #[arg(long, default_value_t = 3)]
    kernel_width: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Use plain SGD instead of Adam.
    #[arg(long)]
    sgd: bool,
}

impl ScorerArgs {
    fn config(&self, seed: u64) -> KgeConfig {
        KgeConfig {
            margin: self.margin,
            learning_rate: self.lr,
            epochs: self.epochs,
            num_kernels: self.kernels,
            kernel_width: self.kernel_width,
            batch_size: self.batch_size,
            optimizer: if self.sgd {
                Optimizer::Sgd
            } else {
                Optimizer::adam()
            },
            seed,
            ..KgeConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct FuseArgs {
    /// Prior knowledge graph, one `head<TAB>relation<TAB>tail` per line.
    #[arg(long)]
    kg: PathBuf,
    /// Tagged corpus, `token<TAB>tag` rows with blank lines between sentences.
    #[arg(long)]
    corpus: PathBuf,
    /// Tag schema with `entities:` and `triggers:` lines.
    #[arg(long)]
    schema: PathBuf,
    /// Pretrained token vectors.
    #[arg(long)]
    emb: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    rounds: usize,
    /// Triples accepted per round.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Benchmark entity pairs per round.
    #[arg(long, default_value_t = 5)]
    k_benchmarks: usize,
    /// Hard negatives kept per round.
    #[arg(long, default_value_t = 50)]
    neg_budget: usize,
    /// Weight of the benchmark loss in explorer training.
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    /// Weight of mention similarity in relation alignment.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Minimum alignment score.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    epsilon: f64,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// Explorer learning rate.
    #[arg(long, default_value_t = 0.05)]
    explorer_lr: f64,
    /// Explorer epochs per round.
    #[arg(long, default_value_t = 30)]
    explorer_epochs: usize,
    /// Fraction of the corpus held back for extraction.
    #[arg(long, default_value_t = 0.2)]
    extract_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainKgeArgs {
    #[arg(long)]
    kg: PathBuf,
    #[arg(long)]
    emb: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// TransE epochs used to initialise the token vectors.
    #[arg(long, default_value_t = 0)]
    pretrain_epochs: usize,
    /// Corrupted negatives drawn for training; defaults to one per triple.
    #[arg(long)]
    negatives: Option<usize>,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalKgfArgs {
    /// Checkpoint written by `train-kge`.
    #[arg(long)]
    model: PathBuf,
    /// Positive triples to rank.
    #[arg(long)]
    kg: PathBuf,
    /// Pool file; created from `--known` and `--kg` when missing.
    #[arg(long)]
    pools: PathBuf,
    /// Further known triples kept out of the pools (repeatable).
    #[arg(long)]
    known: Vec<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pool_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainJeeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    emb: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Also train the token vectors.
    #[arg(long)]
    update_embeddings: bool,
    #[arg(long, default_value_t = 128)]
    max_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the tagger and its token vectors.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalJeeArgs {
    /// Directory written by `train-jee`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// `span` or `token`.
    #[arg(long, default_value = "span")]
    mode: MatchMode,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[arg(long)]
    kg: PathBuf,
    /// Candidate triples, `head<TAB>trigger<TAB>type<TAB>tail` per line.
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    emb: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    kernels: usize,
    #[arg(long, default_value_t = 3)]
    kernel_width: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Exit with a numeric failure above this relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    KnowledgeGraph::load(path).with_context(|| format!("reading {}", path.display()))
}

fn load_schema(path: &Path) -> Result<TagSchema> {
    TagSchema::load(path).with_context(|| format!("reading {}", path.display()))
}

fn load_sentences(path: &Path, schema: &TagSchema, max_len: usize) -> Result<Vec<TaggedSentence>> {
    load_corpus(path, schema, max_len).with_context(|| format!("reading {}", path.display()))
}

fn load_embeddings(path: &Path, dim: usize) -> Result<EmbeddingTable> {
    EmbeddingTable::load_pretrained(path, dim)
        .with_context(|| format!("reading {}", path.display()))
}

fn kg_embeddings(
    kg: &KnowledgeGraph,
    emb: Option<&Path>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    match emb {
        Some(path) => load_embeddings(path, dim),
        None => Ok(initial_embeddings(kg, &[], dim, seed)?),
    }
}

fn fuse(args: FuseArgs) -> Result<()> {
    let prior = load_kg(&args.kg)?;
    let schema = load_schema(&args.schema)?;
    let explorer_cfg = ExplorerConfig {
        alpha: args.alpha,
        learning_rate: args.explorer_lr,
        epochs: args.explorer_epochs,
        seed: args.seed,
        ..ExplorerConfig::default()
    };
    let corpus = load_sentences(&args.corpus, &schema, explorer_cfg.max_len)?;
    let emb = args
        .emb
        .as_deref()
        .map(|p| load_embeddings(p, args.dim))
        .transpose()?;
    let cfg = FusionConfig {
        dim: args.dim,
        mention_weight: args.gamma,
        threshold: args.epsilon,
        top_k: args.top_k,
        rounds: args.rounds,
        benchmark_k: args.k_benchmarks,
        neg_budget: args.neg_budget,
        extract_fraction: args.extract_fraction,
        seed: args.seed,
        ..FusionConfig::default()
    };
    let kge_cfg = args.scorer.config(args.seed);
    let mut outcome =
        run_collaboration(&prior, &corpus, &schema, &cfg, &kge_cfg, &explorer_cfg, emb)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let kg_path = args.out.join("kg.tsv");
    outcome.kg.save(&kg_path)?;
    outcome.kge.save(args.out.join("kge.json"))?;
    outcome.explorer.save(args.out.join("explorer.json"))?;
    outcome.kge.emb.save(args.out.join("embeddings.txt"))?;
    outcome.report.final_kg_path = Some(kg_path.display().to_string());
    let report = outcome.report.to_json()?;
    fs::write(args.out.join("report.json"), &report)?;
    info!(
        "{} triples after {} rounds",
        outcome.kg.len(),
        outcome.report.rounds.len()
    );
    println!("{report}");
    Ok(())
}

fn train_kge_cmd(args: TrainKgeArgs) -> Result<()> {
    let kg = load_kg(&args.kg)?;
    let cfg = args.scorer.config(args.seed);
    let mut emb = kg_embeddings(&kg, args.emb.as_deref(), args.dim, args.seed)?;
    if args.pretrain_epochs > 0 {
        let transe_cfg = KgeConfig {
            epochs: args.pretrain_epochs,
            learning_rate: 0.05,
            batch_size: 1,
            norm: Norm::L2,
            ..cfg
        };
        emb = train_transe(&kg, &transe_cfg, emb)?.0;
    }
    let negatives = corrupt_candidates(&kg, args.negatives.unwrap_or(kg.len()), args.seed)?;
    let (model, report) = train_kge(&kg, &negatives, &cfg, emb)?;
    model
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    print_json(&report)
}

fn eval_kgf(args: EvalKgfArgs) -> Result<()> {
    let model =
        KgeModel::load(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let pools = if args.pools.exists() {
        load_pools(&args.pools).with_context(|| format!("reading {}", args.pools.display()))?
    } else {
        let positives = load_kg(&args.kg)?;
        let mut known = positives.clone();
        for path in &args.known {
            known = known.merge(&load_kg(path)?.iter().collect::<Vec<_>>());
        }
        let positives: Vec<Triple> = positives.iter().collect();
        let pools = build_pools(&known, &positives, args.pool_size, args.seed)?;
        save_pools(&pools, &args.pools)?;
        info!("wrote {} pools to {}", pools.len(), args.pools.display());
        pools
    };
    print_json(&evaluate_pools(&model, &pools, &[10, 20, 30])?)
}

const TAGGER_FILE: &str = "explorer.json";
const EMBEDDINGS_FILE: &str = "embeddings.txt";

fn train_jee(args: TrainJeeArgs) -> Result<()> {
    let schema = load_schema(&args.schema)?;
    let corpus = load_sentences(&args.corpus, &schema, args.max_len)?;
    let mut emb = match &args.emb {
        Some(path) => load_embeddings(path, args.dim)?,
        None => initial_embeddings(&KnowledgeGraph::new(), &corpus, args.dim, args.seed)?,
    };
    let cfg = ExplorerConfig {
        alpha: 0.0,
        learning_rate: args.lr,
        epochs: args.epochs,
        seed: args.seed,
        max_len: args.max_len,
        update_embeddings: args.update_embeddings,
        ..ExplorerConfig::default()
    };
    let mut model = ExplorerModel::new(schema, emb.dim(), cfg)?;
    let report = train_explorer(&mut model, &corpus, None, &mut emb)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    model.save(args.out.join(TAGGER_FILE))?;
    emb.save(args.out.join(EMBEDDINGS_FILE))?;
    print_json(&report)
}

fn eval_jee(args: EvalJeeArgs) -> Result<()> {
    let model: ExplorerModel = ExplorerModel::load(args.model.join(TAGGER_FILE))
        .with_context(|| format!("reading {}", args.model.join(TAGGER_FILE).display()))?;
    let emb = load_embeddings(&args.model.join(EMBEDDINGS_FILE), model.pair_scorer.dim())?;
    let corpus = load_sentences(&args.corpus, &model.schema, model.config.max_len)?;
    if corpus.iter().any(|s| s.gold.is_none()) {
        bail!(kgfuse::Error::Data(
            "evaluation corpus must be fully tagged".into()
        ));
    }
    let corpus = model.tag_corpus(&emb, &corpus);
    let pred: Vec<Vec<String>> = corpus
        .iter()
        .map(|s| s.predicted.clone().unwrap_or_default())
        .collect();
    let gold: Vec<Vec<String>> = corpus
        .iter()
        .map(|s| s.gold.clone().unwrap_or_default())
        .collect();
    print_json(&prf1(&pred, &gold, args.mode)?)
}

fn parse_candidates(path: &Path) -> Result<Vec<CandidateTriple>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 4 || fields.iter().any(|f| f.is_empty()) {
            return Err(kgfuse::Error::Parse {
                path: Some(path.to_path_buf()),
                line: idx + 1,
                message: format!(
                    "expected head, trigger, type and tail, found {} fields",
                    fields.len()
                ),
            }
            .into());
        }
        out.push(CandidateTriple {
            head: fields[0].to_string(),
            trigger_mention: fields[1].to_string(),
            trigger_type: fields[2].to_string(),
            tail: fields[3].to_string(),
            sentence: idx,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct AlignmentOutput {
    alignments: Vec<kgfuse::fusion::AlignmentRecord>,
    translated: Vec<Triple>,
}

fn align(args: AlignArgs) -> Result<()> {
    let kg = load_kg(&args.kg)?;
    let candidates = parse_candidates(&args.candidates)?;
    let mut emb = kg_embeddings(&kg, args.emb.as_deref(), args.dim, args.seed)?;
    for c in &candidates {
        for mention in [&c.head, &c.trigger_mention, &c.tail] {
            for token in kgfuse::embeddings::tokenize(mention) {
                emb.ensure_token(&token);
            }
        }
    }
    let cfg = AlignConfig {
        mention_weight: args.gamma,
        threshold: args.epsilon,
    };
    let map = align_relations(
        &CandidateView::from_candidates(&candidates),
        &kg,
        &emb,
        &cfg,
    )?;
    print_json(&AlignmentOutput {
        alignments: map.records(),
        translated: translate(&candidates, &map),
    })
}

fn gradcheck(args: GradcheckArgs) -> Result<()> {
    let planted = planted_translational(&PlantedConfig {
        seed: args.seed,
        ..PlantedConfig::default()
    })?;
    let emb = initial_embeddings(&planted.train, &[], args.dim, args.seed)?;
    let cfg = KgeConfig {
        num_kernels: args.kernels,
        kernel_width: args.kernel_width,
        seed: args.seed,
        ..KgeConfig::default()
    };
    let model = KgeModel::new(&cfg, emb)?;
    let positives: Vec<Triple> = planted.train.iter().take(args.batch).collect();
    let negatives = corrupt_candidates(&planted.train, positives.len(), args.seed)?;
    let report = grad_check(&model, &positives, &negatives, args.eps)?;
    print_json(&report)?;
    if report.max_relative_error.is_nan() || report.max_relative_error > args.tolerance {
        bail!(kgfuse::Error::Numeric(format!(
            "max relative error {:.3e} exceeds {:.1e}",
            report.max_relative_error, args.tolerance
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fuse(a) => fuse(a),
        Command::TrainKge(a) => train_kge_cmd(a),
        Command::EvalKgf(a) => eval_kgf(a),
        Command::TrainJee(a) => train_jee(a),
        Command::EvalJee(a) => eval_jee(a),
        Command::Align(a) => align(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use kgfuse::Error;
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Config(_)) => 1,
        Some(Error::Numeric(_)) => 3,
        Some(_) => 2,
        None if err
            .chain()
            .any(|e| e.is::<std::io::Error>() || e.is::<serde_json::Error>()) =>
        {
            2
        }
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
