//! Acceptance gate: one PASS/FAIL line per criterion.

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use kgfuse::explorer::{
    benchmark_loss, generate_candidates, train_explorer, BenchmarkMode, ExplorerConfig,
    ExplorerModel, PairScorer, TagSchema, TaggedSentence,
};
use kgfuse::fusion::{align_graphs, run_collaboration, AlignConfig, FusionConfig};
use kgfuse::kge::{
    bpr_kge_loss, conv_likelihood, grad_check, train_kge_from, train_transe, transe_score,
};
use kgfuse::math::rng;
use kgfuse::metrics::{build_pools, evaluate_pools, hit_at_n, mrr, rank_triple, roc_auc};
use kgfuse::sampler::{corrupt_candidates, BenchmarkPairs};
use kgfuse::synthetic::{planted_translational, synthetic_world, PlantedConfig, WorldConfig};
use kgfuse::{EmbeddingTable, KgeConfig, KgeModel, KnowledgeGraph, Norm, Triple};

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn t(h: &str, r: &str, tl: &str) -> Triple {
    Triple::new(h, r, tl).unwrap()
}

fn vocab(kg: &KnowledgeGraph) -> Vec<String> {
    let mut v: Vec<String> = kg
        .entities()
        .iter()
        .chain(kg.relations())
        .flat_map(|m| kgfuse::embeddings::tokenize(m))
        .collect();
    v.sort();
    v.dedup();
    v
}

fn gradient_fidelity() -> Check {
    let planted = planted_translational(&PlantedConfig::default()).map_err(|e| e.to_string())?;
    let words = vocab(&planted.all);
    let emb = EmbeddingTable::init_random(words.iter().map(String::as_str), 8, 3)
        .map_err(|e| e.to_string())?;
    let cfg = KgeConfig {
        num_kernels: 4,
        kernel_width: 3,
        seed: 5,
        ..KgeConfig::default()
    };
    let model = KgeModel::new(&cfg, emb).map_err(|e| e.to_string())?;
    let positives: Vec<Triple> = planted.train.iter().take(8).collect();
    let negatives = corrupt_candidates(&planted.train, 8, 11).map_err(|e| e.to_string())?;
    let report = grad_check(&model, &positives, &negatives, 1e-5).map_err(|e| e.to_string())?;
    ensure(
        report.max_relative_error < 1e-4,
        format!("max relative error {:.3e}", report.max_relative_error),
    )?;
    Ok(format!(
        "max relative error {:.3e} over {} values",
        report.max_relative_error, report.checked
    ))
}

fn analytic_losses() -> Check {
    let emb = EmbeddingTable::init_random(["a", "b", "r"], 6, 1).map_err(|e| e.to_string())?;
    let model = KgeModel::new(&KgeConfig::default(), emb.clone()).map_err(|e| e.to_string())?;
    let x = t("a", "r", "b");
    let bpr = bpr_kge_loss(&model, std::slice::from_ref(&x), std::slice::from_ref(&x))
        .map_err(|e| e.to_string())?;
    ensure((bpr - LN_2).abs() < 1e-9, format!("BPR at equality {bpr}"))?;
    let zero = KgeModel::zeros(emb.clone(), 4, 3, 0).map_err(|e| e.to_string())?;
    let p = conv_likelihood(&zero, &x);
    ensure(p == 0.5, format!("zero model likelihood {p}"))?;
    let pairs = BenchmarkPairs {
        positives: vec![("a".into(), "b".into())],
        negatives: vec![("b".into(), "r".into()), ("r".into(), "a".into())],
    };
    let b = benchmark_loss(
        &emb,
        &PairScorer::zeros(6, 5),
        &pairs,
        BenchmarkMode::SetLevel,
    )
    .map_err(|e| e.to_string())?;
    ensure((b - LN_2).abs() < 1e-9, format!("benchmark loss {b}"))?;
    Ok(format!(
        "bpr {bpr:.12}, zero-model likelihood {p}, benchmark {b:.12}"
    ))
}

fn synthetic_link_prediction() -> Check {
    let planted = planted_translational(&PlantedConfig::default()).map_err(|e| e.to_string())?;
    let words = vocab(&planted.all);
    let emb = EmbeddingTable::init_random(words.iter().map(String::as_str), 16, 7)
        .map_err(|e| e.to_string())?;
    let transe_cfg = KgeConfig {
        epochs: 200,
        learning_rate: 0.05,
        margin: 1.0,
        norm: Norm::L2,
        batch_size: 1,
        seed: 7,
        ..KgeConfig::default()
    };
    let (emb, _) = train_transe(&planted.train, &transe_cfg, emb).map_err(|e| e.to_string())?;
    let pools = build_pools(&planted.all, &planted.test, 49, 13).map_err(|e| e.to_string())?;
    ensure(
        pools.iter().all(|p| p.negatives.len() == 49),
        "pools are short",
    )?;
    let transe = |x: &Triple| -transe_score(&emb, x, Norm::L2);
    let lp = evaluate_pools(&transe, &pools, &[10]).map_err(|e| e.to_string())?;
    let hits10 = lp.hits[&10];
    ensure(hits10 >= 0.8, format!("TransE Hit@10 {hits10:.3}"))?;

    let conv_cfg = KgeConfig {
        epochs: 60,
        learning_rate: 0.01,
        optimizer: kgfuse::kge::Optimizer::adam(),
        num_kernels: 8,
        kernel_width: 3,
        batch_size: 16,
        seed: 7,
        update_embeddings: false,
        ..KgeConfig::default()
    };
    let negatives = corrupt_candidates(&planted.train, 640, 17).map_err(|e| e.to_string())?;
    let model = KgeModel::new(&conv_cfg, emb.clone()).map_err(|e| e.to_string())?;
    let (model, _) =
        train_kge_from(model, &planted.train, &negatives, &conv_cfg).map_err(|e| e.to_string())?;
    let pos: Vec<f64> = planted
        .test
        .iter()
        .map(|x| conv_likelihood(&model, x))
        .collect();
    let neg: Vec<f64> = pools
        .iter()
        .flat_map(|p| p.negatives.iter().map(|x| conv_likelihood(&model, x)))
        .collect();
    let auc = roc_auc(&pos, &neg).map_err(|e| e.to_string())?;
    ensure(
        auc >= 0.9,
        format!("TransE Hit@10 {hits10:.3}, conv ROC-AUC {auc:.3}"),
    )?;
    Ok(format!(
        "TransE Hit@10 {hits10:.3} (MRR {:.3}), conv ROC-AUC {auc:.3}",
        lp.mrr
    ))
}

fn tras_recovery() -> Check {
    let mut r = rng(21, 99);
    let entities: Vec<String> = (0..40).map(|i| format!("ent{i}")).collect();
    let mut kg1 = KnowledgeGraph::new();
    for k in 0..6 {
        let mut added = 0;
        while added < 30 {
            let h = entities.choose(&mut r).unwrap();
            let tl = entities.choose(&mut r).unwrap();
            if h != tl && kg1.insert(&t(h, &format!("rel{k}"), tl)) {
                added += 1;
            }
        }
    }
    let renamed = |rel: &str| format!("{rel}_renamed");
    let mut kg2 = KnowledgeGraph::new();
    for rel in kg1.relations().clone() {
        let pairs: Vec<(usize, usize)> = kg1.triples_with_relation(&rel).collect();
        let keep = (pairs.len() * 4).div_ceil(5);
        let mut chosen = pairs.clone();
        chosen.shuffle(&mut r);
        for &(h, tl) in &chosen[..keep] {
            kg2.insert(&t(&kg1.entities()[h], &renamed(&rel), &kg1.entities()[tl]));
        }
    }
    let mut words = vocab(&kg1);
    words.extend(vocab(&kg2));
    let mut emb = EmbeddingTable::init_random(words.iter().map(String::as_str), 32, 4)
        .map_err(|e| e.to_string())?;
    for rel in kg1.relations() {
        let v = emb.token_vector(rel);
        emb.insert(&renamed(rel), &v).map_err(|e| e.to_string())?;
    }
    let mut summary = Vec::new();
    for gamma in [0.0, 0.5] {
        let cfg = AlignConfig {
            mention_weight: gamma,
            threshold: -1.0,
        };
        let aligned = align_graphs(&kg2, &kg1, &emb, &cfg).map_err(|e| e.to_string())?;
        let correct = aligned
            .iter()
            .filter(|(from, to, _)| *from == renamed(to))
            .count();
        ensure(
            correct == kg1.relations().len() && aligned.len() == correct,
            format!(
                "gamma {gamma}: {correct}/{} recovered",
                kg1.relations().len()
            ),
        )?;
        summary.push(format!(
            "gamma {gamma}: {correct}/{}",
            kg1.relations().len()
        ));
    }
    Ok(summary.join(", "))
}

fn ranking_oracle() -> Check {
    let mut r = rng(5, 99);
    for instance in 0..100 {
        let positive = t("p", "r", "q");
        let pool: Vec<Triple> = (0..50).map(|i| t(&format!("n{i}"), "r", "q")).collect();
        // Coarse scores so ties are common.
        let scores: HashMap<Triple, f64> = pool
            .iter()
            .chain([&positive])
            .map(|x| (x.clone(), r.gen_range(0..20) as f64 / 20.0))
            .collect();
        let scorer = |x: &Triple| scores[x];
        let got = rank_triple(&scorer, &positive, &pool).map_err(|e| e.to_string())?;
        // Full sort, the positive placed after every equal negative.
        let mut order: Vec<(f64, bool)> = pool.iter().map(|x| (scores[x], false)).collect();
        order.push((scores[&positive], true));
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let oracle = order.iter().position(|&(_, is_pos)| is_pos).unwrap() + 1;
        ensure(
            got == oracle,
            format!("instance {instance}: rank {got}, oracle {oracle}"),
        )?;
    }
    Ok("100/100 instances agree".into())
}

fn collaborative_loop() -> Check {
    let world = synthetic_world(&WorldConfig::default()).map_err(|e| e.to_string())?;
    let cfg = FusionConfig {
        dim: 16,
        rounds: 3,
        top_k: 10,
        benchmark_k: 5,
        neg_budget: 50,
        seed: 3,
        ..FusionConfig::default()
    };
    let kge_cfg = KgeConfig {
        epochs: 10,
        learning_rate: 0.01,
        optimizer: kgfuse::kge::Optimizer::adam(),
        seed: 3,
        ..KgeConfig::default()
    };
    let explorer_cfg = ExplorerConfig {
        alpha: 0.2,
        epochs: 40,
        learning_rate: 0.1,
        seed: 3,
        ..ExplorerConfig::default()
    };
    let prior = &world.seed_kg;
    let run = || {
        run_collaboration(
            prior,
            &world.corpus,
            &world.schema,
            &cfg,
            &kge_cfg,
            &explorer_cfg,
            None,
        )
    };
    let first = run().map_err(|e| e.to_string())?;
    let rounds = &first.report.rounds;
    ensure(rounds.len() == 3, "expected three round reports")?;
    ensure(
        rounds[0].accepted.is_empty() && rounds[0].kg_size == prior.len(),
        "round 1 enriched the graph",
    )?;
    let mut size = prior.len();
    let mut seen: std::collections::HashSet<Triple> = prior.iter().collect();
    for round in rounds {
        ensure(
            round.kg_size >= size && round.kg_size - size <= cfg.top_k,
            format!(
                "round {}: size {} after {}",
                round.round, round.kg_size, size
            ),
        )?;
        ensure(
            round.kg_size - size == round.accepted.len(),
            "size growth differs from accepted count",
        )?;
        for x in &round.accepted {
            ensure(seen.insert(x.clone()), format!("duplicate triple {x}"))?;
        }
        size = round.kg_size;
    }
    ensure(first.kg.len() == seen.len(), "final graph has duplicates")?;
    let a = first.report.to_json().map_err(|e| e.to_string())?;
    let b = run()
        .map_err(|e| e.to_string())?
        .report
        .to_json()
        .map_err(|e| e.to_string())?;
    ensure(a == b, "reruns differ")?;
    let sizes: Vec<usize> = rounds.iter().map(|r| r.kg_size).collect();
    Ok(format!(
        "|T| {} -> {:?}, reports byte-identical",
        prior.len(),
        sizes
    ))
}

fn explorer_decoupling() -> Check {
    let world = synthetic_world(&WorldConfig {
        sentences: 30,
        ..WorldConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let words: Vec<String> = world
        .corpus
        .iter()
        .flat_map(|s| s.tokens.iter().map(|x| x.to_lowercase()))
        .collect();
    let emb = EmbeddingTable::init_random(words.iter().map(String::as_str), 12, 2)
        .map_err(|e| e.to_string())?;
    let pairs = BenchmarkPairs {
        positives: vec![("p1".into(), "c1 city".into()), ("p2".into(), "p3".into())],
        negatives: vec![("c2 city".into(), "p4".into())],
    };
    let cfg = |alpha: f64| ExplorerConfig {
        alpha,
        epochs: 15,
        learning_rate: 0.05,
        seed: 9,
        ..ExplorerConfig::default()
    };
    let train = |alpha: f64, pairs: Option<&BenchmarkPairs>| {
        let mut model = ExplorerModel::new(world.schema.clone(), 12, cfg(alpha)).unwrap();
        let mut e = emb.clone();
        let report = train_explorer(&mut model, &world.corpus, pairs, &mut e).unwrap();
        (model, report)
    };
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    use kgfuse::explorer::Tagger;

    let (with_pairs, rep_a) = train(0.0, Some(&pairs));
    let (pure, rep_b) = train(0.0, None);
    let fresh = ExplorerModel::new(world.schema.clone(), 12, cfg(0.0)).unwrap();
    ensure(
        bits(with_pairs.tagger.params()) == bits(pure.tagger.params()),
        "alpha 0 diverges from pure JEE",
    )?;
    let jee = |r: &kgfuse::explorer::ExplorerReport| {
        r.epochs.iter().map(|l| l.jee.to_bits()).collect::<Vec<_>>()
    };
    ensure(jee(&rep_a) == jee(&rep_b), "alpha 0 loss curve differs")?;
    ensure(
        bits(with_pairs.pair_scorer.params()) == bits(fresh.pair_scorer.params()),
        "alpha 0 moved the pair scorer",
    )?;

    let (alpha_one, _) = train(1.0, Some(&pairs));
    ensure(
        bits(alpha_one.tagger.params()) == bits(fresh.tagger.params()),
        "alpha 1 moved the tagger",
    )?;
    ensure(
        bits(alpha_one.pair_scorer.params()) != bits(fresh.pair_scorer.params()),
        "alpha 1 did not train the pair scorer",
    )?;

    let sentence: TaggedSentence = world.corpus[0].clone();
    let overfit_cfg = ExplorerConfig {
        alpha: 0.0,
        epochs: 400,
        learning_rate: 0.5,
        ..ExplorerConfig::default()
    };
    let mut model = ExplorerModel::new(world.schema.clone(), 12, overfit_cfg).unwrap();
    let mut e = emb.clone();
    let report = train_explorer(&mut model, std::slice::from_ref(&sentence), None, &mut e)
        .map_err(|e| e.to_string())?;
    let tags = model.tag(&e, &sentence.tokens);
    ensure(
        Some(&tags) == sentence.gold.as_ref(),
        format!("overfit tags {tags:?} vs gold {:?}", sentence.gold),
    )?;
    Ok(format!(
        "alpha 0 bit-identical, alpha 1 tagger frozen, overfit loss {:.2e}",
        report.final_loss.jee
    ))
}

fn random_sentence(
    r: &mut kgfuse::math::Rng,
    id: usize,
    schema: &TagSchema,
) -> (TaggedSentence, Vec<String>, Vec<(String, String)>) {
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut entities = Vec::new();
    let mut triggers = Vec::new();
    let spans = r.gen_range(0..9);
    for s in 0..spans {
        if r.gen_bool(0.4) {
            tokens.push(format!("w{id}x{s}"));
            tags.push("O".to_string());
        }
        let len = r.gen_range(1..3);
        let words: Vec<String> = (0..len).map(|k| format!("m{id}s{s}k{k}")).collect();
        let mention = words.join(" ");
        let (label, trig) = if r.gen_bool(0.3) {
            let ty = schema.trigger_types().choose(r).unwrap().clone();
            (format!("TRG:{ty}"), Some(ty))
        } else {
            (schema.entity_types().choose(r).unwrap().clone(), None)
        };
        for (k, w) in words.into_iter().enumerate() {
            tokens.push(w);
            tags.push(format!("{}-{label}", if k == 0 { "B" } else { "I" }));
        }
        match trig {
            Some(ty) => triggers.push((mention, ty)),
            None => entities.push(mention),
        }
    }
    let mut s = TaggedSentence::untagged(tokens);
    s.predicted = Some(tags);
    (s, entities, triggers)
}

fn candidate_combinatorics() -> Check {
    let schema = TagSchema::new(["PER", "LOC", "ORG"], ["Life", "Movement"]).unwrap();
    let mut r = rng(8, 99);
    let mut total = 0;
    for id in 0..50 {
        let (sentence, entities, triggers) = random_sentence(&mut r, id, &schema);
        let mut oracle = Vec::new();
        for (m, ty) in &triggers {
            for h in &entities {
                for tl in &entities {
                    if h != tl {
                        oracle.push((h.clone(), m.clone(), ty.clone(), tl.clone()));
                    }
                }
            }
        }
        let n = entities.len();
        ensure(
            oracle.len() == triggers.len() * n * n.saturating_sub(1),
            "oracle miscounted",
        )?;
        let got: Vec<_> = generate_candidates(std::slice::from_ref(&sentence), 10_000)
            .into_iter()
            .map(|c| (c.head, c.trigger_mention, c.trigger_type, c.tail))
            .collect();
        let (mut a, mut b) = (got.clone(), oracle.clone());
        a.sort();
        b.sort();
        ensure(
            a == b,
            format!(
                "sentence {id}: {} candidates vs {}",
                got.len(),
                oracle.len()
            ),
        )?;
        if !oracle.is_empty() {
            let capped = generate_candidates(std::slice::from_ref(&sentence), oracle.len() - 1);
            ensure(
                capped.len() == oracle.len() - 1,
                format!("sentence {id}: cap ignored"),
            )?;
        }
        total += oracle.len();
    }
    Ok(format!(
        "50 sentences, {total} candidates match the enumeration"
    ))
}

fn metric_trivials() -> Check {
    ensure(mrr(&[1], true).unwrap() == 1.0, "mrr([1])")?;
    ensure(mrr(&[2, 4], true).unwrap() == 0.375, "mrr([2,4])")?;
    let mut r = rng(4, 99);
    for _ in 0..200 {
        let n = r.gen_range(1..50);
        let ranks: Vec<usize> = (0..n).map(|_| r.gen_range(1..60)).collect();
        let h: Vec<f64> = [10, 20, 30]
            .iter()
            .map(|&k| hit_at_n(&ranks, k).unwrap())
            .collect();
        ensure(
            h[0] <= h[1] && h[1] <= h[2],
            format!("hits not monotone for {ranks:?}"),
        )?;
    }
    Ok("mrr([1]) = 1, mrr([2,4]) = 0.375, Hit@{10,20,30} monotone on 200 lists".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "gradient fidelity",
            Duration::from_secs(10),
            gradient_fidelity,
        ),
        (
            "analytic loss values",
            Duration::from_secs(5),
            analytic_losses,
        ),
        (
            "synthetic link prediction",
            Duration::from_secs(60),
            synthetic_link_prediction,
        ),
        ("TRAS recovery", Duration::from_secs(5), tras_recovery),
        (
            "ranking oracle equivalence",
            Duration::from_secs(5),
            ranking_oracle,
        ),
        (
            "collaborative loop properties",
            Duration::from_secs(120),
            collaborative_loop,
        ),
        (
            "explorer decoupling",
            Duration::from_secs(30),
            explorer_decoupling,
        ),
        (
            "candidate combinatorics",
            Duration::from_secs(5),
            candidate_combinatorics,
        ),
        ("metric trivials", Duration::from_secs(5), metric_trivials),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *budget => {
                Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!(
                "criterion {}: PASS  {name}: {detail} ({elapsed:.1?})",
                i + 1
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "criterion {}: FAIL  {name}: {detail} ({elapsed:.1?})",
                    i + 1
                );
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
