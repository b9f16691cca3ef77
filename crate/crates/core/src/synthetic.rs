//! Seeded synthetic graphs and corpora for tests, demos and benchmarks.

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::{TagSchema, TaggedSentence};
use crate::kg::{KnowledgeGraph, Triple};
use crate::math;

/// Entities on a 2-d lattice embedded in `R^dim`; each relation is a fixed
/// lattice shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub width: usize,
    pub height: usize,
    pub shifts: Vec<(i64, i64)>,
    pub dim: usize,
    /// Standard deviation of the per-coordinate entity noise.
    pub noise: f64,
    pub triples: usize,
    pub held_out: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            width: 25,
            height: 2,
            shifts: vec![(1, 0), (2, 0), (3, 0), (4, 0), (0, 1)],
            dim: 8,
            noise: 0.05,
            triples: 200,
            held_out: 40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedKg {
    pub train: KnowledgeGraph,
    pub test: Vec<Triple>,
    /// Train and test together.
    pub all: KnowledgeGraph,
    /// Planted entity vectors, indexed like the entity names `e00`, `e01`, ...
    pub entity_vectors: Vec<Vec<f64>>,
    pub relation_vectors: Vec<Vec<f64>>,
}

fn orthonormal_pair(dim: usize, rng: &mut math::Rng) -> (Vec<f64>, Vec<f64>) {
    let mut draw = || -> Vec<f64> { (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect() };
    let mut u = draw();
    let nu = math::l2_norm(&u);
    u.iter_mut().for_each(|x| *x /= nu);
    let mut v = draw();
    let proj = math::dot(&u, &v);
    v.iter_mut().zip(&u).for_each(|(x, a)| *x -= proj * a);
    let nv = math::l2_norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    (u, v)
}

/// Samples `triples` facts `(i, r, j)` where `j` is the entity nearest to
/// `e_i + e_r`, then holds the last `held_out` of them out for testing.
pub fn planted_translational(cfg: &PlantedConfig) -> Result<PlantedKg> {
    if cfg.dim < 2 || cfg.width == 0 || cfg.height == 0 || cfg.held_out >= cfg.triples {
        return Err(Error::Config("invalid planted graph configuration".into()));
    }
    let mut rng = math::rng(cfg.seed, 8);
    let (u, v) = orthonormal_pair(cfg.dim, &mut rng);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(e.to_string()))?;
    let n = cfg.width * cfg.height;
    let lattice =
        |x: f64, y: f64| -> Vec<f64> { u.iter().zip(&v).map(|(a, b)| x * a + y * b).collect() };
    let entity_vectors: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (x, y) = ((i % cfg.width) as f64, (i / cfg.width) as f64);
            lattice(x, y)
                .into_iter()
                .map(|c| c + noise.sample(&mut rng))
                .collect()
        })
        .collect();
    let relation_vectors: Vec<Vec<f64>> = cfg
        .shifts
        .iter()
        .map(|&(dx, dy)| lattice(dx as f64, dy as f64))
        .collect();
    let name = |i: usize| format!("e{i:02}");

    let mut facts = Vec::new();
    for i in 0..n {
        for (r, rv) in relation_vectors.iter().enumerate() {
            let (x, y) = ((i % cfg.width) as i64, (i / cfg.width) as i64);
            let (dx, dy) = cfg.shifts[r];
            if !(0..cfg.width as i64).contains(&(x + dx))
                || !(0..cfg.height as i64).contains(&(y + dy))
            {
                continue;
            }
            let mut target = entity_vectors[i].clone();
            math::add_assign(&mut target, rv);
            let j = (0..n)
                .map(|j| {
                    let mut d = entity_vectors[j].clone();
                    math::sub_assign(&mut d, &target);
                    (j, math::l2_norm(&d))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(j, _)| j)
                .expect("lattice is nonempty");
            facts.push(Triple::new(&name(i), &format!("r{r}"), &name(j))?);
        }
    }
    if facts.len() < cfg.triples {
        return Err(Error::Config(format!(
            "lattice supports {} facts, {} requested",
            facts.len(),
            cfg.triples
        )));
    }
    facts.shuffle(&mut rng);
    facts.truncate(cfg.triples);
    let test = facts.split_off(cfg.triples - cfg.held_out);
    let train = KnowledgeGraph::from_triples(facts.iter().cloned());
    let all = train.merge(&test);
    Ok(PlantedKg {
        train,
        test,
        all,
        entity_vectors,
        relation_vectors,
    })
}

/// A relation, the word that expresses it in text, and its event type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub relation: String,
    pub trigger: String,
    pub trigger_type: String,
    /// Entity types of head and tail.
    pub head_type: String,
    pub tail_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub people: usize,
    pub cities: usize,
    pub facts: usize,
    pub seed_facts: usize,
    pub sentences: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            people: 20,
            cities: 10,
            facts: 150,
            seed_facts: 50,
            sentences: 200,
            seed: 0,
        }
    }
}

/// A small world of people and cities, a seed graph holding part of its
/// facts, and sentences that express facts from the whole world.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub schema: TagSchema,
    pub relations: Vec<RelationSpec>,
    pub world: KnowledgeGraph,
    pub seed_kg: KnowledgeGraph,
    pub corpus: Vec<TaggedSentence>,
}

fn default_relations() -> Vec<RelationSpec> {
    let spec = |relation: &str, trigger: &str, ty: &str, head: &str, tail: &str| RelationSpec {
        relation: relation.into(),
        trigger: trigger.into(),
        trigger_type: ty.into(),
        head_type: head.into(),
        tail_type: tail.into(),
    };
    vec![
        spec("visited", "visited", "Movement", "PER", "LOC"),
        spec("met", "met", "Contact", "PER", "PER"),
        spec("hired", "hired", "Business", "PER", "PER"),
    ]
}

fn mention_tokens(mention: &str) -> Vec<String> {
    mention.split_whitespace().map(String::from).collect()
}

fn span_tags(len: usize, label: &str) -> impl Iterator<Item = String> + '_ {
    (0..len).map(move |i| format!("{}-{label}", if i == 0 { "B" } else { "I" }))
}

pub fn synthetic_world(cfg: &WorldConfig) -> Result<SyntheticWorld> {
    if cfg.people < 2 || cfg.cities == 0 || cfg.seed_facts == 0 || cfg.seed_facts > cfg.facts {
        return Err(Error::Config(
            "invalid synthetic world configuration".into(),
        ));
    }
    let relations = default_relations();
    let schema = TagSchema::new(
        ["PER", "LOC"],
        relations.iter().map(|r| r.trigger_type.clone()),
    )?;
    let people: Vec<String> = (0..cfg.people).map(|i| format!("p{i}")).collect();
    let cities: Vec<String> = (0..cfg.cities).map(|i| format!("c{i} city")).collect();
    let pick = |ty: &str| if ty == "LOC" { &cities } else { &people };

    let capacity: usize = relations
        .iter()
        .map(|r| {
            let (h, t) = (pick(&r.head_type).len(), pick(&r.tail_type).len());
            if r.head_type == r.tail_type {
                h * (h - 1)
            } else {
                h * t
            }
        })
        .sum();
    if cfg.facts > capacity {
        return Err(Error::Config(format!(
            "world supports {capacity} facts, {} requested",
            cfg.facts
        )));
    }

    let mut rng = math::rng(cfg.seed, 9);
    let mut facts: IndexSet<(usize, Triple)> = IndexSet::new();
    while facts.len() < cfg.facts {
        let r = rng.gen_range(0..relations.len());
        let spec = &relations[r];
        let head = pick(&spec.head_type).choose(&mut rng).expect("nonempty");
        let tail = pick(&spec.tail_type).choose(&mut rng).expect("nonempty");
        if head == tail {
            continue;
        }
        facts.insert((r, Triple::new(head, &spec.relation, tail)?));
    }
    let facts: Vec<(usize, Triple)> = facts.into_iter().collect();
    let world = KnowledgeGraph::from_triples(facts.iter().map(|(_, t)| t.clone()));
    let seed_kg =
        KnowledgeGraph::from_triples(facts[..cfg.seed_facts].iter().map(|(_, t)| t.clone()));

    const PREFIX: [&str; 3] = ["yesterday", "reportedly", "then"];
    const SUFFIX: [&str; 2] = ["again", "today"];
    let mut corpus = Vec::with_capacity(cfg.sentences);
    for _ in 0..cfg.sentences {
        let (r, fact) = &facts[rng.gen_range(0..facts.len())];
        let spec = &relations[*r];
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        if rng.gen_bool(0.5) {
            tokens.push(PREFIX.choose(&mut rng).expect("nonempty").to_string());
            tags.push("O".to_string());
        }
        let head = mention_tokens(&fact.head);
        tags.extend(span_tags(head.len(), &spec.head_type));
        tokens.extend(head);
        tokens.push(spec.trigger.clone());
        tags.push(format!("B-TRG:{}", spec.trigger_type));
        let tail = mention_tokens(&fact.tail);
        tags.extend(span_tags(tail.len(), &spec.tail_type));
        tokens.extend(tail);
        if rng.gen_bool(0.5) {
            tokens.push(SUFFIX.choose(&mut rng).expect("nonempty").to_string());
            tags.push("O".to_string());
        }
        corpus.push(TaggedSentence::with_gold(tokens, tags));
    }
    Ok(SyntheticWorld {
        schema,
        relations,
        world,
        seed_kg,
        corpus,
    })
}

/// Writes a corpus in the `token<TAB>tag` format.
pub fn format_corpus(corpus: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in corpus {
        match &s.gold {
            Some(tags) => {
                for (t, g) in s.tokens.iter().zip(tags) {
                    out.push_str(&format!("{t}\t{g}\n"));
                }
            }
            None => {
                for t in &s.tokens {
                    out.push_str(&format!("{t}\n"));
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explorer::parse_corpus;

    #[test]
    fn planted_graph_shape() {
        let p = planted_translational(&PlantedConfig::default()).unwrap();
        assert_eq!(p.train.len(), 160);
        assert_eq!(p.test.len(), 40);
        assert_eq!(p.all.len(), 200);
        assert!(p.test.iter().all(|t| !p.train.contains(t)));
        // Nearest neighbours under small noise recover the exact lattice shift.
        for t in p.all.iter() {
            let i: usize = t.head[1..].parse().unwrap();
            let j: usize = t.tail[1..].parse().unwrap();
            let r: usize = t.relation[1..].parse().unwrap();
            let (dx, dy) = PlantedConfig::default().shifts[r];
            assert_eq!(j as i64, i as i64 + dx + 25 * dy);
        }
    }

    #[test]
    fn world_is_deterministic_and_parses_back() {
        let cfg = WorldConfig::default();
        let w = synthetic_world(&cfg).unwrap();
        assert_eq!(w.world.len(), 150);
        assert_eq!(w.seed_kg.len(), 50);
        assert_eq!(w.corpus.len(), 200);
        let again = synthetic_world(&cfg).unwrap();
        assert_eq!(w.corpus, again.corpus);
        let parsed = parse_corpus(&format_corpus(&w.corpus), &w.schema, 128).unwrap();
        assert_eq!(parsed, w.corpus);
    }
}
