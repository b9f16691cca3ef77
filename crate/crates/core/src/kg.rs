//! Knowledge-graph data model: interned entities and relations plus a
//! duplicate-free triple set.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `(head, relation, tail)` fact expressed with mention strings.
///
/// Ordering is lexicographic over head, relation, tail, which is the
/// tie-breaking order used wherever triples are ranked.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

fn check_mention(field: &str, value: &str) -> Result<()> {
    if value.is_empty() {
        return Err(Error::Data(format!("empty {field} mention")));
    }
    if value.contains('\t') || value.contains('\n') {
        return Err(Error::Data(format!(
            "{field} mention {value:?} contains a tab or newline"
        )));
    }
    Ok(())
}

impl Triple {
    /// Builds a triple from trimmed mentions, rejecting empty fields and
    /// fields containing tabs or newlines.
    pub fn new(head: &str, relation: &str, tail: &str) -> Result<Self> {
        let (head, relation, tail) = (head.trim(), relation.trim(), tail.trim());
        check_mention("head", head)?;
        check_mention("relation", relation)?;
        check_mention("tail", tail)?;
        Ok(Triple {
            head: head.to_string(),
            relation: relation.to_string(),
            tail: tail.to_string(),
        })
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// Interned `(head_id, relation_id, tail_id)`.
pub type TripleIds = (usize, usize, usize);

/// `G = <E, R, T>` with dense ids assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    entities: IndexSet<String>,
    relations: IndexSet<String>,
    triples: IndexSet<TripleIds>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triples<I>(triples: I) -> Self
    where
        I: IntoIterator<Item = Triple>,
    {
        let mut kg = Self::new();
        for t in triples {
            kg.insert(&t);
        }
        kg
    }

    /// Reads a tab-separated triple file. `#` comments and blank lines are
    /// skipped; repeated triples collapse.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| e.with_path(path))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kg = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    line_no,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let triple = Triple::new(fields[0], fields[1], fields[2])
                .map_err(|e| Error::parse(line_no, e.to_string()))?;
            kg.insert(&triple);
        }
        Ok(kg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for t in self.iter() {
            writeln!(out, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Inserts a triple, interning unseen mentions. Returns `false` when the
    /// triple was already present.
    pub fn insert(&mut self, t: &Triple) -> bool {
        let h = self.entities.insert_full(t.head.clone()).0;
        let r = self.relations.insert_full(t.relation.clone()).0;
        let tl = self.entities.insert_full(t.tail.clone()).0;
        self.triples.insert((h, r, tl))
    }

    /// Interns an entity that need not take part in any triple.
    pub fn add_entity(&mut self, mention: &str) -> Result<usize> {
        let mention = mention.trim();
        check_mention("entity", mention)?;
        Ok(self.entities.insert_full(mention.to_string()).0)
    }

    /// `T ∪ delta` as a new graph; `self` is left untouched.
    pub fn merge<'a, I>(&self, delta: I) -> Self
    where
        I: IntoIterator<Item = &'a Triple>,
    {
        let mut out = self.clone();
        for t in delta {
            out.insert(t);
        }
        out
    }

    pub fn contains(&self, t: &Triple) -> bool {
        match (
            self.entities.get_index_of(&t.head),
            self.relations.get_index_of(&t.relation),
            self.entities.get_index_of(&t.tail),
        ) {
            (Some(h), Some(r), Some(tl)) => self.triples.contains(&(h, r, tl)),
            _ => false,
        }
    }

    pub fn contains_ids(&self, ids: TripleIds) -> bool {
        self.triples.contains(&ids)
    }

    /// Ordered `(head, tail)` pairs occurring in any triple, in first-appearance order.
    pub fn entity_pairs(&self) -> IndexSet<(String, String)> {
        self.triples
            .iter()
            .map(|&(h, _, t)| (self.entities[h].clone(), self.entities[t].clone()))
            .collect()
    }

    pub fn entities(&self) -> &IndexSet<String> {
        &self.entities
    }

    pub fn relations(&self) -> &IndexSet<String> {
        &self.relations
    }

    pub fn entity_id(&self, mention: &str) -> Option<usize> {
        self.entities.get_index_of(mention)
    }

    pub fn relation_id(&self, mention: &str) -> Option<usize> {
        self.relations.get_index_of(mention)
    }

    pub fn triple_ids(&self) -> &IndexSet<TripleIds> {
        &self.triples
    }

    pub fn resolve(&self, (h, r, t): TripleIds) -> Triple {
        Triple {
            head: self.entities[h].clone(),
            relation: self.relations[r].clone(),
            tail: self.entities[t].clone(),
        }
    }

    /// Triples in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = Triple> + '_ {
        self.triples.iter().map(|&ids| self.resolve(ids))
    }

    pub fn triples(&self) -> Vec<Triple> {
        self.iter().collect()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Triples whose relation is `relation`, in insertion order.
    pub fn triples_with_relation<'a>(
        &'a self,
        relation: &str,
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        let rid = self.relation_id(relation);
        self.triples
            .iter()
            .filter(move |&&(_, r, _)| Some(r) == rid)
            .map(|&(h, _, t)| (h, t))
    }

    /// Set equality on mention-level triples, ignoring interning order.
    pub fn set_eq(&self, other: &KnowledgeGraph) -> bool {
        self.len() == other.len() && self.iter().all(|t| other.contains(&t))
    }
}
