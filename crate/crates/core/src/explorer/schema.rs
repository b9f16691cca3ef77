use std::fs;
use std::path::Path;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prefix that namespaces trigger types inside tag strings.
pub const TRIGGER_PREFIX: &str = "TRG:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpanKind {
    Entity,
    Trigger,
}

/// A parsed BIO tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tag<'a> {
    Outside,
    Begin(SpanKind, &'a str),
    Inside(SpanKind, &'a str),
}

impl<'a> Tag<'a> {
    /// Syntactic parse of `O`, `B-<type>`, `I-<type>`, `B-TRG:<type>`, `I-TRG:<type>`.
    pub fn parse(tag: &'a str) -> Option<Self> {
        if tag == "O" {
            return Some(Tag::Outside);
        }
        let (prefix, rest) = tag.split_once('-')?;
        let (kind, name) = match rest.strip_prefix(TRIGGER_PREFIX) {
            Some(name) => (SpanKind::Trigger, name),
            None => (SpanKind::Entity, rest),
        };
        if name.is_empty() {
            return None;
        }
        match prefix {
            "B" => Some(Tag::Begin(kind, name)),
            "I" => Some(Tag::Inside(kind, name)),
            _ => None,
        }
    }
}

pub fn tag_string(begin: bool, kind: SpanKind, name: &str) -> String {
    let p = if begin { "B" } else { "I" };
    match kind {
        SpanKind::Entity => format!("{p}-{name}"),
        SpanKind::Trigger => format!("{p}-{TRIGGER_PREFIX}{name}"),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SchemaSpec {
    entities: Vec<String>,
    triggers: Vec<String>,
}

/// Entity and trigger types plus the derived tag vocabulary
/// `{O} ∪ {B-,I-} x (entity types ∪ TRG:trigger types)`.
///
/// An entity type and a trigger type may share a name; the `TRG:` namespace
/// keeps their tags distinct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaSpec", into = "SchemaSpec")]
pub struct TagSchema {
    entity_types: Vec<String>,
    trigger_types: Vec<String>,
    tags: IndexSet<String>,
}

impl TryFrom<SchemaSpec> for TagSchema {
    type Error = Error;

    fn try_from(s: SchemaSpec) -> Result<Self> {
        TagSchema::new(s.entities, s.triggers)
    }
}

impl From<TagSchema> for SchemaSpec {
    fn from(s: TagSchema) -> Self {
        SchemaSpec {
            entities: s.entity_types,
            triggers: s.trigger_types,
        }
    }
}

fn check_types(kind: &str, types: &[String]) -> Result<()> {
    let mut seen = IndexSet::new();
    for t in types {
        if t.is_empty() || t.chars().any(char::is_whitespace) || t.contains(',') {
            return Err(Error::Config(format!("invalid {kind} type {t:?}")));
        }
        if !seen.insert(t) {
            return Err(Error::Config(format!("duplicate {kind} type {t:?}")));
        }
    }
    Ok(())
}

impl TagSchema {
    pub fn new<E, T>(entity_types: E, trigger_types: T) -> Result<Self>
    where
        E: IntoIterator,
        E::Item: Into<String>,
        T: IntoIterator,
        T::Item: Into<String>,
    {
        let entity_types: Vec<String> = entity_types.into_iter().map(Into::into).collect();
        let trigger_types: Vec<String> = trigger_types.into_iter().map(Into::into).collect();
        check_types("entity", &entity_types)?;
        check_types("trigger", &trigger_types)?;
        let mut tags = IndexSet::new();
        tags.insert("O".to_string());
        for (kind, types) in [
            (SpanKind::Entity, &entity_types),
            (SpanKind::Trigger, &trigger_types),
        ] {
            for name in types {
                tags.insert(tag_string(true, kind, name));
                tags.insert(tag_string(false, kind, name));
            }
        }
        Ok(TagSchema {
            entity_types,
            trigger_types,
            tags,
        })
    }

    /// Reads `entities: A, B` and `triggers: X, Y` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?).map_err(|e| e.with_path(path))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entities = None;
        let mut triggers = None;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, list) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(idx + 1, "expected `entities:` or `triggers:`"))?;
            let values: Vec<String> = list
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(String::from)
                .collect();
            let slot = match key.trim() {
                "entities" => &mut entities,
                "triggers" => &mut triggers,
                other => return Err(Error::parse(idx + 1, format!("unknown key {other:?}"))),
            };
            if slot.replace(values).is_some() {
                return Err(Error::parse(
                    idx + 1,
                    format!("repeated key {:?}", key.trim()),
                ));
            }
        }
        let entities =
            entities.ok_or_else(|| Error::Config("schema lacks an `entities:` line".into()))?;
        let triggers =
            triggers.ok_or_else(|| Error::Config("schema lacks a `triggers:` line".into()))?;
        Self::new(entities, triggers)
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn trigger_types(&self) -> &[String] {
        &self.trigger_types
    }

    /// Tag vocabulary in index order; `O` is always index 0.
    pub fn tags(&self) -> &IndexSet<String> {
        &self.tags
    }

    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn tag_index(&self, tag: &str) -> Option<usize> {
        self.tags.get_index_of(tag)
    }

    pub fn tag(&self, index: usize) -> &str {
        &self.tags[index]
    }
}
