use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::schema::{tag_string, SpanKind, Tag, TagSchema};
use crate::error::{Error, Result};

/// Default maximum sentence length.
pub const DEFAULT_MAX_LEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub gold: Option<Vec<String>>,
    pub predicted: Option<Vec<String>>,
}

impl TaggedSentence {
    pub fn untagged(tokens: Vec<String>) -> Self {
        TaggedSentence {
            tokens,
            gold: None,
            predicted: None,
        }
    }

    pub fn with_gold(tokens: Vec<String>, gold: Vec<String>) -> Self {
        TaggedSentence {
            tokens,
            gold: Some(gold),
            predicted: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Predicted tags when present, gold tags otherwise.
    pub fn best_tags(&self) -> Option<&[String]> {
        self.predicted.as_deref().or(self.gold.as_deref())
    }
}

/// A labelled token span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub kind: SpanKind,
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// Decodes BIO tags into spans. An `I-` tag that does not continue a span of
/// its own type opens a new span, so model output never fails to decode.
/// Unparseable tags are treated as `O`.
pub fn decode_spans(tags: &[String]) -> Vec<Span> {
    let mut spans: Vec<Span> = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        match Tag::parse(tag) {
            Some(Tag::Begin(kind, name)) => {
                spans.extend(open.take());
                open = Some(Span {
                    kind,
                    label: name.to_string(),
                    start: i,
                    end: i + 1,
                });
            }
            Some(Tag::Inside(kind, name)) => match open.as_mut() {
                Some(s) if s.kind == kind && s.label == name => s.end = i + 1,
                _ => {
                    spans.extend(open.take());
                    open = Some(Span {
                        kind,
                        label: name.to_string(),
                        start: i,
                        end: i + 1,
                    });
                }
            },
            Some(Tag::Outside) | None => spans.extend(open.take()),
        }
    }
    spans.extend(open);
    spans
}

/// Encodes non-overlapping spans as BIO tags over `len` tokens.
pub fn encode_spans(len: usize, spans: &[Span]) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for s in spans {
        for (i, tag) in tags.iter_mut().enumerate().take(s.end).skip(s.start) {
            *tag = tag_string(i == s.start, s.kind, &s.label);
        }
    }
    tags
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    schema: &TagSchema,
    max_len: usize,
) -> Result<Vec<TaggedSentence>> {
    let path = path.as_ref();
    parse_corpus(&fs::read_to_string(path)?, schema, max_len).map_err(|e| e.with_path(path))
}

/// Parses `token<TAB>tag` rows with blank lines between sentences. Rows with
/// a bare token describe untagged sentences; a sentence may not mix both.
pub fn parse_corpus(text: &str, schema: &TagSchema, max_len: usize) -> Result<Vec<TaggedSentence>> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut tags: Vec<String> = Vec::new();
    let mut start_line = 1;
    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<String>, start_line: usize| {
        if tokens.is_empty() {
            return;
        }
        let mut toks = std::mem::take(tokens);
        let mut tg = std::mem::take(tags);
        if toks.len() > max_len {
            warn!(
                "sentence starting at line {start_line} has {} tokens, truncating to {max_len}",
                toks.len()
            );
            toks.truncate(max_len);
            tg.truncate(max_len);
        }
        let gold = if tg.is_empty() { None } else { Some(tg) };
        out.push(TaggedSentence {
            tokens: toks,
            gold,
            predicted: None,
        });
    };

    let mut prev: Option<(SpanKind, String)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, start_line);
            prev = None;
            continue;
        }
        if tokens.is_empty() {
            start_line = line_no;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let token = fields[0].trim();
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::parse(
                line_no,
                format!("invalid token {:?}", fields[0]),
            ));
        }
        match fields.len() {
            1 if tags.is_empty() => {}
            2 if tags.len() == tokens.len() => {
                let tag = fields[1].trim();
                if schema.tag_index(tag).is_none() {
                    return Err(Error::parse(line_no, format!("unknown tag {tag:?}")));
                }
                prev = match Tag::parse(tag) {
                    Some(Tag::Begin(kind, name)) => Some((kind, name.to_string())),
                    Some(Tag::Inside(kind, name)) => {
                        if prev.as_ref() != Some(&(kind, name.to_string())) {
                            return Err(Error::parse(
                                line_no,
                                format!("{tag} does not continue a span of the same type"),
                            ));
                        }
                        prev
                    }
                    _ => None,
                };
                tags.push(tag.to_string());
            }
            1 | 2 => {
                return Err(Error::parse(
                    line_no,
                    "sentence mixes tagged and untagged rows",
                ))
            }
            n => {
                return Err(Error::parse(
                    line_no,
                    format!("expected 1 or 2 fields, found {n}"),
                ))
            }
        }
        tokens.push(token.to_string());
    }
    flush(&mut tokens, &mut tags, start_line);
    Ok(out)
}
