//! Token vectors and their composition into entity and relation mention vectors.
//!
//! Mentions are split on ASCII whitespace and each token is lowercased for
//! lookup; a mention vector is the sum of its token vectors (or their mean
//! when [`EmbeddingTable::set_normalize`] is on). Tokens missing from the
//! table get a deterministic vector derived from the token text and the
//! table's OOV seed, so repeated lookups always agree.

use std::fs;
use std::path::Path;

use indexmap::IndexSet;
use log::warn;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, fnv1a};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: IndexSet<String>,
    /// Row-major, `tokens.len() * dim`.
    data: Vec<f64>,
    oov_seed: u64,
    #[serde(default)]
    normalize: bool,
}

/// Lowercased lookup tokens of a mention.
pub fn tokenize(mention: &str) -> Vec<String> {
    mention
        .split_ascii_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

/// Half-width of the uniform initialisation interval, `6 / sqrt(dim)`.
pub fn init_bound(dim: usize) -> f64 {
    6.0 / (dim as f64).sqrt()
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov_seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config(
                "embedding dimension must be at least 1".into(),
            ));
        }
        Ok(EmbeddingTable {
            dim,
            tokens: IndexSet::new(),
            data: Vec::new(),
            oov_seed,
            normalize: false,
        })
    }

    /// Uniform `[-6/sqrt(dim), 6/sqrt(dim)]` vectors drawn in vocabulary order
    /// from a single seeded stream.
    pub fn init_random<'a, I>(vocab: I, dim: usize, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut table = Self::new(dim, seed)?;
        let bound = init_bound(dim);
        let mut rng = math::rng(seed, 0);
        for token in vocab {
            let key = token.to_lowercase();
            if table.tokens.contains(&key) {
                continue;
            }
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect();
            table.insert(&key, &v)?;
        }
        Ok(table)
    }

    /// Loads `token v1 ... v_dim` rows with an optional `N D` header line.
    pub fn load_pretrained(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse_pretrained(&text, dim).map_err(|e| e.with_path(path))
    }

    pub fn parse_pretrained(text: &str, dim: usize) -> Result<Self> {
        let mut table = Self::new(dim, 0)?;
        let mut header_rows = None;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if idx == 0 && fields.len() == 2 {
                if let (Ok(n), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                    if d != dim {
                        return Err(Error::parse(
                            line_no,
                            format!("header declares dimension {d}, expected {dim}"),
                        ));
                    }
                    header_rows = Some(n);
                    continue;
                }
            }
            if fields.len() != dim + 1 {
                return Err(Error::parse(
                    line_no,
                    format!(
                        "expected token plus {dim} values, found {} fields",
                        fields.len()
                    ),
                ));
            }
            let values = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(line_no, format!("invalid value {f:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if table.token_id(fields[0]).is_some() {
                warn!(
                    "line {line_no}: duplicate embedding row for {:?}, keeping the last",
                    fields[0]
                );
            }
            table.insert(fields[0], &values)?;
        }
        if let Some(n) = header_rows {
            if n != table.len() {
                warn!("embedding header declares {n} rows, read {}", table.len());
            }
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (i, tok) in self.tokens.iter().enumerate() {
            write!(out, "{tok}")?;
            for v in self.row(i) {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    pub fn set_oov_seed(&mut self, seed: u64) {
        self.oov_seed = seed;
    }

    /// Average token vectors instead of summing them.
    pub fn set_normalize(&mut self, on: bool) {
        self.normalize = on;
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.tokens.get_index_of(token.to_lowercase().as_str())
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.data[id * self.dim..(id + 1) * self.dim]
    }

    /// Stores `vector` for `token`, replacing any existing row.
    pub fn insert(&mut self, token: &str, vector: &[f64]) -> Result<usize> {
        if vector.len() != self.dim {
            return Err(Error::Data(format!(
                "vector for {token:?} has length {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        let (id, fresh) = self.tokens.insert_full(token.to_lowercase());
        if fresh {
            self.data.extend_from_slice(vector);
        } else {
            self.row_mut(id).copy_from_slice(vector);
        }
        Ok(id)
    }

    /// The vector an unseen token resolves to.
    pub fn oov_vector(&self, token: &str) -> Vec<f64> {
        let key = token.to_lowercase();
        let seed = fnv1a(key.as_bytes()) ^ self.oov_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = math::rng(seed, 1);
        let bound = init_bound(self.dim);
        (0..self.dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect()
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        match self.token_id(token) {
            Some(id) => self.row(id).to_vec(),
            None => self.oov_vector(token),
        }
    }

    /// Returns the row id for `token`, materialising its OOV vector if needed
    /// so that training can update it.
    pub fn ensure_token(&mut self, token: &str) -> usize {
        if let Some(id) = self.token_id(token) {
            return id;
        }
        let v = self.oov_vector(token);
        self.insert(token, &v)
            .expect("oov vector has table dimension")
    }

    /// Row ids for every token of `mention`, materialising OOV tokens.
    pub fn compile_mention(&mut self, mention: &str) -> Vec<usize> {
        tokenize(mention)
            .iter()
            .map(|t| self.ensure_token(t))
            .collect()
    }

    /// Per-token weight applied when composing `n` tokens.
    pub fn token_weight(&self, n: usize) -> f64 {
        if self.normalize && n > 0 {
            1.0 / n as f64
        } else {
            1.0
        }
    }

    /// Composes stored rows into a mention vector.
    pub fn compose(&self, ids: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &id in ids {
            math::add_assign(&mut out, self.row(id));
        }
        let w = self.token_weight(ids.len());
        if w != 1.0 {
            out.iter_mut().for_each(|x| *x *= w);
        }
        out
    }

    /// Sum of the token vectors of a mention (mean when normalisation is on).
    pub fn mention_vector(&self, mention: &str) -> Result<Vec<f64>> {
        let tokens = tokenize(mention);
        if tokens.is_empty() {
            return Err(Error::Data("mention has no tokens".into()));
        }
        Ok(self.compose_tokens(&tokens))
    }

    /// Like [`mention_vector`](Self::mention_vector) but yields the zero vector
    /// for a token-less mention.
    pub(crate) fn mention_vector_or_zero(&self, mention: &str) -> Vec<f64> {
        self.compose_tokens(&tokenize(mention))
    }

    fn compose_tokens(&self, tokens: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for t in tokens {
            match self.token_id(t) {
                Some(id) => math::add_assign(&mut out, self.row(id)),
                None => math::add_assign(&mut out, &self.oov_vector(t)),
            }
        }
        let w = self.token_weight(tokens.len());
        if w != 1.0 {
            out.iter_mut().for_each(|x| *x *= w);
        }
        out
    }

    /// All stored values, row-major.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> EmbeddingTable {
        EmbeddingTable::parse_pretrained("2 2\na 1 0\nb 0 1\n", 2).unwrap()
    }

    #[test]
    fn parses_header_and_rows() {
        let t = toy();
        assert_eq!(t.len(), 2);
        assert_eq!(t.token_vector("a"), vec![1.0, 0.0]);
        assert_eq!(t.token_vector("b"), vec![0.0, 1.0]);
    }

    #[test]
    fn arity_and_header_errors() {
        assert!(matches!(
            EmbeddingTable::parse_pretrained("a 1 0 0\n", 2),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            EmbeddingTable::parse_pretrained("1 3\na 1 0\n", 2),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(EmbeddingTable::parse_pretrained("a 1 x\n", 2).is_err());
    }

    #[test]
    fn duplicate_rows_keep_last() {
        let t = EmbeddingTable::parse_pretrained("a 1 0\na 0 5\n", 2).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.token_vector("a"), vec![0.0, 5.0]);
    }

    #[test]
    fn headerless_two_field_rows_are_data_for_dim_one() {
        let t = EmbeddingTable::parse_pretrained("x 3\ny 4\n", 1).unwrap();
        assert_eq!(t.token_vector("y"), vec![4.0]);
    }

    #[test]
    fn init_random_is_deterministic_and_bounded() {
        let vocab = ["a", "b", "c", "d"];
        let t1 = EmbeddingTable::init_random(vocab, 4, 7).unwrap();
        let t2 = EmbeddingTable::init_random(vocab, 4, 7).unwrap();
        assert_eq!(t1, t2);
        assert!(t1.values().iter().all(|v| (-3.0..=3.0).contains(v)));
        let t3 = EmbeddingTable::init_random(vocab, 4, 8).unwrap();
        assert!(t1.values().iter().zip(t3.values()).any(|(a, b)| a != b));
        assert!(EmbeddingTable::init_random(vocab, 0, 1).is_err());
    }

    #[test]
    fn mention_vector_sums_tokens() {
        let t = toy();
        assert_eq!(t.mention_vector("a").unwrap(), vec![1.0, 0.0]);
        assert_eq!(t.mention_vector("a b").unwrap(), vec![1.0, 1.0]);
        assert_eq!(t.mention_vector("A  B").unwrap(), vec![1.0, 1.0]);
        assert!(t.mention_vector("   ").is_err());
    }

    #[test]
    fn normalize_switch_averages() {
        let mut t = toy();
        t.set_normalize(true);
        assert_eq!(t.mention_vector("a b").unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn unseen_tokens_are_repeat_stable() {
        let t = toy();
        let v1 = t.mention_vector("a zebra").unwrap();
        let v2 = t.mention_vector("a zebra").unwrap();
        assert_eq!(v1, v2);
        assert!(v1.iter().all(|x| x.is_finite()));
        let mut m = t.clone();
        let id = m.ensure_token("zebra");
        assert_eq!(m.row(id), t.oov_vector("zebra").as_slice());
    }

    proptest! {
        #[test]
        fn mention_vector_is_linear_in_token_multiset(tok in "[a-z]{1,6}", reps in 1usize..5) {
            let t = EmbeddingTable::init_random(["a", "b"], 3, 11).unwrap();
            let mention = vec![tok.as_str(); reps].join(" ");
            let v = t.mention_vector(&mention).unwrap();
            let single = t.token_vector(&tok);
            for (x, s) in v.iter().zip(&single) {
                prop_assert!((x - reps as f64 * s).abs() < 1e-12);
            }
            prop_assert_eq!(v.len(), 3);
        }
    }
}
