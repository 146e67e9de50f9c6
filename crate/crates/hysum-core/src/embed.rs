//! Deterministic toy text embedder.
//!
//! Stands in for pretrained sentence and word encoders behind a fixed,
//! fully specified contract: hashed bag-of-words for sentence vectors and
//! one signed hash bucket per token for word matrices. The hash is FNV-1a
//! 64-bit, so equal `(text, spec)` inputs produce bit-identical embeddings
//! on every platform, which is what makes every downstream score and
//! ranking checkable against independent oracles.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::vecmath;

/// How raw text is turned into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizerRule {
    /// Lowercase, split on any non-alphanumeric character.
    WhitespacePunctLowercase,
}

impl TokenizerRule {
    pub fn label(&self) -> &'static str {
        match self {
            TokenizerRule::WhitespacePunctLowercase => "whitespace-punct-lowercase",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "whitespace-punct-lowercase" => Some(TokenizerRule::WhitespacePunctLowercase),
            _ => None,
        }
    }
}

/// Identifies an embedder. Two embedders with equal specs produce
/// bit-identical outputs for equal inputs; the spec is stored in corpus
/// files so persisted embeddings are self-describing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedderSpec {
    pub name: String,
    pub dimension: usize,
    pub tokenizer: TokenizerRule,
}

impl EmbedderSpec {
    /// Default dimension of the toy embedder. Kept small so gradient
    /// checks and oracle tests stay fast; larger dimensions (e.g. the 768
    /// of a production text encoder) are reachable through configuration.
    pub const DEFAULT_DIMENSION: usize = 64;

    /// The hashed bag-of-words embedder at the given dimension.
    pub fn toy(dimension: usize) -> Self {
        assert!(dimension >= 2, "embedder dimension must be at least 2");
        Self {
            name: String::from("fnv1a-bow"),
            dimension,
            tokenizer: TokenizerRule::WhitespacePunctLowercase,
        }
    }
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self::toy(Self::DEFAULT_DIMENSION)
    }
}

/// L2-normalized whole-text vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    pub vector: Vec<f64>,
}

impl SentenceEmbedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// One L2-normalized row per token. Never empty: empty text embeds as a
/// single basis row.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbedding {
    pub rows: Vec<Vec<f64>>,
}

impl TokenEmbedding {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn token_count(&self) -> usize {
        self.rows.len()
    }
}

/// Lowercased tokens split on whitespace and punctuation. Total: empty
/// input yields an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Hashed bag-of-words sentence embedding: each token lands in bucket
/// `fnv1a64(token) mod d` with sign +1 if bit 63 of the hash is 0, else -1;
/// the token sum is L2-normalized. A zero sum (empty text, or full sign
/// cancellation) becomes the unit basis vector e0 so downstream cosines
/// stay total.
pub fn embed_sentence(text: &str, spec: &EmbedderSpec) -> SentenceEmbedding {
    let d = spec.dimension;
    let mut acc = vec![0.0; d];
    for token in tokenize(text) {
        let (bucket, sign) = token_bucket(&token, d);
        acc[bucket] += sign;
    }
    let norm = vecmath::norm(&acc);
    if norm == 0.0 {
        acc[0] = 1.0;
    } else {
        for v in &mut acc {
            *v /= norm;
        }
    }
    SentenceEmbedding { vector: acc }
}

/// Word-level embedding: one row per token, each row the signed one-bucket
/// vector for that token (unit norm by construction). Empty text yields a
/// single e0 row.
pub fn embed_tokens(text: &str, spec: &EmbedderSpec) -> TokenEmbedding {
    let d = spec.dimension;
    let tokens = tokenize(text);
    if tokens.is_empty() {
        let mut row = vec![0.0; d];
        row[0] = 1.0;
        return TokenEmbedding { rows: vec![row] };
    }
    let rows = tokens
        .iter()
        .map(|token| {
            let (bucket, sign) = token_bucket(token, d);
            let mut row = vec![0.0; d];
            row[bucket] = sign;
            row
        })
        .collect();
    TokenEmbedding { rows }
}

fn token_bucket(token: &str, dim: usize) -> (usize, f64) {
    let hash = fnv1a64(token.as_bytes());
    let bucket = (hash % dim as u64) as usize;
    let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
