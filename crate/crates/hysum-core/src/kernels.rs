//! Coarse-to-fine similarity kernels.
//!
//! Sentence level: cosine of the two whole-text vectors after their
//! projection heads. Word level: the full token-pair cosine matrix after
//! the word heads, reduced to a scalar by global max-pooling. The two
//! granularities are fused into one ranking score, by default as
//! `word + ln(sentence)` with the log argument clamped to `[epsilon, 1]`.

use alloc::vec::Vec;

use crate::embed::{SentenceEmbedding, TokenEmbedding};
use crate::error::{CoreError, Result};
use crate::heads::{AffineMap, ProjectionHeads};
use crate::vecmath;

/// Norm below which a projected vector is treated as directionless: its
/// cosines become 0 instead of NaN.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// A projected vector together with its norm, so cosines against it can be
/// computed with exactly the same arithmetic wherever the projection is
/// hoisted.
#[derive(Debug, Clone)]
pub(crate) struct Projected {
    pub(crate) vector: Vec<f64>,
    pub(crate) norm: f64,
}

pub(crate) fn project(map: &AffineMap, x: &[f64]) -> Projected {
    let vector = map.apply(x);
    let norm = vecmath::norm(&vector);
    Projected { vector, norm }
}

pub(crate) fn projected_cosine(a: &Projected, b: &Projected) -> f64 {
    if a.norm < DEGENERATE_NORM || b.norm < DEGENERATE_NORM {
        return 0.0;
    }
    (vecmath::dot(&a.vector, &b.vector) / (a.norm * b.norm)).clamp(-1.0, 1.0)
}

fn check_dim(actual: usize, expected: usize) -> Result<()> {
    if actual == expected {
        Ok(())
    } else {
        Err(CoreError::DimensionMismatch { expected, actual })
    }
}

/// Cosine of the two sentence vectors after the sentence-level heads,
/// in [-1, 1]. Degenerate projections score 0.
pub fn sentence_similarity(
    query: &SentenceEmbedding,
    summary: &SentenceEmbedding,
    heads: &ProjectionHeads,
) -> Result<f64> {
    check_dim(query.dim(), heads.dim)?;
    check_dim(summary.dim(), heads.dim)?;
    let pq = project(&heads.sentence_query, &query.vector);
    let ps = project(&heads.sentence_summary, &summary.vector);
    Ok(projected_cosine(&pq, &ps))
}

/// Token-pair cosine matrix: rows indexed by query tokens, columns by
/// summary tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub entries: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn query_len(&self) -> usize {
        self.entries.len()
    }

    pub fn summary_len(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.query_len() == 0 || self.summary_len() == 0
    }
}

pub(crate) fn project_rows(map: &AffineMap, tokens: &TokenEmbedding) -> Vec<Projected> {
    tokens.rows.iter().map(|row| project(map, row)).collect()
}

pub(crate) fn matrix_from_projected(
    query_rows: &[Projected],
    summary_rows: &[Projected],
) -> SimilarityMatrix {
    let entries = query_rows
        .iter()
        .map(|q| summary_rows.iter().map(|s| projected_cosine(q, s)).collect())
        .collect();
    SimilarityMatrix { entries }
}

/// Entry `(a, b)` is the cosine of query token `a` against summary token
/// `b` after the word-level heads.
pub fn word_similarity_matrix(
    query: &TokenEmbedding,
    summary: &TokenEmbedding,
    heads: &ProjectionHeads,
) -> Result<SimilarityMatrix> {
    check_dim(query.dim(), heads.dim)?;
    check_dim(summary.dim(), heads.dim)?;
    let q = project_rows(&heads.word_query, query);
    let s = project_rows(&heads.word_summary, summary);
    Ok(matrix_from_projected(&q, &s))
}

/// Global maximum of the similarity matrix (max over summary tokens of the
/// max over query tokens).
pub fn maxpool_relevance(matrix: &SimilarityMatrix) -> Result<f64> {
    if matrix.is_empty() {
        return Err(CoreError::EmptySimilarityMatrix);
    }
    let mut best = f64::NEG_INFINITY;
    for row in &matrix.entries {
        for &v in row {
            best = best.max(v);
        }
    }
    Ok(best)
}

/// How the word-level and sentence-level scores are combined into the
/// ranking score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// `word + ln(clamp(sentence))` — the default.
    LogOnSentence,
    /// `ln(clamp(word)) + sentence`.
    LogOnWord,
    /// `word + sentence`.
    PlainSum,
    /// Sentence score alone.
    SentenceOnly,
    /// Word score alone.
    WordOnly,
    /// `ln(clamp(word)) + ln(clamp(sentence))`.
    LogBoth,
}

impl FusionMode {
    pub const ALL: [FusionMode; 6] = [
        FusionMode::LogOnSentence,
        FusionMode::LogOnWord,
        FusionMode::PlainSum,
        FusionMode::SentenceOnly,
        FusionMode::WordOnly,
        FusionMode::LogBoth,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            FusionMode::LogOnSentence => "log-on-sentence",
            FusionMode::LogOnWord => "log-on-word",
            FusionMode::PlainSum => "plain-sum",
            FusionMode::SentenceOnly => "sentence-only",
            FusionMode::WordOnly => "word-only",
            FusionMode::LogBoth => "log-both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "log-on-sentence" => Some(FusionMode::LogOnSentence),
            "log-on-word" => Some(FusionMode::LogOnWord),
            "plain-sum" => Some(FusionMode::PlainSum),
            "sentence-only" => Some(FusionMode::SentenceOnly),
            "word-only" => Some(FusionMode::WordOnly),
            "log-both" => Some(FusionMode::LogBoth),
            _ => None,
        }
    }
}

impl core::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

/// Fusion settings: the mode plus the clamp floor for log arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub mode: FusionMode,
    /// Log arguments are clamped to `[epsilon, 1]` before the natural log,
    /// so non-positive similarities take a strong finite penalty instead
    /// of producing NaN, and ranking on (0, 1] is unchanged.
    pub epsilon: f64,
}

impl FusionConfig {
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    pub fn with_mode(mode: FusionMode) -> Self {
        Self {
            mode,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self::with_mode(FusionMode::LogOnSentence)
    }
}

/// Combine a word-level and a sentence-level score under the given fusion
/// settings. Total over all real inputs.
///
/// ```
/// use hysum_core::kernels::{fuse_scores, FusionConfig};
///
/// let cfg = FusionConfig::default(); // word + ln(clamp(sentence))
/// assert_eq!(fuse_scores(0.5, 1.0, &cfg), 0.5); // ln(1) = 0
///
/// // A non-positive sentence score clamps to epsilon: a strong finite
/// // penalty rather than NaN.
/// assert!(fuse_scores(0.5, -0.3, &cfg) < -13.0);
/// ```
pub fn fuse_scores(word_score: f64, sentence_score: f64, cfg: &FusionConfig) -> f64 {
    let log_of = |x: f64| vecmath::ln(x.clamp(cfg.epsilon, 1.0));
    match cfg.mode {
        FusionMode::LogOnSentence => word_score + log_of(sentence_score),
        FusionMode::LogOnWord => log_of(word_score) + sentence_score,
        FusionMode::PlainSum => word_score + sentence_score,
        FusionMode::SentenceOnly => sentence_score,
        FusionMode::WordOnly => word_score,
        FusionMode::LogBoth => log_of(word_score) + log_of(sentence_score),
    }
}
