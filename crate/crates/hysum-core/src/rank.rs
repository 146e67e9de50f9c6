//! Per-channel scoring, top-K ranking, and candidate union.
//!
//! A query is scored against every corpus item independently for each
//! enabled summary channel, the per-channel lists are cut to the top K by
//! fused score, and the cut lists are unioned into the final candidate
//! set. Ties anywhere break by ascending item id so output is fully
//! deterministic. Scoring is exact and exhaustive; item pools here are
//! small, so no index is involved.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::embed::{embed_sentence, embed_tokens, EmbedderSpec, SentenceEmbedding, TokenEmbedding};
use crate::error::{CoreError, Result};
use crate::heads::ProjectionHeads;
use crate::kernels::{
    fuse_scores, matrix_from_projected, maxpool_relevance, project, project_rows, projected_cosine,
    FusionConfig,
};

/// The three summary channels attached to every corpus item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelKind {
    ImageQuestion,
    SceneQuestion,
    Description,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [
        ChannelKind::ImageQuestion,
        ChannelKind::SceneQuestion,
        ChannelKind::Description,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ChannelKind::ImageQuestion => "image_question",
            ChannelKind::SceneQuestion => "scene_question",
            ChannelKind::Description => "description",
        }
    }

    /// Accepts the canonical label, dash spelling, or a short alias.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "image_question" | "image-question" | "qm" => Some(ChannelKind::ImageQuestion),
            "scene_question" | "scene-question" | "qd" => Some(ChannelKind::SceneQuestion),
            "description" | "desc" | "d" => Some(ChannelKind::Description),
            _ => None,
        }
    }

    /// Instruction handed to the summary generator that produces this
    /// channel's text. Stored verbatim in corpus headers so generated and
    /// synthetic corpora share one schema.
    pub fn generation_prompt(&self) -> &'static str {
        match self {
            ChannelKind::ImageQuestion => "Generate a question based on the image:",
            ChannelKind::SceneQuestion => "Generate the scene information based on the image:",
            ChannelKind::Description => "Generate a detailed description based on the image:",
        }
    }
}

impl core::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

/// Set of enabled channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelMask {
    bits: u8,
}

impl ChannelMask {
    pub fn empty() -> Self {
        Self { bits: 0 }
    }

    pub fn all() -> Self {
        let mut mask = Self::empty();
        for kind in ChannelKind::ALL {
            mask.insert(kind);
        }
        mask
    }

    pub fn single(kind: ChannelKind) -> Self {
        let mut mask = Self::empty();
        mask.insert(kind);
        mask
    }

    pub fn of(kinds: &[ChannelKind]) -> Self {
        let mut mask = Self::empty();
        for &kind in kinds {
            mask.insert(kind);
        }
        mask
    }

    pub fn insert(&mut self, kind: ChannelKind) {
        self.bits |= 1 << kind as u8;
    }

    pub fn contains(&self, kind: ChannelKind) -> bool {
        self.bits & (1 << kind as u8) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn len(&self) -> usize {
        self.enabled().count()
    }

    /// Enabled kinds in fixed channel order.
    pub fn enabled(&self) -> impl Iterator<Item = ChannelKind> + '_ {
        ChannelKind::ALL.into_iter().filter(|&k| self.contains(k))
    }

    /// `"all"`, or kinds joined with `+` (e.g. `"image_question+description"`).
    /// Kinds may also be comma-separated.
    pub fn parse(s: &str) -> Option<Self> {
        if s == "all" {
            return Some(Self::all());
        }
        let mut mask = Self::empty();
        for part in s.split(['+', ',']) {
            let part = part.trim();
            if part.is_empty() {
                return None;
            }
            mask.insert(ChannelKind::parse(part)?);
        }
        if mask.is_empty() {
            None
        } else {
            Some(mask)
        }
    }
}

impl core::fmt::Display for ChannelMask {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if *self == Self::all() {
            return f.write_str("all");
        }
        let mut first = true;
        for kind in self.enabled() {
            if !first {
                f.write_str("+")?;
            }
            f.write_str(kind.label())?;
            first = false;
        }
        if first {
            f.write_str("none")?;
        }
        Ok(())
    }
}

/// One summary channel of a corpus item: the text plus its embeddings
/// under the corpus's embedder spec.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryChannel {
    pub kind: ChannelKind,
    pub text: String,
    pub sentence: SentenceEmbedding,
    pub tokens: TokenEmbedding,
}

impl SummaryChannel {
    pub fn from_text(kind: ChannelKind, text: &str, spec: &EmbedderSpec) -> Self {
        Self {
            kind,
            text: String::from(text),
            sentence: embed_sentence(text, spec),
            tokens: embed_tokens(text, spec),
        }
    }
}

/// An item in the retrieval pool: a stand-in for one image, carrying the
/// three summary texts that replace it during retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub item_id: String,
    channels: BTreeMap<ChannelKind, SummaryChannel>,
}

impl CorpusItem {
    /// Builds a complete item from its three channel texts.
    pub fn from_texts(
        item_id: &str,
        image_question: &str,
        scene_question: &str,
        description: &str,
        spec: &EmbedderSpec,
    ) -> Self {
        let mut channels = BTreeMap::new();
        channels.insert(
            ChannelKind::ImageQuestion,
            SummaryChannel::from_text(ChannelKind::ImageQuestion, image_question, spec),
        );
        channels.insert(
            ChannelKind::SceneQuestion,
            SummaryChannel::from_text(ChannelKind::SceneQuestion, scene_question, spec),
        );
        channels.insert(
            ChannelKind::Description,
            SummaryChannel::from_text(ChannelKind::Description, description, spec),
        );
        Self {
            item_id: String::from(item_id),
            channels,
        }
    }

    /// Builds an item from an explicit channel map. The map may be partial;
    /// scoring a missing channel reports a corpus-integrity error.
    pub fn from_channels(item_id: &str, channels: BTreeMap<ChannelKind, SummaryChannel>) -> Self {
        Self {
            item_id: String::from(item_id),
            channels,
        }
    }

    pub fn channel(&self, kind: ChannelKind) -> Option<&SummaryChannel> {
        self.channels.get(&kind)
    }

    pub fn channels(&self) -> impl Iterator<Item = &SummaryChannel> {
        self.channels.values()
    }

    pub fn is_complete(&self) -> bool {
        ChannelKind::ALL.iter().all(|k| self.channels.contains_key(k))
    }
}

/// A query embedded at both granularities.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedQuery {
    pub text: String,
    pub sentence: SentenceEmbedding,
    pub tokens: TokenEmbedding,
}

pub fn embed_query(text: &str, spec: &EmbedderSpec) -> EmbeddedQuery {
    EmbeddedQuery {
        text: String::from(text),
        sentence: embed_sentence(text, spec),
        tokens: embed_tokens(text, spec),
    }
}

/// Scores of one corpus item on one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub item_id: String,
    pub kind: ChannelKind,
    pub word_score: f64,
    pub sentence_score: f64,
    pub fused_score: f64,
}

/// Scores the query against every item's `kind` channel. Items are scored
/// independently and output order matches corpus order. The query's
/// projections are hoisted out of the loop; the arithmetic per pair is
/// identical to composing the similarity kernels directly.
pub fn score_channel(
    query: &EmbeddedQuery,
    corpus: &[CorpusItem],
    kind: ChannelKind,
    heads: &ProjectionHeads,
    cfg: &FusionConfig,
) -> Result<Vec<ScoredCandidate>> {
    if corpus.is_empty() {
        return Err(CoreError::EmptyCorpus);
    }
    let dim_of = |actual: usize| -> Result<()> {
        if actual == heads.dim {
            Ok(())
        } else {
            Err(CoreError::DimensionMismatch {
                expected: heads.dim,
                actual,
            })
        }
    };
    dim_of(query.sentence.dim())?;
    dim_of(query.tokens.dim())?;

    let query_sentence = project(&heads.sentence_query, &query.sentence.vector);
    let query_rows = project_rows(&heads.word_query, &query.tokens);

    let mut scored = Vec::with_capacity(corpus.len());
    for item in corpus {
        let channel = item.channel(kind).ok_or_else(|| CoreError::MissingChannel {
            item_id: item.item_id.clone(),
            kind,
        })?;
        dim_of(channel.sentence.dim())?;
        dim_of(channel.tokens.dim())?;

        let summary_sentence = project(&heads.sentence_summary, &channel.sentence.vector);
        let sentence_score = projected_cosine(&query_sentence, &summary_sentence);

        let summary_rows = project_rows(&heads.word_summary, &channel.tokens);
        let matrix = matrix_from_projected(&query_rows, &summary_rows);
        let word_score = maxpool_relevance(&matrix)?;

        scored.push(ScoredCandidate {
            item_id: item.item_id.clone(),
            kind,
            word_score,
            sentence_score,
            fused_score: fuse_scores(word_score, sentence_score, cfg),
        });
    }
    Ok(scored)
}

/// The k highest fused scores, descending, ties broken by ascending item
/// id. Returns every candidate when fewer than k exist.
pub fn topk_candidates(scores: &[ScoredCandidate], k: usize) -> Vec<ScoredCandidate> {
    let mut ranked: Vec<&ScoredCandidate> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        b.fused_score
            .total_cmp(&a.fused_score)
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    ranked.into_iter().take(k).cloned().collect()
}

/// One member of the final candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEntry {
    pub item_id: String,
    /// Best fused score across the channels that retrieved this item.
    pub score: f64,
    /// Every channel whose top-K list contained this item, in channel order.
    pub channels: Vec<ChannelKind>,
}

/// Ordered, duplicate-free union of per-channel top-K lists.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub entries: Vec<CandidateEntry>,
}

impl CandidateSet {
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.item_id.clone()).collect()
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.entries.iter().any(|e| e.item_id == item_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Merges per-channel ranked lists: duplicates collapse to one entry that
/// keeps the best fused score and records every contributing channel.
/// Entries are ordered by best score descending, ties by ascending id.
pub fn union_candidates(ranked_lists: &[Vec<ScoredCandidate>]) -> CandidateSet {
    let mut merged: BTreeMap<&str, CandidateEntry> = BTreeMap::new();
    for list in ranked_lists {
        for candidate in list {
            let entry = merged
                .entry(candidate.item_id.as_str())
                .or_insert_with(|| CandidateEntry {
                    item_id: candidate.item_id.clone(),
                    score: f64::NEG_INFINITY,
                    channels: Vec::new(),
                });
            if candidate.fused_score > entry.score {
                entry.score = candidate.fused_score;
            }
            if !entry.channels.contains(&candidate.kind) {
                entry.channels.push(candidate.kind);
            }
        }
    }
    let mut entries: Vec<CandidateEntry> = merged.into_values().collect();
    for entry in &mut entries {
        entry.channels.sort();
    }
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    CandidateSet { entries }
}

/// Full retrieval result, with the per-channel rankings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOutcome {
    pub candidates: CandidateSet,
    pub channel_rankings: Vec<(ChannelKind, Vec<ScoredCandidate>)>,
}

/// End-to-end retrieval: per-channel scoring, per-channel top-K, union
/// over the enabled channels. The union is not re-truncated, so the result
/// holds at most `3k` ids.
pub fn retrieve(
    query: &EmbeddedQuery,
    corpus: &[CorpusItem],
    heads: &ProjectionHeads,
    cfg: &FusionConfig,
    k: usize,
    mask: ChannelMask,
) -> Result<CandidateSet> {
    Ok(retrieve_detailed(query, corpus, heads, cfg, k, mask)?.candidates)
}

/// [`retrieve`], also returning each enabled channel's top-K list.
pub fn retrieve_detailed(
    query: &EmbeddedQuery,
    corpus: &[CorpusItem],
    heads: &ProjectionHeads,
    cfg: &FusionConfig,
    k: usize,
    mask: ChannelMask,
) -> Result<RetrievalOutcome> {
    if mask.is_empty() {
        return Err(CoreError::EmptyChannelMask);
    }
    let mut channel_rankings = Vec::with_capacity(mask.len());
    for kind in mask.enabled() {
        let scores = score_channel(query, corpus, kind, heads, cfg)?;
        channel_rankings.push((kind, topk_candidates(&scores, k)));
    }
    let candidates =
        union_candidates(&channel_rankings.iter().map(|(_, l)| l.clone()).collect::<Vec<_>>());
    Ok(RetrievalOutcome {
        candidates,
        channel_rankings,
    })
}
