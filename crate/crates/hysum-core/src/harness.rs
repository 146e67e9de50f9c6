//! Evaluation harness: retrieval metrics for a query set over one corpus,
//! and ablation grids sweeping channel masks, fusion modes, and K.
//!
//! The tool has no answer generator, so reports carry retrieval metrics
//! (recall, precision, MRR) as the stand-in for end-task answer accuracy.
//! Metrics are computed over the full retrieved candidate union (built
//! with per-channel top-K, at most `3K` ids), which keeps recall monotone
//! when channels are added to the mask.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::embed::EmbedderSpec;
use crate::error::{CoreError, Result};
use crate::heads::ProjectionHeads;
use crate::kernels::{FusionConfig, FusionMode};
use crate::metrics::{mrr, precision_at_k, recall_at_k};
use crate::rank::{embed_query, retrieve, ChannelMask, CorpusItem};

/// One evaluation query: text, gold item ids, and an opaque answer payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    pub relevant: Vec<String>,
    pub answer: Option<String>,
}

/// Metrics of a single query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMetrics {
    pub query_id: String,
    pub recall: f64,
    pub precision: f64,
    pub reciprocal_rank: f64,
    /// Size of the retrieved candidate union.
    pub retrieved: usize,
}

/// Per-query metrics plus arithmetic means, echoing the configuration that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mask: ChannelMask,
    pub mode: FusionMode,
    pub k: usize,
    pub per_query: Vec<QueryMetrics>,
    pub mean_recall: f64,
    pub mean_precision: f64,
    pub mean_mrr: f64,
}

/// Evaluates every query against the corpus with the given settings.
pub fn evaluate(
    corpus: &[CorpusItem],
    queries: &[Query],
    heads: &ProjectionHeads,
    spec: &EmbedderSpec,
    cfg: &FusionConfig,
    mask: ChannelMask,
    k: usize,
) -> Result<MetricReport> {
    if queries.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let mut per_query = Vec::with_capacity(queries.len());
    for query in queries {
        let embedded = embed_query(&query.text, spec);
        let candidates = retrieve(&embedded, corpus, heads, cfg, k, mask)?;
        let ranked = candidates.ids();
        let gold: BTreeSet<String> = query.relevant.iter().cloned().collect();
        per_query.push(QueryMetrics {
            query_id: query.query_id.clone(),
            recall: recall_at_k(&ranked, &gold, ranked.len()),
            precision: precision_at_k(&ranked, &gold, ranked.len()),
            reciprocal_rank: mrr(&ranked, &gold),
            retrieved: ranked.len(),
        });
    }
    let count = per_query.len() as f64;
    let mean_recall = per_query.iter().map(|m| m.recall).sum::<f64>() / count;
    let mean_precision = per_query.iter().map(|m| m.precision).sum::<f64>() / count;
    let mean_mrr = per_query.iter().map(|m| m.reciprocal_rank).sum::<f64>() / count;
    Ok(MetricReport {
        mask,
        mode: cfg.mode,
        k,
        per_query,
        mean_recall,
        mean_precision,
        mean_mrr,
    })
}

/// Grid axes: every combination of mask, fusion mode, and K is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub masks: Vec<ChannelMask>,
    pub modes: Vec<FusionMode>,
    pub ks: Vec<usize>,
}

impl GridAxes {
    /// A single-cell grid.
    pub fn single(mask: ChannelMask, mode: FusionMode, k: usize) -> Self {
        Self {
            masks: alloc::vec![mask],
            modes: alloc::vec![mode],
            ks: alloc::vec![k],
        }
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub mask: ChannelMask,
    pub mode: FusionMode,
    pub k: usize,
    pub report: MetricReport,
}

/// The full ablation grid, cells in mask-major, then mode, then K order.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    pub cells: Vec<GridCell>,
}

impl AblationGrid {
    pub fn cell(&self, mask: ChannelMask, mode: FusionMode, k: usize) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.mask == mask && c.mode == mode && c.k == k)
    }
}

/// Exhaustively evaluates the grid. Cells are independent: each is exactly
/// an [`evaluate`] call over the same corpus, queries, and heads.
pub fn run_ablation(
    corpus: &[CorpusItem],
    queries: &[Query],
    heads: &ProjectionHeads,
    spec: &EmbedderSpec,
    axes: &GridAxes,
    epsilon: f64,
) -> Result<AblationGrid> {
    if axes.masks.is_empty() {
        return Err(CoreError::EmptyGridAxis("masks"));
    }
    if axes.modes.is_empty() {
        return Err(CoreError::EmptyGridAxis("modes"));
    }
    if axes.ks.is_empty() {
        return Err(CoreError::EmptyGridAxis("ks"));
    }
    let mut cells = Vec::with_capacity(axes.masks.len() * axes.modes.len() * axes.ks.len());
    for &mask in &axes.masks {
        for &mode in &axes.modes {
            for &k in &axes.ks {
                let cfg = FusionConfig { mode, epsilon };
                let report = evaluate(corpus, queries, heads, spec, &cfg, mask, k)?;
                cells.push(GridCell {
                    mask,
                    mode,
                    k,
                    report,
                });
            }
        }
    }
    Ok(AblationGrid { cells })
}
