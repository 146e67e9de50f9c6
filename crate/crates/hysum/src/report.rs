//! Report rendering: machine-readable JSON lines plus an aligned table.
//!
//! Comment lines start with `#`, records with `{`, so consumers can stream
//! one file descriptor and filter trivially.

use serde::Serialize;

use hysum_core::harness::{AblationGrid, MetricReport};

/// Emitted at the top of every report. The first line states what the
/// numbers are (this tool scores retrieval; it does not generate answers,
/// so there is no answer-accuracy column); the second pins the empty-gold
/// convention.
pub fn header_lines() -> Vec<String> {
    vec![
        "# metrics: recall / precision / MRR over the retrieved candidate union \
         (retrieval stand-in for answer accuracy; this tool has no answer generator)"
            .to_string(),
        "# conventions: metrics cover the whole union (up to 3*K ids); \
         queries with empty gold sets score recall 1.0"
            .to_string(),
    ]
}

#[derive(Serialize)]
struct CellRecord<'a> {
    mask: String,
    fusion: &'a str,
    k: usize,
    queries: usize,
    recall: f64,
    precision: f64,
    mrr: f64,
}

#[derive(Serialize)]
struct QueryRecord<'a> {
    query_id: &'a str,
    recall: f64,
    precision: f64,
    mrr: f64,
    retrieved: usize,
}

fn cell_record(report: &MetricReport) -> String {
    serde_json::to_string(&CellRecord {
        mask: report.mask.to_string(),
        fusion: report.mode.label(),
        k: report.k,
        queries: report.per_query.len(),
        recall: report.mean_recall,
        precision: report.mean_precision,
        mrr: report.mean_mrr,
    })
    .expect("record serializes")
}

/// One JSON line per grid cell, in grid order.
pub fn grid_records(grid: &AblationGrid) -> Vec<String> {
    grid.cells.iter().map(|c| cell_record(&c.report)).collect()
}

/// Aggregate record plus one per-query record for a single report.
pub fn report_records(report: &MetricReport) -> Vec<String> {
    let mut lines = vec![cell_record(report)];
    for q in &report.per_query {
        lines.push(
            serde_json::to_string(&QueryRecord {
                query_id: &q.query_id,
                recall: q.recall,
                precision: q.precision,
                mrr: q.reciprocal_rank,
                retrieved: q.retrieved,
            })
            .expect("record serializes"),
        );
    }
    lines
}

/// Fixed-width table over the grid cells.
pub fn grid_table(grid: &AblationGrid) -> String {
    let mut rows: Vec<[String; 6]> = Vec::with_capacity(grid.cells.len() + 1);
    rows.push([
        "mask".to_string(),
        "fusion".to_string(),
        "k".to_string(),
        "recall".to_string(),
        "precision".to_string(),
        "mrr".to_string(),
    ]);
    for cell in &grid.cells {
        rows.push([
            cell.mask.to_string(),
            cell.mode.label().to_string(),
            cell.k.to_string(),
            format!("{:.4}", cell.report.mean_recall),
            format!("{:.4}", cell.report.mean_precision),
            format!("{:.4}", cell.report.mean_mrr),
        ]);
    }
    let mut widths = [0usize; 6];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let mut line = String::new();
        for (i, (cell, width)) in row.iter().zip(widths.iter()).enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{cell:<width$}"));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
