//! On-disk formats.
//!
//! Corpus and query files are UTF-8 text: a sentinel-prefixed JSON header
//! line, then one JSON record per line. Record text is the source of
//! truth; stored embeddings are an optional cache and every cached vector
//! is checked against re-embedding the text on load. Heads files are a
//! single JSON document of flat arrays with a dimension header.
//!
//! Field order is documented in the README's format reference; writers
//! here emit fields in exactly that order, so equal inputs produce
//! byte-identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use hysum_core::embed::{embed_sentence, embed_tokens, EmbedderSpec, TokenizerRule};
use hysum_core::harness::Query;
use hysum_core::heads::{AffineMap, ProjectionHeads};
use hysum_core::rank::{ChannelKind, CorpusItem};

pub const CORPUS_SENTINEL: &str = "%hysum-corpus";
pub const QUERY_SENTINEL: &str = "%hysum-queries";
pub const HEADS_FORMAT: &str = "hysum-heads";
pub const FORMAT_VERSION: u32 = 1;

/// Tolerance when checking a cached embedding against re-embedding the
/// text. JSON round-trips f64 exactly, so this only absorbs writers that
/// print fewer digits.
const EMBEDDING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("{path}: invalid header: {detail}")]
    Header { path: String, detail: String },
    #[error("{path}:{line}: duplicate id '{id}'")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: item '{item_id}' is missing channel '{kind}'")]
    MissingChannel {
        path: String,
        line: usize,
        item_id: String,
        kind: ChannelKind,
    },
    #[error(
        "{path}:{line}: stored {granularity} embedding for item '{item_id}' \
         channel '{kind}' does not match its text"
    )]
    EmbeddingMismatch {
        path: String,
        line: usize,
        item_id: String,
        kind: ChannelKind,
        granularity: &'static str,
    },
    #[error("query '{query_id}' references unknown item '{item_id}'")]
    UnknownItem { query_id: String, item_id: String },
    #[error("{path}: {detail}")]
    Invalid { path: String, detail: String },
}

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// The three generation prompts carried in every corpus header, so corpora
/// produced by a real summary generator and synthetic ones share a schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusPrompts {
    pub image_question: String,
    pub scene_question: String,
    pub description: String,
}

impl Default for CorpusPrompts {
    fn default() -> Self {
        Self {
            image_question: ChannelKind::ImageQuestion.generation_prompt().to_string(),
            scene_question: ChannelKind::SceneQuestion.generation_prompt().to_string(),
            description: ChannelKind::Description.generation_prompt().to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader {
    version: u32,
    embedder: EmbedderRecord,
    prompts: CorpusPrompts,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbedderRecord {
    name: String,
    dimension: usize,
    tokenizer: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChannelRecord {
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    sentence: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemRecord {
    item_id: String,
    image_question: Option<ChannelRecord>,
    scene_question: Option<ChannelRecord>,
    description: Option<ChannelRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct QueryHeader {
    version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct QueryRecord {
    query_id: String,
    text: String,
    relevant: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    answer: Option<String>,
}

/// A corpus as loaded from disk: validated items plus the header metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub embedder: EmbedderSpec,
    pub prompts: CorpusPrompts,
    pub items: Vec<CorpusItem>,
}

pub fn save_corpus(
    path: &Path,
    embedder: &EmbedderSpec,
    items: &[CorpusItem],
    with_embeddings: bool,
) -> Result<(), FormatError> {
    let header = CorpusHeader {
        version: FORMAT_VERSION,
        embedder: EmbedderRecord {
            name: embedder.name.clone(),
            dimension: embedder.dimension,
            tokenizer: embedder.tokenizer.label().to_string(),
        },
        prompts: CorpusPrompts::default(),
    };
    let mut out = String::new();
    out.push_str(CORPUS_SENTINEL);
    out.push(' ');
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for item in items {
        let record = ItemRecord {
            item_id: item.item_id.clone(),
            image_question: channel_record(item, ChannelKind::ImageQuestion, with_embeddings),
            scene_question: channel_record(item, ChannelKind::SceneQuestion, with_embeddings),
            description: channel_record(item, ChannelKind::Description, with_embeddings),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn channel_record(item: &CorpusItem, kind: ChannelKind, with_embeddings: bool) -> Option<ChannelRecord> {
    item.channel(kind).map(|channel| ChannelRecord {
        text: channel.text.clone(),
        sentence: with_embeddings.then(|| channel.sentence.vector.clone()),
        tokens: with_embeddings.then(|| channel.tokens.rows.clone()),
    })
}

pub fn load_corpus(path: &Path) -> Result<LoadedCorpus, FormatError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let path_str = path.display().to_string();
    let mut lines = content.lines().enumerate();

    let header = loop {
        let Some((index, line)) = lines.next() else {
            return Err(FormatError::Header {
                path: path_str,
                detail: "file is empty".to_string(),
            });
        };
        if line.trim().is_empty() {
            continue;
        }
        let Some(rest) = line.strip_prefix(CORPUS_SENTINEL) else {
            return Err(FormatError::Header {
                path: path_str,
                detail: format!("first line must start with '{CORPUS_SENTINEL}'"),
            });
        };
        let header: CorpusHeader =
            serde_json::from_str(rest.trim()).map_err(|e| FormatError::Parse {
                path: path_str.clone(),
                line: index + 1,
                detail: e.to_string(),
            })?;
        break header;
    };

    if header.version != FORMAT_VERSION {
        return Err(FormatError::Header {
            path: path_str,
            detail: format!(
                "unsupported version {} (expected {FORMAT_VERSION})",
                header.version
            ),
        });
    }
    let Some(tokenizer) = TokenizerRule::parse(&header.embedder.tokenizer) else {
        return Err(FormatError::Header {
            path: path_str,
            detail: format!("unknown tokenizer rule '{}'", header.embedder.tokenizer),
        });
    };
    if header.embedder.dimension < 2 {
        return Err(FormatError::Header {
            path: path_str,
            detail: format!("embedder dimension {} is too small", header.embedder.dimension),
        });
    }
    let embedder = EmbedderSpec {
        name: header.embedder.name,
        dimension: header.embedder.dimension,
        tokenizer,
    };

    let mut items = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (index, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = index + 1;
        let record: ItemRecord = serde_json::from_str(line).map_err(|e| FormatError::Parse {
            path: path_str.clone(),
            line: line_no,
            detail: e.to_string(),
        })?;
        if !seen.insert(record.item_id.clone()) {
            return Err(FormatError::DuplicateId {
                path: path_str,
                line: line_no,
                id: record.item_id,
            });
        }
        items.push(item_from_record(&path_str, line_no, record, &embedder)?);
    }

    Ok(LoadedCorpus {
        embedder,
        prompts: header.prompts,
        items,
    })
}

fn item_from_record(
    path: &str,
    line: usize,
    record: ItemRecord,
    embedder: &EmbedderSpec,
) -> Result<CorpusItem, FormatError> {
    let channels = [
        (ChannelKind::ImageQuestion, record.image_question),
        (ChannelKind::SceneQuestion, record.scene_question),
        (ChannelKind::Description, record.description),
    ];
    let mut texts = Vec::with_capacity(3);
    for (kind, channel) in channels {
        let Some(channel) = channel else {
            return Err(FormatError::MissingChannel {
                path: path.to_string(),
                line,
                item_id: record.item_id.clone(),
                kind,
            });
        };
        check_cached_embeddings(path, line, &record.item_id, kind, &channel, embedder)?;
        texts.push(channel.text);
    }
    Ok(CorpusItem::from_texts(
        &record.item_id,
        &texts[0],
        &texts[1],
        &texts[2],
        embedder,
    ))
}

fn check_cached_embeddings(
    path: &str,
    line: usize,
    item_id: &str,
    kind: ChannelKind,
    channel: &ChannelRecord,
    embedder: &EmbedderSpec,
) -> Result<(), FormatError> {
    let mismatch = |granularity: &'static str| FormatError::EmbeddingMismatch {
        path: path.to_string(),
        line,
        item_id: item_id.to_string(),
        kind,
        granularity,
    };
    if let Some(stored) = &channel.sentence {
        let expected = embed_sentence(&channel.text, embedder);
        if !vectors_match(stored, &expected.vector) {
            return Err(mismatch("sentence"));
        }
    }
    if let Some(stored) = &channel.tokens {
        let expected = embed_tokens(&channel.text, embedder);
        if stored.len() != expected.rows.len()
            || stored
                .iter()
                .zip(expected.rows.iter())
                .any(|(s, e)| !vectors_match(s, e))
        {
            return Err(mismatch("token"));
        }
    }
    Ok(())
}

fn vectors_match(stored: &[f64], expected: &[f64]) -> bool {
    stored.len() == expected.len()
        && stored
            .iter()
            .zip(expected.iter())
            .all(|(s, e)| (s - e).abs() <= EMBEDDING_TOLERANCE)
}

pub fn save_queries(path: &Path, queries: &[Query]) -> Result<(), FormatError> {
    let header = QueryHeader {
        version: FORMAT_VERSION,
    };
    let mut out = String::new();
    out.push_str(QUERY_SENTINEL);
    out.push(' ');
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for query in queries {
        let record = QueryRecord {
            query_id: query.query_id.clone(),
            text: query.text.clone(),
            relevant: query.relevant.clone(),
            answer: query.answer.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_queries(path: &Path) -> Result<Vec<Query>, FormatError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let path_str = path.display().to_string();
    let mut lines = content.lines().enumerate();

    loop {
        let Some((index, line)) = lines.next() else {
            return Err(FormatError::Header {
                path: path_str,
                detail: "file is empty".to_string(),
            });
        };
        if line.trim().is_empty() {
            continue;
        }
        let Some(rest) = line.strip_prefix(QUERY_SENTINEL) else {
            return Err(FormatError::Header {
                path: path_str,
                detail: format!("first line must start with '{QUERY_SENTINEL}'"),
            });
        };
        let header: QueryHeader =
            serde_json::from_str(rest.trim()).map_err(|e| FormatError::Parse {
                path: path_str.clone(),
                line: index + 1,
                detail: e.to_string(),
            })?;
        if header.version != FORMAT_VERSION {
            return Err(FormatError::Header {
                path: path_str,
                detail: format!(
                    "unsupported version {} (expected {FORMAT_VERSION})",
                    header.version
                ),
            });
        }
        break;
    }

    let mut queries = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (index, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = index + 1;
        let record: QueryRecord = serde_json::from_str(line).map_err(|e| FormatError::Parse {
            path: path_str.clone(),
            line: line_no,
            detail: e.to_string(),
        })?;
        if !seen.insert(record.query_id.clone()) {
            return Err(FormatError::DuplicateId {
                path: path_str,
                line: line_no,
                id: record.query_id,
            });
        }
        queries.push(Query {
            query_id: record.query_id,
            text: record.text,
            relevant: record.relevant,
            answer: record.answer,
        });
    }
    Ok(queries)
}

/// Checks that every gold id in the query set names an existing item.
pub fn validate_references(items: &[CorpusItem], queries: &[Query]) -> Result<(), FormatError> {
    let ids: std::collections::BTreeSet<&str> =
        items.iter().map(|i| i.item_id.as_str()).collect();
    for query in queries {
        for gold in &query.relevant {
            if !ids.contains(gold.as_str()) {
                return Err(FormatError::UnknownItem {
                    query_id: query.query_id.clone(),
                    item_id: gold.clone(),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MapRecord {
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeadsFile {
    format: String,
    version: u32,
    dimension: usize,
    sentence_query: MapRecord,
    sentence_summary: MapRecord,
    word_query: MapRecord,
    word_summary: MapRecord,
}

fn map_record(map: &AffineMap) -> MapRecord {
    MapRecord {
        weight: map.weight.clone(),
        bias: map.bias.clone(),
    }
}

fn map_from_record(
    path: &str,
    name: &str,
    dimension: usize,
    record: MapRecord,
) -> Result<AffineMap, FormatError> {
    if record.weight.len() != dimension * dimension || record.bias.len() != dimension {
        return Err(FormatError::Invalid {
            path: path.to_string(),
            detail: format!(
                "map '{name}' has {} weights and {} biases; expected {} and {dimension}",
                record.weight.len(),
                record.bias.len(),
                dimension * dimension
            ),
        });
    }
    Ok(AffineMap {
        dim: dimension,
        weight: record.weight,
        bias: record.bias,
    })
}

/// Writes the heads as one JSON document: text only, flat arrays, with the
/// dimension up front. Equal heads serialize to identical bytes.
pub fn save_heads(path: &Path, heads: &ProjectionHeads) -> Result<(), FormatError> {
    let file = HeadsFile {
        format: HEADS_FORMAT.to_string(),
        version: FORMAT_VERSION,
        dimension: heads.dim,
        sentence_query: map_record(&heads.sentence_query),
        sentence_summary: map_record(&heads.sentence_summary),
        word_query: map_record(&heads.word_query),
        word_summary: map_record(&heads.word_summary),
    };
    let mut out = serde_json::to_string(&file).expect("heads serialize");
    out.push('\n');
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_heads(path: &Path) -> Result<ProjectionHeads, FormatError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let path_str = path.display().to_string();
    let file: HeadsFile = serde_json::from_str(&content).map_err(|e| FormatError::Parse {
        path: path_str.clone(),
        line: 1,
        detail: e.to_string(),
    })?;
    if file.format != HEADS_FORMAT {
        return Err(FormatError::Invalid {
            path: path_str,
            detail: format!("unexpected format tag '{}'", file.format),
        });
    }
    if file.version != FORMAT_VERSION {
        return Err(FormatError::Invalid {
            path: path_str,
            detail: format!("unsupported version {}", file.version),
        });
    }
    let d = file.dimension;
    Ok(ProjectionHeads {
        dim: d,
        sentence_query: map_from_record(&path_str, "sentence_query", d, file.sentence_query)?,
        sentence_summary: map_from_record(&path_str, "sentence_summary", d, file.sentence_summary)?,
        word_query: map_from_record(&path_str, "word_query", d, file.word_query)?,
        word_summary: map_from_record(&path_str, "word_summary", d, file.word_summary)?,
    })
}
