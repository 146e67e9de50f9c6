//! Seeded synthetic corpora with controllable channel signal.
//!
//! Every query owns three "object" tokens and three "detail" tokens drawn
//! from disjoint vocabulary pools. Gold items echo the object tokens in
//! their question channels and the detail tokens in their description
//! channel, each with its configured per-item probability, padded with
//! filler tokens from a third pool; irrelevant items are filler-only. The
//! channels therefore carry complementary signal: an item invisible to one
//! channel can still be caught by another, which is what the channel and
//! fusion ablations measure.
//!
//! Generation is a pure function of the spec: one SplitMix64 stream in a
//! fixed draw order, so equal specs give byte-identical files.

use thiserror::Error;

use hysum_core::embed::EmbedderSpec;
use hysum_core::harness::Query;
use hysum_core::rank::CorpusItem;
use hysum_core::rng::SplitMix64;

/// Per-channel probability that a gold item's channel carries the query's
/// tokens at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSignal {
    pub image_question: f64,
    pub scene_question: f64,
    pub description: f64,
}

impl Default for ChannelSignal {
    fn default() -> Self {
        Self {
            image_question: 0.9,
            scene_question: 0.9,
            description: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub corpus_size: usize,
    pub relevant_per_query: usize,
    pub vocabulary_size: usize,
    pub signal: ChannelSignal,
    pub embedder: EmbedderSpec,
}

impl SyntheticSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            corpus_size: 200,
            relevant_per_query: 5,
            vocabulary_size: 600,
            signal: ChannelSignal::default(),
            embedder: EmbedderSpec::default(),
        }
    }

    /// Queries cover half the corpus with gold items; the other half is
    /// pure filler.
    pub fn query_count(&self) -> usize {
        (self.corpus_size / (2 * self.relevant_per_query)).max(1)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("signal rates must lie in [0, 1], got {0}")]
    RateOutOfRange(f64),
    #[error("corpus_size {corpus_size} is smaller than relevant_per_query {relevant_per_query}")]
    CorpusTooSmall {
        corpus_size: usize,
        relevant_per_query: usize,
    },
    #[error("relevant_per_query must be at least 1")]
    NoRelevant,
    #[error(
        "vocabulary_size {vocabulary_size} is too small: {query_count} queries need \
         {needed} object and detail words per pool (pool size is vocabulary_size / 3)"
    )]
    VocabularyTooSmall {
        vocabulary_size: usize,
        query_count: usize,
        needed: usize,
    },
}

/// Generated corpus and queries, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub embedder: EmbedderSpec,
    pub items: Vec<CorpusItem>,
    pub queries: Vec<Query>,
}

const KEYS_PER_QUERY: usize = 3;
const DETAILS_PER_QUERY: usize = 3;

struct ItemTexts {
    image_question: String,
    scene_question: String,
    description: String,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, SynthError> {
    validate(spec)?;
    let mut rng = SplitMix64::new(spec.seed);

    let pool = spec.vocabulary_size / 3;
    let noise_pool = spec.vocabulary_size - 2 * pool;
    let n_queries = spec.query_count();

    let noise = |rng: &mut SplitMix64| format!("fil{:03}", rng.next_below(noise_pool));

    // Provisional item list: gold blocks per query first, filler items after.
    let mut texts: Vec<ItemTexts> = Vec::with_capacity(spec.corpus_size);
    let mut query_texts = Vec::with_capacity(n_queries);
    for q in 0..n_queries {
        // Object and detail words are disjoint per-query slices of their
        // pools, so signal between different queries never overlaps.
        let keys: Vec<String> = (0..KEYS_PER_QUERY)
            .map(|j| format!("obj{:03}", q * KEYS_PER_QUERY + j))
            .collect();
        let details: Vec<String> = (0..DETAILS_PER_QUERY)
            .map(|j| format!("det{:03}", q * DETAILS_PER_QUERY + j))
            .collect();
        query_texts.push((
            format!(
                "which item shows {} {} {} beside {} {} {}",
                keys[0], keys[1], keys[2], details[0], details[1], details[2]
            ),
            keys.clone(),
        ));

        for _ in 0..spec.relevant_per_query {
            // Draw order per gold item: three informative flags, then the
            // filler words channel by channel.
            let qm_on = rng.next_f64() < spec.signal.image_question;
            let qd_on = rng.next_f64() < spec.signal.scene_question;
            let d_on = rng.next_f64() < spec.signal.description;
            let image_question = if qm_on {
                format!(
                    "does this picture show {} {} {} plus {} {}",
                    keys[0],
                    keys[1],
                    keys[2],
                    noise(&mut rng),
                    noise(&mut rng)
                )
            } else {
                filler_channel("does this picture show", 5, &mut rng, noise_pool)
            };
            let scene_question = if qd_on {
                format!(
                    "what appears around {} {} {} with {} {}",
                    keys[0],
                    keys[1],
                    keys[2],
                    noise(&mut rng),
                    noise(&mut rng)
                )
            } else {
                filler_channel("what appears around", 5, &mut rng, noise_pool)
            };
            let description = if d_on {
                format!(
                    "the picture contains {} {} {} and {} {}",
                    details[0],
                    details[1],
                    details[2],
                    noise(&mut rng),
                    noise(&mut rng)
                )
            } else {
                filler_channel("the picture contains", 5, &mut rng, noise_pool)
            };
            texts.push(ItemTexts {
                image_question,
                scene_question,
                description,
            });
        }
    }
    while texts.len() < spec.corpus_size {
        texts.push(ItemTexts {
            image_question: filler_channel("does this picture show", 5, &mut rng, noise_pool),
            scene_question: filler_channel("what appears around", 5, &mut rng, noise_pool),
            description: filler_channel("the picture contains", 5, &mut rng, noise_pool),
        });
    }

    // Scatter gold items across the id space so id-based tie-breaking
    // cannot favor them.
    let mut order: Vec<usize> = (0..texts.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.next_below(i + 1);
        order.swap(i, j);
    }
    let mut id_of = vec![String::new(); texts.len()];
    for (position, &provisional) in order.iter().enumerate() {
        id_of[provisional] = format!("img{position:05}");
    }

    let mut items: Vec<CorpusItem> = Vec::with_capacity(texts.len());
    for &provisional in &order {
        let t = &texts[provisional];
        items.push(CorpusItem::from_texts(
            &id_of[provisional],
            &t.image_question,
            &t.scene_question,
            &t.description,
            &spec.embedder,
        ));
    }

    let queries = query_texts
        .into_iter()
        .enumerate()
        .map(|(q, (text, keys))| {
            let mut relevant: Vec<String> = (0..spec.relevant_per_query)
                .map(|r| id_of[q * spec.relevant_per_query + r].clone())
                .collect();
            relevant.sort();
            Query {
                query_id: format!("qry{q:04}"),
                text,
                relevant,
                answer: Some(keys[0].clone()),
            }
        })
        .collect();

    Ok(SyntheticData {
        embedder: spec.embedder.clone(),
        items,
        queries,
    })
}

fn filler_channel(template: &str, words: usize, rng: &mut SplitMix64, noise_pool: usize) -> String {
    let mut text = String::from(template);
    for _ in 0..words {
        text.push_str(&format!(" fil{:03}", rng.next_below(noise_pool)));
    }
    text
}

fn validate(spec: &SyntheticSpec) -> Result<(), SynthError> {
    for rate in [
        spec.signal.image_question,
        spec.signal.scene_question,
        spec.signal.description,
    ] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(SynthError::RateOutOfRange(rate));
        }
    }
    if spec.relevant_per_query == 0 {
        return Err(SynthError::NoRelevant);
    }
    if spec.corpus_size < spec.relevant_per_query {
        return Err(SynthError::CorpusTooSmall {
            corpus_size: spec.corpus_size,
            relevant_per_query: spec.relevant_per_query,
        });
    }
    let pool = spec.vocabulary_size / 3;
    let needed = spec.query_count() * KEYS_PER_QUERY.max(DETAILS_PER_QUERY);
    if pool < needed || spec.vocabulary_size - 2 * pool == 0 {
        return Err(SynthError::VocabularyTooSmall {
            vocabulary_size: spec.vocabulary_size,
            query_count: spec.query_count(),
            needed,
        });
    }
    Ok(())
}
