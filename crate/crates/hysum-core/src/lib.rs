//! Hypothetical-summary retrieval.
//!
//! Corpus items carry three generated summary texts per item (an
//! image-style question, a scene-style question, and a description), and
//! retrieval is plain text-to-text: a query is scored against every item
//! per channel at two granularities — a sentence-level cosine and a
//! word-level max-pooled cosine — fused in the log domain, ranked top-K
//! per channel, and unioned into the final candidate set. Four affine
//! projection heads sit between embeddings and scores; the word-level
//! pair is trainable with a contrastive enhancement loss.
//!
//! Everything in this crate is pure and deterministic: equal inputs give
//! bit-identical outputs across runs and platforms (transcendentals go
//! through `libm`). The crate is `no_std` + `alloc`; IO, file formats,
//! and the command line live in the companion `hysum` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod embed;
pub mod error;
pub mod harness;
pub mod heads;
pub mod kernels;
pub mod metrics;
pub mod rank;
pub mod rng;
pub mod train;

pub(crate) mod vecmath;

pub use error::{CoreError, Result};
