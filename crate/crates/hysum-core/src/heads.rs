//! Trainable affine projection heads.
//!
//! Four maps sit between raw embeddings and similarity scores: a
//! query-side and a summary-side head at the sentence level, and the same
//! pair at the word level. Training touches only the word-level pair; the
//! sentence-level pair stays at its initialization.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::SplitMix64;

/// Dense affine map `y = W x + b` with a row-major `dim x dim` weight.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Self {
            dim,
            weight,
            bias: vec![0.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let mut out = self.bias.clone();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weight[r * self.dim..(r + 1) * self.dim];
            for (w, v) in row.iter().zip(x.iter()) {
                *o += w * v;
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.dim * self.dim + self.dim
    }

    fn seeded(dim: usize, noise: f64, rng: &mut SplitMix64) -> Self {
        let mut map = Self::identity(dim);
        for w in &mut map.weight {
            *w += noise * rng.next_signed();
        }
        for b in &mut map.bias {
            *b += noise * rng.next_signed();
        }
        map
    }
}

/// The four projection heads, all `dim -> dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHeads {
    pub dim: usize,
    pub sentence_query: AffineMap,
    pub sentence_summary: AffineMap,
    pub word_query: AffineMap,
    pub word_summary: AffineMap,
}

impl ProjectionHeads {
    /// Noise scale of [`ProjectionHeads::seeded`]: close enough to the
    /// identity that untrained scores are still meaningful, far enough
    /// that training has visible room to improve.
    pub const INIT_NOISE: f64 = 0.05;

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            sentence_query: AffineMap::identity(dim),
            sentence_summary: AffineMap::identity(dim),
            word_query: AffineMap::identity(dim),
            word_summary: AffineMap::identity(dim),
        }
    }

    /// Identity plus small seeded uniform noise on every weight and bias.
    /// This is the training initialization; equal seeds give bit-identical
    /// heads.
    pub fn seeded(dim: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        Self {
            dim,
            sentence_query: AffineMap::seeded(dim, Self::INIT_NOISE, &mut rng),
            sentence_summary: AffineMap::seeded(dim, Self::INIT_NOISE, &mut rng),
            word_query: AffineMap::seeded(dim, Self::INIT_NOISE, &mut rng),
            word_summary: AffineMap::seeded(dim, Self::INIT_NOISE, &mut rng),
        }
    }

    /// Number of trainable (word-level) parameters at a given dimension.
    pub fn word_param_count(dim: usize) -> usize {
        2 * (dim * dim + dim)
    }

    /// Word-level parameters flattened as
    /// `[word_query.weight, word_query.bias, word_summary.weight, word_summary.bias]`.
    pub fn word_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(Self::word_param_count(self.dim));
        flat.extend_from_slice(&self.word_query.weight);
        flat.extend_from_slice(&self.word_query.bias);
        flat.extend_from_slice(&self.word_summary.weight);
        flat.extend_from_slice(&self.word_summary.bias);
        flat
    }

    /// Inverse of [`ProjectionHeads::word_params`].
    pub fn set_word_params(&mut self, flat: &[f64]) {
        let d = self.dim;
        assert_eq!(flat.len(), Self::word_param_count(d));
        let (wq_w, rest) = flat.split_at(d * d);
        let (wq_b, rest) = rest.split_at(d);
        let (wv_w, wv_b) = rest.split_at(d * d);
        self.word_query.weight.copy_from_slice(wq_w);
        self.word_query.bias.copy_from_slice(wq_b);
        self.word_summary.weight.copy_from_slice(wv_w);
        self.word_summary.bias.copy_from_slice(wv_b);
    }
}
