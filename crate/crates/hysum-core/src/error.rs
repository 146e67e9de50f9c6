//! Error type shared by all core operations.

use alloc::string::String;
use core::fmt;

use crate::rank::ChannelKind;

pub type Result<T> = core::result::Result<T, CoreError>;

/// Errors raised by embedding, scoring, ranking, and training operations.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A vector or matrix dimension does not match the projection heads.
    DimensionMismatch { expected: usize, actual: usize },
    /// Max-pooling over an empty similarity matrix.
    EmptySimilarityMatrix,
    /// A corpus item lacks one of the three summary channels.
    MissingChannel { item_id: String, kind: ChannelKind },
    /// Scoring requires at least one corpus item.
    EmptyCorpus,
    /// Retrieval requires at least one enabled channel.
    EmptyChannelMask,
    /// A contrastive batch has no pairs.
    EmptyBatch,
    /// The anchor index does not address a pair in the batch.
    AnchorOutOfRange { anchor: usize, batch_len: usize },
    /// A feature vector has (near-)zero norm, so its cosine is undefined.
    ZeroNormFeature { pair: usize },
    /// probs/target arrays of an answer distribution disagree in shape.
    DistributionShape(String),
    /// An answer distribution violates its invariants (row sums to 1,
    /// one-hot target).
    InvalidDistribution(String),
    /// Training or evaluation over an empty dataset.
    EmptyDataset,
    /// An ablation grid was requested with an empty axis.
    EmptyGridAxis(&'static str),
    /// The training loss became non-finite.
    NonFiniteLoss { epoch: usize, step: usize },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::DimensionMismatch { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected}, got {actual}")
            }
            CoreError::EmptySimilarityMatrix => {
                write!(f, "similarity matrix is empty; max-pooling is undefined")
            }
            CoreError::MissingChannel { item_id, kind } => {
                write!(f, "corpus item '{item_id}' is missing channel '{kind}'")
            }
            CoreError::EmptyCorpus => write!(f, "corpus is empty"),
            CoreError::EmptyChannelMask => write!(f, "channel mask has no channels enabled"),
            CoreError::EmptyBatch => write!(f, "contrastive batch has no pairs"),
            CoreError::AnchorOutOfRange { anchor, batch_len } => {
                write!(f, "anchor index {anchor} out of range for batch of {batch_len}")
            }
            CoreError::ZeroNormFeature { pair } => {
                write!(f, "feature pair {pair} has zero norm; cosine is undefined")
            }
            CoreError::DistributionShape(detail) => {
                write!(f, "answer distribution shape mismatch: {detail}")
            }
            CoreError::InvalidDistribution(detail) => {
                write!(f, "invalid answer distribution: {detail}")
            }
            CoreError::EmptyDataset => write!(f, "dataset is empty"),
            CoreError::EmptyGridAxis(axis) => write!(f, "ablation grid axis '{axis}' is empty"),
            CoreError::NonFiniteLoss { epoch, step } => {
                write!(f, "training diverged: non-finite loss at epoch {epoch}, step {step}")
            }
        }
    }
}

impl core::error::Error for CoreError {}
