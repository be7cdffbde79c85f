//! Error type shared by all modules of the crate.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by data-dependent failure paths.
///
/// Structural misuse (dimension mismatches between vectors the caller
/// constructed, empty reductions) panics instead; those are programmer
/// errors, not run-time conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector with zero L2 norm reached a normalization or cosine
    /// similarity; during training this signals a collapsed projector.
    ZeroNorm,
    /// Loss weights violate `alpha1 + alpha2 <= 1` with both in `[0, 1]`.
    InvalidLossWeights { alpha1: f64, alpha2: f64 },
    /// A margin below zero was passed to the triplet loss.
    NegativeMargin(f64),
    /// Input dimensionality does not match what the model or operation
    /// expects.
    DimMismatch { expected: usize, got: usize },
    /// A model or optimizer description fails validation.
    InvalidSpec(String),
    /// A gradient or loss value stopped being finite.
    NonFinite { context: String },
    /// Batch assembly needs at least two points and at most the dataset
    /// size.
    BadBatchSize { batch_size: usize, dataset_len: usize },
    /// Collapse monitoring needs at least two embeddings.
    NotEnoughEmbeddings(usize),
    /// k-NN classification over an empty reference set, or `k` larger than
    /// the reference set.
    BadKnnInput { k: usize, train_len: usize },
    /// The linear probe needs at least two classes in its training labels.
    SingleClassProbe,
    /// Two sequences that must align have different lengths.
    LengthMismatch { left: usize, right: usize },
    /// Training aborted because the loss became non-finite.
    TrainingDiverged { epoch: usize, batch: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ZeroNorm => write!(f, "zero-norm vector (collapsed embedding)"),
            Error::InvalidLossWeights { alpha1, alpha2 } => write!(
                f,
                "invalid loss weights: alpha1={alpha1}, alpha2={alpha2} (need both in [0,1] and alpha1+alpha2 <= 1)"
            ),
            Error::NegativeMargin(m) => write!(f, "negative triplet margin {m}"),
            Error::DimMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::InvalidSpec(msg) => write!(f, "invalid spec: {msg}"),
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::BadBatchSize {
                batch_size,
                dataset_len,
            } => write!(
                f,
                "batch size {batch_size} invalid for dataset of {dataset_len} points (need 2 <= batch <= n)"
            ),
            Error::NotEnoughEmbeddings(n) => {
                write!(f, "collapse monitor needs >= 2 embeddings, got {n}")
            }
            Error::BadKnnInput { k, train_len } => write!(
                f,
                "k-NN needs a nonempty reference set with k <= len (k={k}, len={train_len})"
            ),
            Error::SingleClassProbe => {
                write!(f, "linear probe needs at least two classes in the train labels")
            }
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::TrainingDiverged { epoch, batch } => write!(
                f,
                "training aborted: non-finite loss at epoch {epoch}, batch {batch}"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
