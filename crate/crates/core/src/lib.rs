//! Contrastive self-supervised learning on a desk-scale budget.
//!
//! The crate provides the full loss family for similarity-based
//! self-supervision — margin triplet, temperature-scaled InfoNCE, and a
//! Jaccard-ratio loss that fuses two projector streams — together with
//! analytic gradients, a small trainable encoder/bi-projector stack,
//! synthetic manifold datasets, an optimizer loop, and k-NN / linear-probe
//! evaluation of frozen representations.
//!
//! Everything is written against `alloc` only; transcendental functions come
//! from `libm`, so results are bit-reproducible across platforms. IO, file
//! formats, and the experiment CLI live in the companion `ssl-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub(crate) mod math;
pub mod model;
pub mod numerics;
pub mod similarity;
pub mod train;

pub use error::{Error, Result};
pub use numerics::{Matrix, Rng, Vector};
