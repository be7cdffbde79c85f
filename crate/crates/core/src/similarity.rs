//! Pairwise similarity and dissimilarity measures consumed by the losses.
//!
//! The Jaccard ratio fuses the two projector streams: an inner-product
//! similarity from projector 1 plays the intersection, a squared Euclidean
//! distance from projector 2 plays the set difference, and their ratio
//! `s / (s + ds)` scores how much of the pair's "mass" the two hidden
//! spaces agree on.

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_normalize, Vector};

/// Default denominator guard for [`jaccard_ratio`]; also a config knob.
pub const DEFAULT_JACCARD_EPS: f64 = 1e-6;

/// The measures available to score a pair of embeddings.
///
/// `JaccardRatio` is not a pairwise map on its own: it consumes an already
/// computed `(similarity, dissimilarity)` pair, one number per projector
/// stream. See [`jaccard_ratio`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SimilarityKind {
    CosineSim,
    InnerProduct,
    SqEuclid,
    JaccardRatio,
}

/// Cosine similarity, clamped into `[-1, 1]` against rounding spill.
pub fn cosine_sim(a: &Vector, b: &Vector) -> Result<f64> {
    let na = l2_normalize(a)?;
    let nb = l2_normalize(b)?;
    Ok(dot(&na, &nb).clamp(-1.0, 1.0))
}

#[inline]
fn clamp_similarity(s: f64) -> f64 {
    if s > 0.0 {
        s
    } else {
        0.0
    }
}

/// Jaccard-style ratio of a similarity mass against its union with a
/// dissimilarity mass: `max(s,0) / (max(s,0) + ds + eps)`.
///
/// The numerator clamp keeps the measure semantics intact when the
/// inner product goes negative, and `eps` defines the doubly-degenerate
/// `s=0, ds=0` case as "no similarity" instead of `0/0`. Output is in
/// `[0, 1)`.
///
/// Panics if `ds < 0`: a negative squared distance violates metric
/// nonnegativity and means the caller fed something that is not a distance.
pub fn jaccard_ratio(s: f64, ds: f64, eps: f64) -> f64 {
    assert!(ds >= 0.0, "jaccard_ratio dissimilarity must be >= 0, got {ds}");
    let sc = clamp_similarity(s);
    sc / (sc + ds + eps)
}

/// Partials of [`jaccard_ratio`] with respect to `s` and `ds`.
///
/// On the clamped region `s <= 0` both outputs through `s` vanish; the
/// subgradient at the kink `s = 0` is taken as 0.
pub fn jaccard_ratio_grad(s: f64, ds: f64, eps: f64) -> (f64, f64) {
    assert!(ds >= 0.0, "jaccard_ratio dissimilarity must be >= 0, got {ds}");
    let sc = clamp_similarity(s);
    let denom = sc + ds + eps;
    let d_ds = -sc / (denom * denom);
    let d_s = if s > 0.0 { (ds + eps) / (denom * denom) } else { 0.0 };
    (d_s, d_ds)
}
