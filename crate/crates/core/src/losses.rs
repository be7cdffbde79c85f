//! The loss family with analytic gradients.
//!
//! Five losses are provided: the margin triplet loss, temperature-scaled
//! InfoNCE, a Jaccard triplet loss, its smooth contrastive form, and the
//! combined three-term objective that mixes per-stream InfoNCE with the
//! Jaccard contrastive term. Score-level losses return gradients with
//! respect to their scalar scores; embedding-level losses return gradients
//! with respect to every input embedding, keyed by sample role and
//! projector stream.
//!
//! The [`gradcheck`] submodule holds the central finite-difference harness
//! used by both the test suite and the `verify` command.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::{dot, log_sum_exp, sq_euclid, Vector};
use crate::similarity::{jaccard_ratio, jaccard_ratio_grad};

/// Scores for one anchor under a single similarity stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatchScores {
    /// Anchor–positive score.
    pub s_pos: f64,
    /// Anchor–negative scores, one per negative key.
    pub s_neg: Vec<f64>,
    /// Temperature; divides every score before exponentiation.
    pub tau: f64,
}

impl ContrastiveBatchScores {
    pub fn new(s_pos: f64, s_neg: Vec<f64>, tau: f64) -> Self {
        let scores = ContrastiveBatchScores { s_pos, s_neg, tau };
        scores.check();
        scores
    }

    fn check(&self) {
        assert!(!self.s_neg.is_empty(), "need at least one negative score");
        assert!(self.tau > 0.0, "temperature must be positive, got {}", self.tau);
        assert!(
            self.s_pos.is_finite() && self.s_neg.iter().all(|s| s.is_finite()),
            "scores must be finite"
        );
    }
}

/// Scores for one anchor under both projector streams: inner products from
/// projector 1, squared distances from projector 2.
#[derive(Debug, Clone, PartialEq)]
pub struct JaccardBatchScores {
    pub s1_pos: f64,
    pub s1_neg: Vec<f64>,
    pub ds2_pos: f64,
    pub ds2_neg: Vec<f64>,
    pub tau: f64,
}

impl JaccardBatchScores {
    pub fn new(s1_pos: f64, s1_neg: Vec<f64>, ds2_pos: f64, ds2_neg: Vec<f64>, tau: f64) -> Self {
        let scores = JaccardBatchScores {
            s1_pos,
            s1_neg,
            ds2_pos,
            ds2_neg,
            tau,
        };
        scores.check();
        scores
    }

    fn check(&self) {
        assert!(!self.s1_neg.is_empty(), "need at least one negative score");
        assert_eq!(
            self.s1_neg.len(),
            self.ds2_neg.len(),
            "similarity and dissimilarity negative lists must align"
        );
        assert!(self.tau > 0.0, "temperature must be positive, got {}", self.tau);
        assert!(self.ds2_pos >= 0.0, "squared distances must be >= 0");
        assert!(self.ds2_neg.iter().all(|&d| d >= 0.0), "squared distances must be >= 0");
    }

    pub fn num_negatives(&self) -> usize {
        self.s1_neg.len()
    }
}

/// Mixing weights of the combined objective. The third term's weight is
/// `1 - alpha1 - alpha2` and must stay nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl LossWeights {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        let w = LossWeights { alpha1, alpha2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.alpha1)
            && (0.0..=1.0).contains(&self.alpha2)
            && self.alpha1 + self.alpha2 <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLossWeights {
                alpha1: self.alpha1,
                alpha2: self.alpha2,
            })
        }
    }

    /// Weight of the Jaccard contrastive term.
    pub fn third(&self) -> f64 {
        1.0 - self.alpha1 - self.alpha2
    }
}

impl Default for LossWeights {
    /// Equal thirds.
    fn default() -> Self {
        LossWeights {
            alpha1: 1.0 / 3.0,
            alpha2: 1.0 / 3.0,
        }
    }
}

/// Gradients of a score-level loss with respect to its scalar scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLossOutput {
    pub value: f64,
    pub grad_pos: f64,
    pub grad_neg: Vec<f64>,
}

/// Gradients of a Jaccard loss with respect to both score streams.
#[derive(Debug, Clone, PartialEq)]
pub struct JaccardLossOutput {
    pub value: f64,
    pub grad_s1_pos: f64,
    pub grad_s1_neg: Vec<f64>,
    pub grad_ds2_pos: f64,
    pub grad_ds2_neg: Vec<f64>,
}

/// Gradients with respect to every embedding of one projector stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamGrads {
    pub anchor: Vector,
    pub positive: Vector,
    pub negatives: Vec<Vector>,
}

impl StreamGrads {
    pub fn zeros(dim: usize, num_negatives: usize) -> Self {
        StreamGrads {
            anchor: Vector::zeros(dim),
            positive: Vector::zeros(dim),
            negatives: vec![Vector::zeros(dim); num_negatives],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.anchor.is_finite()
            && self.positive.is_finite()
            && self.negatives.iter().all(Vector::is_finite)
    }
}

/// An embedding-level loss value with its gradients, keyed by sample role
/// (anchor / positive / i-th negative) and projector stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub projector1: Option<StreamGrads>,
    pub projector2: Option<StreamGrads>,
}

/// The three quantities of the contrastive-bound chain and whether it held.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    /// InfoNCE value on the temperature-scaled scores.
    pub lhs: f64,
    /// Hinge of the worst negative: `max(0, max_j(s_j - s_pos))`.
    pub mid: f64,
    /// Mean zero-margin triplet value over the negatives.
    pub rhs: f64,
    pub holds: bool,
}

/// How the second InfoNCE term treats its negative keys.
///
/// `Corrected` scores projector-2 anchors against projector-2 negative
/// keys. `Literal` reproduces the mixed form in which the projector-2
/// anchor is scored against the *projector-1* negative keys; it exists for
/// side-by-side comparison and requires both hidden spaces to share a
/// dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Eq4Form {
    #[default]
    Corrected,
    Literal,
}

/// Margin triplet loss on three embeddings with `d = sq_euclid`.
///
/// Gradients are zero everywhere in the inactive branch, including the
/// hinge point itself.
pub fn triplet_loss(
    h_q: &Vector,
    h_pos: &Vector,
    h_neg: &Vector,
    margin: f64,
) -> Result<LossOutput> {
    if margin < 0.0 {
        return Err(Error::NegativeMargin(margin));
    }
    let d_pos = sq_euclid(h_q, h_pos);
    let d_neg = sq_euclid(h_q, h_neg);
    let raw = d_pos - d_neg + margin;

    let dim = h_q.dim();
    let mut grads = StreamGrads::zeros(dim, 1);
    let value = if raw > 0.0 {
        // d(d_pos)/dq = 2(q - p), d(d_neg)/dq = 2(q - n)
        grads.anchor.add_scaled(h_neg, 2.0);
        grads.anchor.add_scaled(h_pos, -2.0);
        grads.positive.add_scaled(h_pos, 2.0);
        grads.positive.add_scaled(h_q, -2.0);
        grads.negatives[0].add_scaled(h_q, 2.0);
        grads.negatives[0].add_scaled(h_neg, -2.0);
        raw
    } else {
        0.0
    };

    Ok(LossOutput {
        value,
        projector1: Some(grads),
        projector2: None,
    })
}

/// Temperature-scaled contrastive loss,
/// `-log(exp(s+/t) / (exp(s+/t) + sum_j exp(s_j/t)))`, in the stable
/// log-sum-exp form, with softmax-weighted score gradients.
pub fn infonce_loss(scores: &ContrastiveBatchScores) -> ScoreLossOutput {
    scores.check();
    let tau = scores.tau;
    let n = scores.s_neg.len();

    let mut z = Vec::with_capacity(n + 1);
    z.push(scores.s_pos / tau);
    for &s in &scores.s_neg {
        z.push(s / tau);
    }
    let lse = log_sum_exp(&z);
    let value = lse - z[0];

    // softmax over z, computed from the same shifted exponentials
    let mut grad_neg = Vec::with_capacity(n);
    let p_pos = math::exp(z[0] - lse);
    for &zj in &z[1..] {
        grad_neg.push(math::exp(zj - lse) / tau);
    }
    ScoreLossOutput {
        value,
        grad_pos: (p_pos - 1.0) / tau,
        grad_neg,
    }
}

/// Evaluates the chain `infonce >= max-hinge >= mean zero-margin triplet`
/// on the temperature-scaled scores and reports whether it held to within
/// `1e-9` slack.
pub fn mean_triplet_bound_check(scores: &ContrastiveBatchScores) -> BoundCheck {
    scores.check();
    let tau = scores.tau;
    let u_pos = scores.s_pos / tau;

    let lhs = infonce_loss(scores).value;

    let mut worst = 0.0;
    let mut acc = 0.0;
    for &s in &scores.s_neg {
        let gap = s / tau - u_pos;
        if gap > worst {
            worst = gap;
        }
        acc += if gap > 0.0 { gap } else { 0.0 };
    }
    let mid = worst;
    let rhs = acc / scores.s_neg.len() as f64;

    BoundCheck {
        lhs,
        mid,
        rhs,
        holds: lhs - mid >= -1e-9 && mid - rhs >= -1e-9,
    }
}

/// Jaccard triplet loss `-(1/N) sum_i (J+ - J_i-)` over the clamped ratio.
/// Minimizing it raises the positive pair's Jaccard similarity and lowers
/// every negative pair's. Value lies in `(-1, 1)`.
pub fn jaccard_triplet_loss(jb: &JaccardBatchScores, eps: f64) -> JaccardLossOutput {
    jb.check();
    let n = jb.num_negatives() as f64;

    let j_pos = jaccard_ratio(jb.s1_pos, jb.ds2_pos, eps);
    let (dj_pos_s, dj_pos_ds) = jaccard_ratio_grad(jb.s1_pos, jb.ds2_pos, eps);

    let mut value = -j_pos;
    let mut grad_s1_neg = Vec::with_capacity(jb.num_negatives());
    let mut grad_ds2_neg = Vec::with_capacity(jb.num_negatives());
    for (&s, &ds) in jb.s1_neg.iter().zip(jb.ds2_neg.iter()) {
        value += jaccard_ratio(s, ds, eps) / n;
        let (dj_s, dj_ds) = jaccard_ratio_grad(s, ds, eps);
        grad_s1_neg.push(dj_s / n);
        grad_ds2_neg.push(dj_ds / n);
    }

    JaccardLossOutput {
        value,
        grad_s1_pos: -dj_pos_s,
        grad_s1_neg,
        grad_ds2_pos: -dj_pos_ds,
        grad_ds2_neg,
    }
}

/// Smooth Jaccard contrastive loss: InfoNCE applied to the Jaccard ratios
/// as scores, each divided by the temperature before exponentiation.
pub fn jaccard_contrastive_loss(jb: &JaccardBatchScores, eps: f64) -> JaccardLossOutput {
    jb.check();

    let j_pos = jaccard_ratio(jb.s1_pos, jb.ds2_pos, eps);
    let j_neg: Vec<f64> = jb
        .s1_neg
        .iter()
        .zip(jb.ds2_neg.iter())
        .map(|(&s, &ds)| jaccard_ratio(s, ds, eps))
        .collect();

    let inner = infonce_loss(&ContrastiveBatchScores {
        s_pos: j_pos,
        s_neg: j_neg,
        tau: jb.tau,
    });

    let (dj_pos_s, dj_pos_ds) = jaccard_ratio_grad(jb.s1_pos, jb.ds2_pos, eps);
    let mut grad_s1_neg = Vec::with_capacity(jb.num_negatives());
    let mut grad_ds2_neg = Vec::with_capacity(jb.num_negatives());
    for (i, (&s, &ds)) in jb.s1_neg.iter().zip(jb.ds2_neg.iter()).enumerate() {
        let (dj_s, dj_ds) = jaccard_ratio_grad(s, ds, eps);
        grad_s1_neg.push(inner.grad_neg[i] * dj_s);
        grad_ds2_neg.push(inner.grad_neg[i] * dj_ds);
    }

    JaccardLossOutput {
        value: inner.value,
        grad_s1_pos: inner.grad_pos * dj_pos_s,
        grad_s1_neg,
        grad_ds2_pos: inner.grad_pos * dj_pos_ds,
        grad_ds2_neg,
    }
}

/// One sample's embeddings in both hidden spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPair {
    pub h1: Vector,
    pub h2: Vector,
}

/// The combined three-term objective for one anchor:
/// `a1 * InfoNCE(stream 1) + a2 * InfoNCE(stream 2) +
/// (1 - a1 - a2) * JaccardContrastive(stream 1 similarities, stream 2
/// distances)`. Gradients accumulate across all terms into both projector
/// streams. Terms with weight exactly zero are skipped, so setting
/// `alpha1 = 1` reproduces single-stream InfoNCE bit for bit.
pub fn combined_loss(
    anchor: &ProjectedPair,
    positive: &ProjectedPair,
    negatives: &[&ProjectedPair],
    weights: &LossWeights,
    tau: f64,
    eps: f64,
    eq4: Eq4Form,
) -> Result<LossOutput> {
    weights.validate()?;
    assert!(!negatives.is_empty(), "need at least one negative key");
    assert!(tau > 0.0, "temperature must be positive, got {tau}");

    let d1 = anchor.h1.dim();
    let d2 = anchor.h2.dim();
    if eq4 == Eq4Form::Literal && d1 != d2 {
        return Err(Error::DimMismatch {
            expected: d2,
            got: d1,
        });
    }

    let n = negatives.len();
    let w3 = weights.third();

    // Stream scores shared by the InfoNCE terms and the Jaccard term.
    let s1_pos = dot(&anchor.h1, &positive.h1);
    let s1_neg: Vec<f64> = negatives.iter().map(|k| dot(&anchor.h1, &k.h1)).collect();
    let ds2_pos = sq_euclid(&anchor.h2, &positive.h2);
    let ds2_neg: Vec<f64> = negatives
        .iter()
        .map(|k| sq_euclid(&anchor.h2, &k.h2))
        .collect();

    let mut value = 0.0;
    let mut g1 = StreamGrads::zeros(d1, n);
    let mut g2 = StreamGrads::zeros(d2, n);

    if weights.alpha1 != 0.0 {
        let out = infonce_loss(&ContrastiveBatchScores {
            s_pos: s1_pos,
            s_neg: s1_neg.clone(),
            tau,
        });
        value += weights.alpha1 * out.value;
        let c = weights.alpha1;
        g1.anchor.add_scaled(&positive.h1, c * out.grad_pos);
        g1.positive.add_scaled(&anchor.h1, c * out.grad_pos);
        for (i, k) in negatives.iter().enumerate() {
            g1.anchor.add_scaled(&k.h1, c * out.grad_neg[i]);
            g1.negatives[i].add_scaled(&anchor.h1, c * out.grad_neg[i]);
        }
    }

    if weights.alpha2 != 0.0 {
        let s2_pos = dot(&anchor.h2, &positive.h2);
        let s2_neg: Vec<f64> = match eq4 {
            Eq4Form::Corrected => negatives.iter().map(|k| dot(&anchor.h2, &k.h2)).collect(),
            Eq4Form::Literal => negatives.iter().map(|k| dot(&anchor.h2, &k.h1)).collect(),
        };
        let out = infonce_loss(&ContrastiveBatchScores {
            s_pos: s2_pos,
            s_neg: s2_neg,
            tau,
        });
        value += weights.alpha2 * out.value;
        let c = weights.alpha2;
        g2.anchor.add_scaled(&positive.h2, c * out.grad_pos);
        g2.positive.add_scaled(&anchor.h2, c * out.grad_pos);
        for (i, k) in negatives.iter().enumerate() {
            match eq4 {
                Eq4Form::Corrected => {
                    g2.anchor.add_scaled(&k.h2, c * out.grad_neg[i]);
                    g2.negatives[i].add_scaled(&anchor.h2, c * out.grad_neg[i]);
                }
                Eq4Form::Literal => {
                    g2.anchor.add_scaled(&k.h1, c * out.grad_neg[i]);
                    g1.negatives[i].add_scaled(&anchor.h2, c * out.grad_neg[i]);
                }
            }
        }
    }

    if w3 != 0.0 {
        let out = jaccard_contrastive_loss(
            &JaccardBatchScores {
                s1_pos,
                s1_neg,
                ds2_pos,
                ds2_neg,
                tau,
            },
            eps,
        );
        value += w3 * out.value;

        // Inner products on stream 1.
        g1.anchor.add_scaled(&positive.h1, w3 * out.grad_s1_pos);
        g1.positive.add_scaled(&anchor.h1, w3 * out.grad_s1_pos);
        // Squared distances on stream 2: d(ds)/da = 2(a-k), d(ds)/dk = -2(a-k).
        let c_pos = 2.0 * w3 * out.grad_ds2_pos;
        g2.anchor.add_scaled(&anchor.h2, c_pos);
        g2.anchor.add_scaled(&positive.h2, -c_pos);
        g2.positive.add_scaled(&anchor.h2, -c_pos);
        g2.positive.add_scaled(&positive.h2, c_pos);

        for (i, k) in negatives.iter().enumerate() {
            g1.anchor.add_scaled(&k.h1, w3 * out.grad_s1_neg[i]);
            g1.negatives[i].add_scaled(&anchor.h1, w3 * out.grad_s1_neg[i]);

            let c_neg = 2.0 * w3 * out.grad_ds2_neg[i];
            g2.anchor.add_scaled(&anchor.h2, c_neg);
            g2.anchor.add_scaled(&k.h2, -c_neg);
            g2.negatives[i].add_scaled(&anchor.h2, -c_neg);
            g2.negatives[i].add_scaled(&k.h2, c_neg);
        }
    }

    Ok(LossOutput {
        value,
        projector1: Some(g1),
        projector2: Some(g2),
    })
}

pub mod gradcheck {
    //! Central finite-difference verification of every analytic gradient.
    //!
    //! Each check returns the worst relative error across all input
    //! coordinates. Callers are responsible for sampling inputs away from
    //! hinge and clamp kinks, where one-sided derivatives make finite
    //! differences meaningless.

    use super::*;

    /// Relative error with a floor, so near-zero pairs compare absolutely.
    pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
        let scale = f64::max(1e-6, f64::max(math::abs(analytic), math::abs(numeric)));
        math::abs(analytic - numeric) / scale
    }

    /// Worst relative error between `analytic` and central finite
    /// differences of `f` at `x`. The step must sit in `[1e-7, 1e-4]`.
    pub fn max_rel_error<F>(f: F, x: &[f64], analytic: &[f64], h: f64) -> f64
    where
        F: Fn(&[f64]) -> f64,
    {
        assert!((1e-7..=1e-4).contains(&h), "step {h} outside [1e-7, 1e-4]");
        assert_eq!(x.len(), analytic.len(), "gradient shape mismatch");
        let mut buf = x.to_vec();
        let mut worst = 0.0;
        for i in 0..x.len() {
            buf[i] = x[i] + h;
            let fp = f(&buf);
            buf[i] = x[i] - h;
            let fm = f(&buf);
            buf[i] = x[i];
            let numeric = (fp - fm) / (2.0 * h);
            let err = rel_err(analytic[i], numeric);
            if err > worst {
                worst = err;
            }
        }
        worst
    }

    fn flatten(vectors: &[&Vector]) -> Vec<f64> {
        let mut out = Vec::new();
        for v in vectors {
            out.extend_from_slice(v.as_slice());
        }
        out
    }

    pub fn check_triplet(h_q: &Vector, h_pos: &Vector, h_neg: &Vector, margin: f64, h: f64) -> f64 {
        let dim = h_q.dim();
        let x = flatten(&[h_q, h_pos, h_neg]);
        let out = triplet_loss(h_q, h_pos, h_neg, margin).expect("valid margin");
        let g = out.projector1.expect("triplet carries stream-1 grads");
        let analytic = flatten(&[&g.anchor, &g.positive, &g.negatives[0]]);
        max_rel_error(
            |x| {
                let q = Vector::new(x[0..dim].to_vec());
                let p = Vector::new(x[dim..2 * dim].to_vec());
                let n = Vector::new(x[2 * dim..3 * dim].to_vec());
                triplet_loss(&q, &p, &n, margin).expect("valid margin").value
            },
            &x,
            &analytic,
            h,
        )
    }

    pub fn check_infonce(scores: &ContrastiveBatchScores, h: f64) -> f64 {
        let out = infonce_loss(scores);
        let mut x = vec![scores.s_pos];
        x.extend_from_slice(&scores.s_neg);
        let mut analytic = vec![out.grad_pos];
        analytic.extend_from_slice(&out.grad_neg);
        let tau = scores.tau;
        max_rel_error(
            |x| {
                infonce_loss(&ContrastiveBatchScores {
                    s_pos: x[0],
                    s_neg: x[1..].to_vec(),
                    tau,
                })
                .value
            },
            &x,
            &analytic,
            h,
        )
    }

    fn flatten_jaccard(jb: &JaccardBatchScores) -> Vec<f64> {
        let mut x = vec![jb.s1_pos];
        x.extend_from_slice(&jb.s1_neg);
        x.push(jb.ds2_pos);
        x.extend_from_slice(&jb.ds2_neg);
        x
    }

    fn unflatten_jaccard(x: &[f64], n: usize, tau: f64) -> JaccardBatchScores {
        JaccardBatchScores {
            s1_pos: x[0],
            s1_neg: x[1..1 + n].to_vec(),
            ds2_pos: x[1 + n],
            ds2_neg: x[2 + n..].to_vec(),
            tau,
        }
    }

    fn flatten_jaccard_grads(out: &JaccardLossOutput) -> Vec<f64> {
        let mut g = vec![out.grad_s1_pos];
        g.extend_from_slice(&out.grad_s1_neg);
        g.push(out.grad_ds2_pos);
        g.extend_from_slice(&out.grad_ds2_neg);
        g
    }

    pub fn check_jaccard_triplet(jb: &JaccardBatchScores, eps: f64, h: f64) -> f64 {
        let n = jb.num_negatives();
        let tau = jb.tau;
        let out = jaccard_triplet_loss(jb, eps);
        max_rel_error(
            |x| jaccard_triplet_loss(&unflatten_jaccard(x, n, tau), eps).value,
            &flatten_jaccard(jb),
            &flatten_jaccard_grads(&out),
            h,
        )
    }

    pub fn check_jaccard_contrastive(jb: &JaccardBatchScores, eps: f64, h: f64) -> f64 {
        let n = jb.num_negatives();
        let tau = jb.tau;
        let out = jaccard_contrastive_loss(jb, eps);
        max_rel_error(
            |x| jaccard_contrastive_loss(&unflatten_jaccard(x, n, tau), eps).value,
            &flatten_jaccard(jb),
            &flatten_jaccard_grads(&out),
            h,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn check_combined(
        anchor: &ProjectedPair,
        positive: &ProjectedPair,
        negatives: &[&ProjectedPair],
        weights: &LossWeights,
        tau: f64,
        eps: f64,
        eq4: Eq4Form,
        h: f64,
    ) -> f64 {
        let d1 = anchor.h1.dim();
        let d2 = anchor.h2.dim();
        let n = negatives.len();

        let mut refs: Vec<&Vector> = vec![&anchor.h1, &anchor.h2, &positive.h1, &positive.h2];
        for k in negatives {
            refs.push(&k.h1);
            refs.push(&k.h2);
        }
        let x = flatten(&refs);

        let out = combined_loss(anchor, positive, negatives, weights, tau, eps, eq4)
            .expect("valid combined-loss inputs");
        let g1 = out.projector1.expect("combined carries stream-1 grads");
        let g2 = out.projector2.expect("combined carries stream-2 grads");
        let mut grad_refs: Vec<&Vector> = vec![&g1.anchor, &g2.anchor, &g1.positive, &g2.positive];
        for i in 0..n {
            grad_refs.push(&g1.negatives[i]);
            grad_refs.push(&g2.negatives[i]);
        }
        let analytic = flatten(&grad_refs);

        let rebuild = |x: &[f64]| -> f64 {
            let pair_len = d1 + d2;
            let pair_at = |idx: usize| -> ProjectedPair {
                let base = idx * pair_len;
                ProjectedPair {
                    h1: Vector::new(x[base..base + d1].to_vec()),
                    h2: Vector::new(x[base + d1..base + pair_len].to_vec()),
                }
            };
            let anchor = pair_at(0);
            let positive = pair_at(1);
            let negatives: Vec<ProjectedPair> = (0..n).map(|i| pair_at(2 + i)).collect();
            let neg_refs: Vec<&ProjectedPair> = negatives.iter().collect();
            combined_loss(&anchor, &positive, &neg_refs, weights, tau, eps, eq4)
                .expect("valid combined-loss inputs")
                .value
        };

        max_rel_error(rebuild, &x, &analytic, h)
    }
}
