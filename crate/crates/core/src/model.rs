//! The trainable stack: a shared MLP encoder feeding two projector heads.
//!
//! Both heads end in a differentiable L2-normalization layer, so every
//! embedding leaves `forward` with unit norm and backpropagation carries the
//! normalization Jacobian `(I - h h^T) / ||z||`. The encoder trunk is shared:
//! gradients arriving through either head accumulate into the same encoder
//! parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::{combined_loss, Eq4Form, LossWeights, ProjectedPair};
use crate::numerics::{dot, Matrix, Rng, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    ReLU,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(&self, y: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if y > 0.0 {
                    y
                } else {
                    0.0
                }
            }
            Activation::Tanh => crate::math::tanh(y),
        }
    }

    /// Derivative expressed through the *activated* value.
    #[inline]
    fn deriv_from_output(&self, a: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Shape of one MLP: affine layers between consecutive widths, the chosen
/// activation on every hidden layer, a linear last layer, and optionally a
/// final L2 normalization.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub final_normalize: bool,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, final_normalize: bool) -> Self {
        MlpSpec {
            layer_widths,
            activation,
            final_normalize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(String::from(
                "MLP needs at least input and output widths",
            )));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidSpec(String::from("layer widths must be positive")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

/// A dense MLP with explicit parameter storage.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    spec: MlpSpec,
    weights: Vec<Matrix>,
    biases: Vec<Vector>,
}

/// Per-sample record of a forward pass, enough to replay it backward.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// `activations[0]` is the input; `activations[l+1]` is layer `l`'s
    /// activated output (raw affine output for the last layer).
    activations: Vec<Vector>,
    /// `||z||` of the pre-normalization output when the spec normalizes.
    norm: Option<f64>,
    output: Vector,
}

impl Mlp {
    /// He-initialized parameters: `W ~ N(0, 2/fan_in)`, zero biases.
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::with_capacity(spec.num_layers());
        let mut biases = Vec::with_capacity(spec.num_layers());
        for l in 0..spec.num_layers() {
            let fan_in = spec.layer_widths[l];
            let fan_out = spec.layer_widths[l + 1];
            let std = crate::math::sqrt(2.0 / fan_in as f64);
            let data = rng.normal_vector(fan_out * fan_in, 0.0, std);
            weights.push(Matrix::from_row_major(fan_out, fan_in, data.into_vec()));
            biases.push(Vector::zeros(fan_out));
        }
        Ok(Mlp {
            spec,
            weights,
            biases,
        })
    }

    /// Rebuilds an MLP from explicit parameters (checkpoint loading, tests).
    pub fn from_parts(spec: MlpSpec, weights: Vec<Matrix>, biases: Vec<Vector>) -> Result<Self> {
        let mlp = Mlp {
            spec,
            weights,
            biases,
        };
        mlp.validate()?;
        Ok(mlp)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.weights.len() != self.spec.num_layers() || self.biases.len() != self.spec.num_layers()
        {
            return Err(Error::InvalidSpec(String::from(
                "parameter count does not match layer count",
            )));
        }
        for l in 0..self.spec.num_layers() {
            let (rows, cols) = (self.spec.layer_widths[l + 1], self.spec.layer_widths[l]);
            if self.weights[l].rows() != rows || self.weights[l].cols() != cols {
                return Err(Error::InvalidSpec(format!(
                    "layer {l} weight shape {}x{} != {rows}x{cols}",
                    self.weights[l].rows(),
                    self.weights[l].cols()
                )));
            }
            if self.biases[l].dim() != rows {
                return Err(Error::InvalidSpec(format!("layer {l} bias dim mismatch")));
            }
            if !self.weights[l].is_finite() || !self.biases[l].is_finite() {
                return Err(Error::InvalidSpec(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Forward pass that records everything `backward` needs.
    pub fn trace(&self, x: &Vector) -> Result<(Vector, MlpTrace)> {
        if x.dim() != self.spec.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.spec.input_dim(),
                got: x.dim(),
            });
        }
        let num_layers = self.spec.num_layers();
        let mut activations = Vec::with_capacity(num_layers + 1);
        activations.push(x.clone());
        for l in 0..num_layers {
            let mut y = self.weights[l].matvec(&activations[l]);
            y.add_scaled(&self.biases[l], 1.0);
            if l + 1 < num_layers {
                let data: Vec<f64> = y.iter().map(|&v| self.spec.activation.apply(v)).collect();
                activations.push(Vector::new(data));
            } else {
                activations.push(y);
            }
        }

        let raw = activations[num_layers].clone();
        let (output, norm) = if self.spec.final_normalize {
            let n = crate::numerics::norm(&raw);
            if n == 0.0 {
                return Err(Error::ZeroNorm);
            }
            let mut h = raw;
            h.scale(1.0 / n);
            (h, Some(n))
        } else {
            (raw, None)
        };

        Ok((
            output.clone(),
            MlpTrace {
                activations,
                norm,
                output,
            },
        ))
    }

    /// Forward pass, output only.
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        self.trace(x).map(|(out, _)| out)
    }

    /// Replays a trace backward. Accumulates parameter gradients into
    /// `grads` and returns the gradient with respect to the input.
    pub fn backward(&self, trace: &MlpTrace, g_output: &Vector, grads: &mut MlpGradients) -> Vector {
        assert_eq!(
            g_output.dim(),
            self.spec.output_dim(),
            "output gradient dim {} != {}",
            g_output.dim(),
            self.spec.output_dim()
        );
        assert_eq!(
            grads.d_weights.len(),
            self.weights.len(),
            "gradient buffer layer count mismatch"
        );

        let num_layers = self.spec.num_layers();
        let mut g = g_output.clone();

        if let Some(norm) = trace.norm {
            // h = z/||z||  =>  g_z = (g_h - h (h . g_h)) / ||z||
            let h = &trace.output;
            let proj = dot(h, &g);
            let mut g_z = g;
            g_z.add_scaled(h, -proj);
            g_z.scale(1.0 / norm);
            g = g_z;
        }

        for l in (0..num_layers).rev() {
            let g_y = if l + 1 < num_layers {
                let activated = &trace.activations[l + 1];
                let data: Vec<f64> = g
                    .iter()
                    .zip(activated.iter())
                    .map(|(&gi, &ai)| gi * self.spec.activation.deriv_from_output(ai))
                    .collect();
                Vector::new(data)
            } else {
                g
            };
            grads.d_weights[l].add_scaled_outer(&g_y, &trace.activations[l], 1.0);
            grads.d_biases[l].add_scaled(&g_y, 1.0);
            g = self.weights[l].tr_matvec(&g_y);
        }
        g
    }

    /// Parameter blocks in a fixed order: `(W0, b0, W1, b1, ...)`.
    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(self.biases.iter()) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }
}

/// Gradient buffers mirroring one MLP's parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpGradients {
    d_weights: Vec<Matrix>,
    d_biases: Vec<Vector>,
}

impl MlpGradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGradients {
            d_weights: mlp
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            d_biases: mlp.biases.iter().map(|b| Vector::zeros(b.dim())).collect(),
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in &mut self.d_weights {
            for x in w.as_mut_slice() {
                *x *= c;
            }
        }
        for b in &mut self.d_biases {
            b.scale(c);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.d_weights
            .iter()
            .all(|w| w.as_slice().iter().all(|&x| x == 0.0))
            && self
                .d_biases
                .iter()
                .all(|b| b.iter().all(|&x| x == 0.0))
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.d_weights.len());
        for (w, b) in self.d_weights.iter().zip(self.d_biases.iter()) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.d_weights.len());
        for (w, b) in self.d_weights.iter_mut().zip(self.d_biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }
}

/// Which projector head produced an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ProjectorId {
    One,
    Two,
}

/// A unit-norm vector in one of the hidden spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vector,
    pub projector: ProjectorId,
    pub sample_id: usize,
}

impl Embedding {
    pub fn with_sample_id(mut self, sample_id: usize) -> Self {
        self.sample_id = sample_id;
        self
    }
}

/// Shape description for the whole stack.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiProjectorSpec {
    pub encoder: MlpSpec,
    pub projector1: MlpSpec,
    pub projector2: MlpSpec,
}

impl BiProjectorSpec {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.projector1.validate()?;
        self.projector2.validate()?;
        let feat = self.encoder.output_dim();
        if self.projector1.input_dim() != feat || self.projector2.input_dim() != feat {
            return Err(Error::InvalidSpec(format!(
                "projector input widths ({}, {}) must equal encoder output width {feat}",
                self.projector1.input_dim(),
                self.projector2.input_dim()
            )));
        }
        if !self.projector1.final_normalize || !self.projector2.final_normalize {
            return Err(Error::InvalidSpec(String::from(
                "projector outputs must be L2-normalized",
            )));
        }
        Ok(())
    }
}

/// Shared encoder plus two disjoint projector heads.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiProjectorModel {
    encoder: Mlp,
    projector1: Mlp,
    projector2: Mlp,
}

/// Recorded activations for one sample through the trunk and both heads.
#[derive(Debug, Clone)]
pub struct GradientTape {
    encoder: MlpTrace,
    projector1: MlpTrace,
    projector2: MlpTrace,
}

/// Gradients for every parameter of the stack.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParameterGradients {
    pub encoder: MlpGradients,
    pub projector1: MlpGradients,
    pub projector2: MlpGradients,
}

impl ParameterGradients {
    pub fn zeros_like(model: &BiProjectorModel) -> Self {
        ParameterGradients {
            encoder: MlpGradients::zeros_like(&model.encoder),
            projector1: MlpGradients::zeros_like(&model.projector1),
            projector2: MlpGradients::zeros_like(&model.projector2),
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.encoder.scale(c);
        self.projector1.scale(c);
        self.projector2.scale(c);
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.blocks();
        out.extend(self.projector1.blocks());
        out.extend(self.projector2.blocks());
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.blocks_mut();
        out.extend(self.projector1.blocks_mut());
        out.extend(self.projector2.blocks_mut());
        out
    }
}

impl BiProjectorModel {
    /// He-initializes the stack; each component draws from its own named
    /// substream, so the two projectors start asymmetric by construction.
    pub fn init(spec: &BiProjectorSpec, rng: &Rng) -> Result<Self> {
        spec.validate()?;
        let encoder = Mlp::init(spec.encoder.clone(), &mut rng.substream("init/encoder"))?;
        let projector1 = Mlp::init(spec.projector1.clone(), &mut rng.substream("init/projector1"))?;
        let projector2 = Mlp::init(spec.projector2.clone(), &mut rng.substream("init/projector2"))?;
        Ok(BiProjectorModel {
            encoder,
            projector1,
            projector2,
        })
    }

    pub fn from_parts(encoder: Mlp, projector1: Mlp, projector2: Mlp) -> Result<Self> {
        let model = BiProjectorModel {
            encoder,
            projector1,
            projector2,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.projector1.validate()?;
        self.projector2.validate()?;
        BiProjectorSpec {
            encoder: self.encoder.spec.clone(),
            projector1: self.projector1.spec.clone(),
            projector2: self.projector2.spec.clone(),
        }
        .validate()
    }

    pub fn spec(&self) -> BiProjectorSpec {
        BiProjectorSpec {
            encoder: self.encoder.spec.clone(),
            projector1: self.projector1.spec.clone(),
            projector2: self.projector2.spec.clone(),
        }
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn projector(&self, id: ProjectorId) -> &Mlp {
        match id {
            ProjectorId::One => &self.projector1,
            ProjectorId::Two => &self.projector2,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.spec.input_dim()
    }

    /// Runs the trunk once and both heads on the shared features.
    pub fn forward(&self, x: &Vector) -> Result<(Embedding, Embedding, GradientTape)> {
        let (feat, enc_trace) = self.encoder.trace(x)?;
        let (h1, p1_trace) = self.projector1.trace(&feat)?;
        let (h2, p2_trace) = self.projector2.trace(&feat)?;
        Ok((
            Embedding {
                vector: h1,
                projector: ProjectorId::One,
                sample_id: 0,
            },
            Embedding {
                vector: h2,
                projector: ProjectorId::Two,
                sample_id: 0,
            },
            GradientTape {
                encoder: enc_trace,
                projector1: p1_trace,
                projector2: p2_trace,
            },
        ))
    }

    /// Lightweight forward: `(encoder features, h1, h2)` without a tape.
    pub fn embed(&self, x: &Vector) -> Result<(Vector, Vector, Vector)> {
        let feat = self.encoder.apply(x)?;
        let h1 = self.projector1.apply(&feat)?;
        let h2 = self.projector2.apply(&feat)?;
        Ok((feat, h1, h2))
    }

    /// Accumulates parameter gradients for one sample given the loss
    /// gradients with respect to its two embeddings. Missing head gradients
    /// leave that head (and its contribution to the trunk) untouched.
    pub fn backward_sample(
        &self,
        tape: &GradientTape,
        g_h1: Option<&Vector>,
        g_h2: Option<&Vector>,
        grads: &mut ParameterGradients,
    ) {
        if g_h1.is_none() && g_h2.is_none() {
            return;
        }
        let feat_dim = self.encoder.spec.output_dim();
        let mut g_feat = Vector::zeros(feat_dim);
        if let Some(g) = g_h1 {
            let g_in = self
                .projector1
                .backward(&tape.projector1, g, &mut grads.projector1);
            g_feat.add_scaled(&g_in, 1.0);
        }
        if let Some(g) = g_h2 {
            let g_in = self
                .projector2
                .backward(&tape.projector2, g, &mut grads.projector2);
            g_feat.add_scaled(&g_in, 1.0);
        }
        self.encoder.backward(&tape.encoder, &g_feat, &mut grads.encoder);
    }

    /// Named parameter blocks, aligned with [`ParameterGradients::blocks`].
    pub fn named_param_blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (name, mlp) in [
            ("encoder", &mut self.encoder),
            ("projector1", &mut self.projector1),
            ("projector2", &mut self.projector2),
        ] {
            for (l, block) in mlp.param_blocks_mut().into_iter().enumerate() {
                let kind = if l % 2 == 0 { "weight" } else { "bias" };
                out.push((format!("{name}.{kind}[{}]", l / 2), block));
            }
        }
        out
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.param_blocks();
        out.extend(self.projector1.param_blocks());
        out.extend(self.projector2.param_blocks());
        out
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.param_blocks_mut();
        out.extend(self.projector1.param_blocks_mut());
        out.extend(self.projector2.param_blocks_mut());
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }
}

/// Loss value and accumulated parameter gradients for a single
/// anchor/positive/negatives tuple fed through the full stack with the
/// combined objective.
#[allow(clippy::too_many_arguments)]
pub fn combined_loss_through_model(
    model: &BiProjectorModel,
    anchor_x: &Vector,
    positive_x: &Vector,
    negative_xs: &[Vector],
    weights: &LossWeights,
    tau: f64,
    eps: f64,
    eq4: Eq4Form,
    grads: &mut ParameterGradients,
) -> Result<f64> {
    let (a1, a2, a_tape) = model.forward(anchor_x)?;
    let (p1, p2, p_tape) = model.forward(positive_x)?;
    let mut neg_pairs = Vec::with_capacity(negative_xs.len());
    let mut neg_tapes = Vec::with_capacity(negative_xs.len());
    for x in negative_xs {
        let (n1, n2, tape) = model.forward(x)?;
        neg_pairs.push(ProjectedPair {
            h1: n1.vector,
            h2: n2.vector,
        });
        neg_tapes.push(tape);
    }

    let anchor = ProjectedPair {
        h1: a1.vector,
        h2: a2.vector,
    };
    let positive = ProjectedPair {
        h1: p1.vector,
        h2: p2.vector,
    };
    let neg_refs: Vec<&ProjectedPair> = neg_pairs.iter().collect();
    let out = combined_loss(&anchor, &positive, &neg_refs, weights, tau, eps, eq4)?;

    let g1 = out.projector1.as_ref().expect("combined carries stream 1");
    let g2 = out.projector2.as_ref().expect("combined carries stream 2");
    model.backward_sample(&a_tape, Some(&g1.anchor), Some(&g2.anchor), grads);
    model.backward_sample(&p_tape, Some(&g1.positive), Some(&g2.positive), grads);
    for (i, tape) in neg_tapes.iter().enumerate() {
        model.backward_sample(tape, Some(&g1.negatives[i]), Some(&g2.negatives[i]), grads);
    }
    Ok(out.value)
}

/// End-to-end gradient check: analytic parameter gradients of the combined
/// loss against central finite differences over every parameter. Returns the
/// worst relative error.
#[allow(clippy::too_many_arguments)]
pub fn param_grad_check(
    model: &BiProjectorModel,
    anchor_x: &Vector,
    positive_x: &Vector,
    negative_xs: &[Vector],
    weights: &LossWeights,
    tau: f64,
    eps: f64,
    eq4: Eq4Form,
    h: f64,
) -> Result<f64> {
    assert!((1e-7..=1e-4).contains(&h), "step {h} outside [1e-7, 1e-4]");
    let mut grads = ParameterGradients::zeros_like(model);
    combined_loss_through_model(
        model, anchor_x, positive_x, negative_xs, weights, tau, eps, eq4, &mut grads,
    )?;

    let mut probe = model.clone();
    let num_blocks = probe.param_blocks().len();
    let mut worst = 0.0;
    for block_idx in 0..num_blocks {
        let block_len = probe.param_blocks()[block_idx].len();
        for i in 0..block_len {
            let original = probe.param_blocks()[block_idx][i];

            probe.param_blocks_mut()[block_idx][i] = original + h;
            let mut sink = ParameterGradients::zeros_like(&probe);
            let f_plus = combined_loss_through_model(
                &probe, anchor_x, positive_x, negative_xs, weights, tau, eps, eq4, &mut sink,
            )?;

            probe.param_blocks_mut()[block_idx][i] = original - h;
            let mut sink = ParameterGradients::zeros_like(&probe);
            let f_minus = combined_loss_through_model(
                &probe, anchor_x, positive_x, negative_xs, weights, tau, eps, eq4, &mut sink,
            )?;

            probe.param_blocks_mut()[block_idx][i] = original;

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let analytic = grads.blocks()[block_idx][i];
            let err = crate::losses::gradcheck::rel_err(analytic, numeric);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm;

    fn small_spec() -> BiProjectorSpec {
        BiProjectorSpec {
            encoder: MlpSpec::new(vec![2, 8, 4], Activation::ReLU, false),
            projector1: MlpSpec::new(vec![4, 3], Activation::ReLU, true),
            projector2: MlpSpec::new(vec![4, 3], Activation::ReLU, true),
        }
    }

    #[test]
    fn init_is_deterministic_and_heads_differ() {
        let rng = Rng::new(42);
        let a = BiProjectorModel::init(&small_spec(), &rng).unwrap();
        let b = BiProjectorModel::init(&small_spec(), &rng).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.projector1, a.projector2, "heads must start asymmetric");
    }

    #[test]
    fn init_weight_std_tracks_he_scheme() {
        let spec = MlpSpec::new(vec![100, 400], Activation::ReLU, false);
        let mlp = Mlp::init(spec, &mut Rng::new(7)).unwrap();
        let w = &mlp.weights[0];
        let n = w.as_slice().len() as f64;
        let mean: f64 = w.as_slice().iter().sum::<f64>() / n;
        let var: f64 = w.as_slice().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = crate::math::sqrt(var);
        let expected = crate::math::sqrt(2.0 / 100.0);
        assert!(
            (std - expected).abs() / expected < 0.1,
            "std {std} vs he {expected}"
        );
    }

    #[test]
    fn forward_embeddings_are_unit_norm_and_pure() {
        let model = BiProjectorModel::init(&small_spec(), &Rng::new(3)).unwrap();
        let x = Vector::new(vec![0.7, -1.2]);
        let (h1, h2, _) = model.forward(&x).unwrap();
        assert!((norm(&h1.vector) - 1.0).abs() < 1e-9);
        assert!((norm(&h2.vector) - 1.0).abs() < 1e-9);
        assert_eq!(h1.projector, ProjectorId::One);
        assert_eq!(h2.projector, ProjectorId::Two);

        let (h1b, h2b, _) = model.forward(&x).unwrap();
        assert_eq!(h1.vector, h1b.vector);
        assert_eq!(h2.vector, h2b.vector);
    }

    #[test]
    fn zero_weight_model_emits_normalized_bias_image() {
        // Zero weights with a nonzero final bias: the embedding is the
        // normalized bias vector regardless of the input.
        let spec = MlpSpec::new(vec![2, 3], Activation::ReLU, true);
        let weights = vec![Matrix::zeros(3, 2)];
        let biases = vec![Vector::new(vec![3.0, 0.0, 4.0])];
        let head = Mlp::from_parts(spec, weights, biases).unwrap();

        let out_a = head.apply(&Vector::new(vec![1.0, 2.0])).unwrap();
        let out_b = head.apply(&Vector::new(vec![-5.0, 0.3])).unwrap();
        assert_eq!(out_a, out_b);
        assert_eq!(out_a.as_slice(), &[0.6, 0.0, 0.8]);
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let model = BiProjectorModel::init(&small_spec(), &Rng::new(5)).unwrap();
        let err = model.forward(&Vector::new(vec![1.0, 2.0, 3.0])).unwrap_err();
        assert_eq!(err, Error::DimMismatch { expected: 2, got: 3 });
    }

    #[test]
    fn perturbing_encoder_weight_moves_both_heads() {
        let model = BiProjectorModel::init(&small_spec(), &Rng::new(11)).unwrap();
        let x = Vector::new(vec![0.4, 0.9]);
        let (h1, h2, _) = model.forward(&x).unwrap();

        let mut bumped = model.clone();
        bumped.encoder.weights[0].as_mut_slice()[0] += 0.05;
        let (h1b, h2b, _) = bumped.forward(&x).unwrap();
        assert_ne!(h1.vector, h1b.vector, "head 1 must feel the shared trunk");
        assert_ne!(h2.vector, h2b.vector, "head 2 must feel the shared trunk");
    }

    #[test]
    fn backward_zero_gradient_means_zero_parameter_gradients() {
        let model = BiProjectorModel::init(&small_spec(), &Rng::new(13)).unwrap();
        let x = Vector::new(vec![0.4, 0.9]);
        let (_, _, tape) = model.forward(&x).unwrap();
        let mut grads = ParameterGradients::zeros_like(&model);
        let zero = Vector::zeros(3);
        model.backward_sample(&tape, Some(&zero), Some(&zero), &mut grads);
        assert!(grads.encoder.is_zero());
        assert!(grads.projector1.is_zero());
        assert!(grads.projector2.is_zero());
    }

    #[test]
    fn backward_disconnected_head_gets_exactly_zero_gradients() {
        let model = BiProjectorModel::init(&small_spec(), &Rng::new(17)).unwrap();
        let x = Vector::new(vec![-0.3, 0.8]);
        let (h1, _, tape) = model.forward(&x).unwrap();
        let mut grads = ParameterGradients::zeros_like(&model);
        model.backward_sample(&tape, Some(&h1.vector), None, &mut grads);
        assert!(!grads.encoder.is_zero());
        assert!(!grads.projector1.is_zero());
        assert!(grads.projector2.is_zero(), "untouched head must stay zero");
    }

    #[test]
    fn end_to_end_parameter_gradients_match_finite_differences() {
        let model = BiProjectorModel::init(&small_spec(), &Rng::new(19)).unwrap();
        let mut rng = Rng::new(23);
        let anchor = rng.normal_vector(2, 0.0, 1.0);
        let positive = rng.normal_vector(2, 0.0, 1.0);
        let negatives: Vec<Vector> = (0..3).map(|_| rng.normal_vector(2, 0.0, 1.0)).collect();

        for weights in [
            LossWeights::new(1.0, 0.0).unwrap(),
            LossWeights::new(0.0, 1.0).unwrap(),
            LossWeights::default(),
        ] {
            let err = param_grad_check(
                &model,
                &anchor,
                &positive,
                &negatives,
                &weights,
                0.5,
                crate::similarity::DEFAULT_JACCARD_EPS,
                Eq4Form::Corrected,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "param grad error {err} for {weights:?}");
        }
    }

    #[test]
    fn spec_validation_catches_mismatched_projector_inputs() {
        let bad = BiProjectorSpec {
            encoder: MlpSpec::new(vec![2, 8, 4], Activation::ReLU, false),
            projector1: MlpSpec::new(vec![5, 3], Activation::ReLU, true),
            projector2: MlpSpec::new(vec![4, 3], Activation::ReLU, true),
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidSpec(_))));

        let unnormalized = BiProjectorSpec {
            encoder: MlpSpec::new(vec![2, 8, 4], Activation::ReLU, false),
            projector1: MlpSpec::new(vec![4, 3], Activation::ReLU, false),
            projector2: MlpSpec::new(vec![4, 3], Activation::ReLU, true),
        };
        assert!(matches!(unnormalized.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn tanh_activation_backward_matches_finite_differences() {
        let spec = BiProjectorSpec {
            encoder: MlpSpec::new(vec![2, 6, 4], Activation::Tanh, false),
            projector1: MlpSpec::new(vec![4, 3], Activation::Tanh, true),
            projector2: MlpSpec::new(vec![4, 3], Activation::Tanh, true),
        };
        let model = BiProjectorModel::init(&spec, &Rng::new(29)).unwrap();
        let mut rng = Rng::new(31);
        let anchor = rng.normal_vector(2, 0.0, 1.0);
        let positive = rng.normal_vector(2, 0.0, 1.0);
        let negatives: Vec<Vector> = (0..2).map(|_| rng.normal_vector(2, 0.0, 1.0)).collect();
        let err = param_grad_check(
            &model,
            &anchor,
            &positive,
            &negatives,
            &LossWeights::default(),
            0.5,
            crate::similarity::DEFAULT_JACCARD_EPS,
            Eq4Form::Corrected,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "tanh param grad error {err}");
    }
}
