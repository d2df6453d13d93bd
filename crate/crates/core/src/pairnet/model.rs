use serde::{Deserialize, Serialize};

use super::layers::{
    col2im, conv_out, dense, dense_backward, im2col, matmul_backward, matmul_bias, sigmoid, KERNEL,
};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

pub const EMBEDDING_DIM: usize = 128;
/// Logits are clamped to this magnitude before the sigmoid and the loss.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `x * sigmoid(x)`; smooth, so finite differences see no kinks.
    #[default]
    Silu,
    Relu,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Silu => z * sigmoid(z),
            Activation::Relu => z.max(T::zero()),
        }
    }

    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Silu => {
                let s = sigmoid(z);
                s * (T::one() + z * (T::one() - s))
            }
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Encoder: strided 3x3 conv blocks, global average pooling, and a linear
/// projection to the 128-d embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub bands: usize,
    pub side: usize,
    pub blocks: Vec<usize>,
    pub embedding_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            bands: 4,
            side: 64,
            blocks: vec![16, 32, 64, 128],
            embedding_dim: EMBEDDING_DIM,
            activation: Activation::Silu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairNetConfig {
    pub encoder: EncoderConfig,
    /// Width of the hidden layer of the two-layer comparison head.
    pub head_hidden: usize,
}

impl Default for PairNetConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            head_hidden: 64,
        }
    }
}

impl PairNetConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        if e.embedding_dim != EMBEDDING_DIM {
            return Err(Error::invalid(format!(
                "embedding_dim must be {EMBEDDING_DIM}, got {}",
                e.embedding_dim
            )));
        }
        if e.blocks.is_empty() || e.blocks.contains(&0) || e.bands == 0 || self.head_hidden == 0 {
            return Err(Error::invalid(
                "encoder blocks, bands and head width must be positive",
            ));
        }
        if e.side < (1usize << e.blocks.len()) {
            return Err(Error::invalid(format!(
                "input side {} is smaller than 2^{} blocks",
                e.side,
                e.blocks.len()
            )));
        }
        Ok(())
    }

    /// Named tensors in manifest order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let e = &self.encoder;
        let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
        let mut c_in = e.bands;
        for (i, &c_out) in e.blocks.iter().enumerate() {
            shapes.push((
                format!("encoder.conv{i}.weight"),
                vec![c_out, c_in, KERNEL, KERNEL],
            ));
            shapes.push((format!("encoder.conv{i}.bias"), vec![c_out]));
            c_in = c_out;
        }
        shapes.push(("encoder.proj.weight".into(), vec![e.embedding_dim, c_in]));
        shapes.push(("encoder.proj.bias".into(), vec![e.embedding_dim]));
        shapes.push((
            "head.fc1.weight".into(),
            vec![self.head_hidden, e.embedding_dim],
        ));
        shapes.push(("head.fc1.bias".into(), vec![self.head_hidden]));
        shapes.push(("head.fc2.weight".into(), vec![1, self.head_hidden]));
        shapes.push(("head.fc2.bias".into(), vec![1]));
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(name, shape)| {
                let spec = TensorSpec {
                    name,
                    shape,
                    offset,
                };
                offset += spec.len();
                spec
            })
            .collect()
    }

    pub fn input_len(&self) -> usize {
        self.encoder.bands * self.encoder.side * self.encoder.side
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in elements within the flat parameter vector.
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pairwise comparison network. A single encoder parameter set serves both
/// branches; all parameters live in one flat vector laid out by
/// [`PairNetConfig::tensor_specs`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairNet<T> {
    config: PairNetConfig,
    specs: Vec<TensorSpec>,
    params: Vec<T>,
}

/// Activations kept from an encoder forward pass for the backward pass.
pub(crate) struct EncoderTrace<T> {
    cols: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    pooled: Vec<T>,
    pub(crate) embedding: Vec<T>,
}

pub(crate) struct HeadTrace<T> {
    diff: Vec<T>,
    hidden: Vec<T>,
    pub(crate) raw_logit: T,
}

impl<T: Scalar> PairNet<T> {
    /// All-zero parameters.
    pub fn zeros(config: PairNetConfig) -> Result<Self> {
        config.validate()?;
        let specs = config.tensor_specs();
        let n = specs.last().map(|s| s.offset + s.len()).unwrap_or(0);
        Ok(Self {
            config,
            specs,
            params: vec![T::zero(); n],
        })
    }

    /// Fan-in scaled normal weights drawn in manifest order from a SplitMix64
    /// stream; zero biases. Layers feeding the encoder activation use gain 2,
    /// the linear projection and the head use gain 1.
    pub fn init(config: PairNetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = SplitMix64::new(seed);
        let n_conv = net.config.encoder.blocks.len();
        for (t, spec) in net.specs.iter().enumerate() {
            if spec.shape.len() == 1 {
                continue;
            }
            let fan_in: usize = spec.shape[1..].iter().product();
            let gain = if t < 2 * n_conv { 2.0 } else { 1.0 };
            let std = (gain / fan_in as f64).sqrt();
            for v in &mut net.params[spec.offset..spec.offset + spec.len()] {
                *v = T::lit(rng.normal() * std);
            }
        }
        Ok(net)
    }

    pub fn from_params(config: PairNetConfig, params: Vec<T>) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape {
                layer: "parameters".into(),
                expected: vec![net.params.len()],
                found: vec![params.len()],
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &PairNetConfig {
        &self.config
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.specs
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.params[s.offset..s.offset + s.len()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let spec = self.specs.iter().find(|s| s.name == name)?.clone();
        Some(&mut self.params[spec.offset..spec.offset + spec.len()])
    }

    /// Range of the flat vector holding the (shared) encoder.
    pub fn encoder_range(&self) -> std::ops::Range<usize> {
        let head = self
            .specs
            .iter()
            .find(|s| s.name.starts_with("head."))
            .expect("head tensors");
        0..head.offset
    }

    fn slice(&self, t: usize) -> &[T] {
        let s = &self.specs[t];
        &self.params[s.offset..s.offset + s.len()]
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.config.input_len() {
            let e = &self.config.encoder;
            return Err(Error::Shape {
                layer: "encoder input".into(),
                expected: vec![e.bands, e.side, e.side],
                found: vec![input.len()],
            });
        }
        Ok(())
    }

    pub(crate) fn encode_traced(&self, input: &[T]) -> EncoderTrace<T> {
        let e = &self.config.encoder;
        let (mut c, mut h, mut w) = (e.bands, e.side, e.side);
        let mut x: Vec<T> = input.to_vec();
        let mut cols = Vec::with_capacity(e.blocks.len());
        let mut pre = Vec::with_capacity(e.blocks.len());
        for (i, &c_out) in e.blocks.iter().enumerate() {
            let (oh, ow) = (conv_out(h), conv_out(w));
            let col = im2col(&x, c, h, w);
            let z = matmul_bias(
                self.slice(2 * i),
                self.slice(2 * i + 1),
                &col,
                c * 9,
                oh * ow,
            );
            x = z.iter().map(|&v| e.activation.apply(v)).collect();
            cols.push(col);
            pre.push(z);
            (c, h, w) = (c_out, oh, ow);
        }
        let p = T::from_usize(h * w).expect("pixel count");
        let pooled: Vec<T> = x
            .chunks(h * w)
            .map(|plane| plane.iter().copied().sum::<T>() / p)
            .collect();
        let n = e.blocks.len();
        let embedding = dense(self.slice(2 * n), self.slice(2 * n + 1), &pooled);
        EncoderTrace {
            cols,
            pre,
            pooled,
            embedding,
        }
    }

    /// 128-d embedding of one prepared input.
    pub fn encode(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        Ok(self.encode_traced(input).embedding)
    }

    pub(crate) fn head_traced(&self, ea: &[T], eb: &[T]) -> HeadTrace<T> {
        let n = self.config.encoder.blocks.len();
        let diff: Vec<T> = ea.iter().zip(eb).map(|(&a, &b)| a - b).collect();
        let hidden: Vec<T> = dense(self.slice(2 * n + 2), self.slice(2 * n + 3), &diff)
            .into_iter()
            .map(T::tanh)
            .collect();
        let raw_logit = dense(self.slice(2 * n + 4), self.slice(2 * n + 5), &hidden)[0];
        HeadTrace {
            diff,
            hidden,
            raw_logit,
        }
    }

    /// Clamped logit of the head applied to `ea - eb`.
    pub fn logit_from_embeddings(&self, ea: &[T], eb: &[T]) -> T {
        clamp_logit(self.head_traced(ea, eb).raw_logit)
    }

    /// Probability that the first embedding's image is the fuller lot.
    pub fn score_embeddings(&self, ea: &[T], eb: &[T]) -> PairScore<T> {
        PairScore(sigmoid(self.logit_from_embeddings(ea, eb)))
    }

    pub fn score_pair(&self, a: &[T], b: &[T]) -> Result<PairScore<T>> {
        Ok(self.score_embeddings(&self.encode(a)?, &self.encode(b)?))
    }

    /// `(score(a, b) + 1 - score(b, a)) / 2`, antisymmetric by construction.
    pub fn symmetrized_score(&self, a: &[T], b: &[T]) -> Result<PairScore<T>> {
        let (ea, eb) = (self.encode(a)?, self.encode(b)?);
        Ok(symmetrize(
            self.score_embeddings(&ea, &eb),
            self.score_embeddings(&eb, &ea),
        ))
    }

    /// Mean BCE over `(a, b, label)` pairs and its exact gradient, accumulated
    /// into `grad` (same layout as the parameters). Returns the mean loss.
    pub fn loss_and_grad(
        &self,
        inputs: &[&[T]],
        pairs: &[(usize, usize, u8)],
        grad: &mut [T],
    ) -> Result<T> {
        if pairs.is_empty() {
            return Err(Error::invalid("gradient of an empty batch"));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape {
                layer: "gradient".into(),
                expected: vec![self.params.len()],
                found: vec![grad.len()],
            });
        }
        for x in inputs {
            self.check_input(x)?;
        }
        let scale = T::one() / T::from_usize(pairs.len()).expect("batch size");
        let mut total = T::zero();
        for &(a, b, y) in pairs {
            total += self.pair_backward(inputs[a], inputs[b], y, scale, grad);
        }
        Ok(total * scale)
    }

    /// Backward pass of one pair with loss weight `scale`; returns the unscaled loss.
    pub(crate) fn pair_backward(&self, a: &[T], b: &[T], label: u8, scale: T, grad: &mut [T]) -> T {
        let ta = self.encode_traced(a);
        let tb = self.encode_traced(b);
        let head = self.head_traced(&ta.embedding, &tb.embedding);
        let z = clamp_logit(head.raw_logit);
        let y = if label == 1 { T::one() } else { T::zero() };
        let loss = bce_from_logit(z, label);
        let limit = T::lit(LOGIT_CLAMP);
        let dz = if head.raw_logit.abs() > limit {
            T::zero()
        } else {
            (sigmoid(z) - y) * scale
        };

        let n = self.config.encoder.blocks.len();
        let spec = |t: usize| self.specs[t].offset..self.specs[t].offset + self.specs[t].len();
        let (w2, b2) = (spec(2 * n + 4), spec(2 * n + 5));
        let dhidden = {
            let (gw, gb) = split_pair(grad, w2, b2);
            dense_backward(self.slice(2 * n + 4), &head.hidden, &[dz], gw, gb)
        };
        let dpre: Vec<T> = dhidden
            .iter()
            .zip(&head.hidden)
            .map(|(&g, &t)| g * (T::one() - t * t))
            .collect();
        let ddiff = {
            let (gw, gb) = split_pair(grad, spec(2 * n + 2), spec(2 * n + 3));
            dense_backward(self.slice(2 * n + 2), &head.diff, &dpre, gw, gb)
        };
        let neg: Vec<T> = ddiff.iter().map(|&v| -v).collect();
        self.encoder_backward(&ta, &ddiff, grad);
        self.encoder_backward(&tb, &neg, grad);
        loss
    }

    fn encoder_backward(&self, trace: &EncoderTrace<T>, dembed: &[T], grad: &mut [T]) {
        let e = &self.config.encoder;
        let n = e.blocks.len();
        let spec = |t: usize| self.specs[t].offset..self.specs[t].offset + self.specs[t].len();
        let dpooled = {
            let (gw, gb) = split_pair(grad, spec(2 * n), spec(2 * n + 1));
            dense_backward(self.slice(2 * n), &trace.pooled, dembed, gw, gb)
        };
        // spatial sizes per block input
        let mut dims = Vec::with_capacity(n + 1);
        let (mut c, mut h, mut w) = (e.bands, e.side, e.side);
        dims.push((c, h, w));
        for &c_out in &e.blocks {
            (c, h, w) = (c_out, conv_out(h), conv_out(w));
            dims.push((c, h, w));
        }
        let (_, lh, lw) = dims[n];
        let p_last = lh * lw;
        let inv = T::one() / T::from_usize(p_last).expect("pixel count");
        let mut dact: Vec<T> = dpooled
            .iter()
            .flat_map(|&g| std::iter::repeat(g * inv).take(p_last))
            .collect();
        for i in (0..n).rev() {
            let (ci, hi, wi) = dims[i];
            let (_, ho, wo) = dims[i + 1];
            let dz: Vec<T> = dact
                .iter()
                .zip(&trace.pre[i])
                .map(|(&g, &z)| g * e.activation.derivative(z))
                .collect();
            let (gw, gb) = split_pair(grad, spec(2 * i), spec(2 * i + 1));
            let dcol = matmul_backward(
                self.slice(2 * i),
                &trace.cols[i],
                &dz,
                ci * 9,
                ho * wo,
                gw,
                gb,
                i > 0,
            );
            if let Some(dcol) = dcol {
                dact = col2im(&dcol, ci, hi, wi);
            }
        }
    }
}

/// Borrows two disjoint, adjacent-or-not ranges of the gradient mutably.
fn split_pair<T>(
    grad: &mut [T],
    w: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (&mut [T], &mut [T]) {
    debug_assert!(w.end <= b.start);
    let (left, right) = grad.split_at_mut(b.start);
    (&mut left[w], &mut right[..b.end - b.start])
}

pub(crate) fn clamp_logit<T: Scalar>(z: T) -> T {
    let limit = T::lit(LOGIT_CLAMP);
    z.max(-limit).min(limit)
}

/// Sigmoid output of the comparison head, in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PairScore<T>(pub T);

impl<T: Scalar> PairScore<T> {
    pub fn value(self) -> T {
        self.0
    }
}

pub fn symmetrize<T: Scalar>(ab: PairScore<T>, ba: PairScore<T>) -> PairScore<T> {
    PairScore((ab.0 + T::one() - ba.0) / T::lit(2.0))
}

/// `softplus(z) - y z`, the binary cross-entropy of `sigmoid(z)` against `y`.
pub fn bce_from_logit<T: Scalar>(z: T, label: u8) -> T {
    let z = clamp_logit(z);
    let softplus = z.max(T::zero()) + (-z.abs()).exp().ln_1p();
    if label == 1 {
        softplus - z
    } else {
        softplus
    }
}

/// BCE of a probability, evaluated through its logit.
pub fn bce_loss<T: Scalar>(p: T, label: u8) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::invalid(format!(
            "probability must be in (0, 1), got {p:?}"
        )));
    }
    if label > 1 {
        return Err(Error::invalid(format!("label must be 0 or 1, got {label}")));
    }
    Ok(bce_from_logit((p / (T::one() - p)).ln(), label))
}

/// Class 1 iff `p > threshold`.
pub fn predict_label<T: Scalar>(p: T, threshold: T) -> u8 {
    (p > threshold) as u8
}
